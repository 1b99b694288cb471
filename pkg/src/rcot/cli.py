"""``rcot`` command-line entry point.

Subcommands::

    rcot train CONFIG [--output-dir DIR] [--set key=value ...]
    rcot eval CHECKPOINT CONFIG [--output-dir DIR] [--rows N]
    rcot oracle-verify [--size N] [--trials K] [--seed S] [--inject-fault]
    rcot ablate {trc,loss,regularizer,gamma} CONFIG [--seeds ...] [--gammas ...]

Exit codes: 0 success, 1 verification failure, 2 usage or config error,
3 training divergence.

Files written by ``train`` into the output directory:

* ``config.yaml``: the fully resolved run config
* ``history.csv``: columns ``epoch, loss_frot, loss_paired, psnr, ssim,
  spectrum_gini, wallclock_s``; one row per epoch
* ``checkpoint.rcot``: map and potential parameters
* ``report.json``: final metrics (MetricReport fields for image tasks,
  oracle errors for the point tasks)

``eval`` writes ``metrics.csv`` (``psnr, ssim, spectrum_gini,
spectrum_flatness, degraded_psnr, degraded_ssim``) and ``grid.png``, an
8-bit image of ``rows`` x 4 panels: degraded, restored, target, residual
(the residual is shown offset by 0.5).
"""

from __future__ import annotations

import argparse
import contextlib
import csv
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np
import yaml

from .checkpoint import load_model, save_model
from .core import DivergenceError, RcotError
from .metrics import evaluate
from .oracle import (
    MAX_EXHAUSTIVE_SIZE, brute_force_assignment, c_transform_discrete, dual_gap,
    solve_assignment,
)
from .tasks import build_task, dump_run_config, eval_pairs, load_run_config, run_config_from_dict
from .train import HISTORY_COLUMNS, FitResult, TrainState, fit

log = logging.getLogger(__name__)

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_DIVERGED = 0, 1, 2, 3
METRIC_COLUMNS = ("psnr", "ssim", "spectrum_gini", "spectrum_flatness", "degraded_psnr",
                  "degraded_ssim")
ABLATION_COLUMNS = ("study", "variant", "seeds", "psnr", "psnr_std", "ssim", "spectrum_gini")
DEFAULT_GAMMAS = (1.0, 10.0, 100.0, 1e3, 1e4, 1e5)


# -- helpers -----------------------------------------------------------------

def _fmt(v):
    if isinstance(v, float):
        return "nan" if math.isnan(v) else repr(v)
    return str(v)


def write_csv(path, columns, rows):
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([_fmt(row[c]) for c in columns])


def read_csv(path):
    with open(path, newline="") as f:
        return list(csv.DictReader(f))


def _single_thread(enabled):
    if not enabled:
        return contextlib.nullcontext()
    from threadpoolctl import threadpool_limits
    return threadpool_limits(1)


def _parse_overrides(pairs):
    """``["train.epochs=2", ...]`` -> nested dict of YAML-parsed values."""
    out = {}
    for item in pairs or ():
        key, sep, value = item.partition("=")
        if not sep or not key:
            raise RcotError(f"--set expects key=value, got {item!r}")
        node = out
        parts = key.split(".")
        for p in parts[:-1]:
            node = node.setdefault(p, {})
        node[parts[-1]] = yaml.safe_load(value)
    return out


def _merge(base, extra):
    out = dict(base)
    for k, v in extra.items():
        out[k] = _merge(out.get(k) or {}, v) if isinstance(v, dict) else v
    return out


def load_config(path, overrides=None, output_dir=None):
    cfg = load_run_config(path)
    if overrides:
        cfg = run_config_from_dict(_merge(cfg.to_dict(), _parse_overrides(overrides)))
    if output_dir is not None:
        cfg = cfg.replace(output_dir=str(output_dir))
    if cfg.deterministic:
        cfg = cfg.with_train(record_wallclock=False)
    return cfg


def final_report(cfg, task, m):
    """Metrics of the trained map on the held-out part of ``task``."""
    if cfg.task == "image":
        y, x = task.eval_pair
        rep = evaluate(m(y), x, y).to_dict()
        rep["degraded_psnr"] = evaluate(y, x).psnr
        return rep
    y = task.eval_degraded
    out, ref = m(y), task.oracle(y)
    err = np.linalg.norm(out - ref, axis=1)
    rep = {
        "transport_cost": float(np.mean(np.sum((out - y) ** 2, axis=1))),
        "oracle_cost": float(np.mean(np.sum((ref - y) ** 2, axis=1))),
    }
    if cfg.task == "uniform1d":
        rep["max_grid_error"] = float(err.max())
    else:
        rep["mean_l2_error"] = float(err.mean())
    return rep


def run_training(cfg, task=None):
    """Fit a map for ``cfg``; returns ``(FitResult, task, diverged)``."""
    task = task or build_task(cfg)
    with _single_thread(cfg.deterministic):
        try:
            return fit(cfg.train, task.data, task.eval_pair), task, False
        except DivergenceError as err:
            return err.state, task, True


# -- train -------------------------------------------------------------------

def cmd_train(config_path, output_dir=None, overrides=None):
    cfg = load_config(config_path, overrides, output_dir)
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    dump_run_config(cfg, out / "config.yaml")
    task = build_task(cfg)
    if cfg.train.epochs == 0:
        state = TrainState(cfg.train, task.data.shape)
        result, diverged = FitResult(state.map, state.potential, []), False
    else:
        result, task, diverged = run_training(cfg, task)
    write_csv(out / "history.csv", HISTORY_COLUMNS, result.history)
    save_model(out / "checkpoint.rcot", result.map, result.potential,
               {"name": cfg.name, "config": cfg.to_dict()})
    if diverged:
        print(f"training diverged; partial history ({len(result.history)} epochs) kept in {out}",
              file=sys.stderr)
        return EXIT_DIVERGED
    report = final_report(cfg, task, result.map)
    (out / "report.json").write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    print(json.dumps(report, sort_keys=True))
    return EXIT_OK


# -- eval --------------------------------------------------------------------

def image_grid(degraded, restored, target, rows=None):
    """Stack samples as rows of four panels: ``(rows*H, 4*W)`` or ``(rows*H, 4*W, C)``."""
    n = len(degraded) if rows is None else min(rows, len(degraded))
    resid = np.asarray(degraded) - np.asarray(restored) + 0.5
    lines = [np.concatenate([degraded[i], restored[i], target[i], resid[i]], axis=-1)
             for i in range(n)]
    grid = np.concatenate(lines, axis=-2)
    return grid[0] if grid.shape[0] == 1 else grid.transpose(1, 2, 0)


def write_png(path, img):
    from PIL import Image

    arr = np.round(np.clip(np.asarray(img, dtype=np.float64), 0.0, 1.0) * 255.0).astype(np.uint8)
    Image.fromarray(arr).save(path)


def cmd_eval(checkpoint, config_path, output_dir=None, overrides=None, rows=8):
    cfg = load_config(config_path, overrides)
    if cfg.task != "image":
        raise RcotError("eval: only image tasks have image metrics")
    m, _, _ = load_model(checkpoint, cfg.shape)
    out = Path(output_dir) if output_dir else Path(checkpoint).parent / "eval"
    out.mkdir(parents=True, exist_ok=True)
    y, x = eval_pairs(cfg)
    with _single_thread(cfg.deterministic):
        restored = m(y)
    rep = evaluate(restored, x, y).to_dict()
    base = evaluate(y, x)
    rep["degraded_psnr"] = base.psnr
    rep["degraded_ssim"] = base.ssim
    write_csv(out / "metrics.csv", METRIC_COLUMNS, [rep])
    write_png(out / "grid.png", image_grid(y, restored, x, rows))
    print(json.dumps(rep, sort_keys=True))
    return EXIT_OK


# -- oracle-verify -----------------------------------------------------------

def _perturbed(sol):
    """Negative control: swap the first two assignments."""
    n = len(sol.assignment)
    perm = sol.assignment.copy()
    perm[[0, 1]] = perm[[1, 0]]
    coupling = np.zeros((n, n))
    coupling[np.arange(n), perm] = 1.0 / n
    return type(sol)(coupling, sol.total_cost, sol.phi, sol.phi_c, perm)


def verify_instance(cost, inject_fault=False, tol=1e-7):
    """Check one cost matrix; returns a dict with the measured quantities."""
    sol = solve_assignment(cost)
    if inject_fault and len(cost) >= 2:
        sol = _perturbed(sol)
    _, brute = brute_force_assignment(cost)
    n = len(cost)
    total = float(np.sum(sol.coupling * cost) * n)
    gap = dual_gap(sol, cost)
    ct_err = float(np.max(np.abs(sol.phi_c - c_transform_discrete(sol.phi, cost))))
    exact = sol.total_cost == brute and math.isclose(total, brute, rel_tol=1e-12, abs_tol=1e-12)
    ok = exact and abs(gap) <= tol and ct_err <= 1e-9
    return {"n": n, "solver": total, "brute": brute, "dual_gap": gap, "ctransform_err": ct_err,
            "pass": ok}


def cmd_oracle_verify(size=6, trials=100, seed=0, inject_fault=False, output_dir=None):
    if not 2 <= size <= MAX_EXHAUSTIVE_SIZE:
        raise RcotError(f"--size must lie in [2, {MAX_EXHAUSTIVE_SIZE}] for exhaustive checks")
    if trials < 1:
        raise RcotError("--trials must be >= 1")
    rng = np.random.default_rng(seed)
    print(f"{'trial':>5} {'n':>2} {'solver':>14} {'brute':>14} {'dual_gap':>10} {'c-transform':>11}  result")
    failures = []
    for t in range(trials):
        n = int(rng.integers(2, size + 1))
        # alternate integer-valued and continuous costs
        cost = rng.integers(0, 20, (n, n)).astype(np.float64) if t % 2 else rng.random((n, n))
        r = verify_instance(cost, inject_fault)
        print(f"{t:>5} {n:>2} {r['solver']:>14.8f} {r['brute']:>14.8f} {r['dual_gap']:>10.2e} "
              f"{r['ctransform_err']:>11.2e}  {'pass' if r['pass'] else 'FAIL'}")
        if not r["pass"]:
            failures.append({"trial": t, "seed": seed, "cost": cost.tolist(),
                             **{k: v for k, v in r.items() if k != "pass"}})
    print(f"{trials - len(failures)}/{trials} passed")
    if failures:
        out = Path(output_dir or ".")
        out.mkdir(parents=True, exist_ok=True)
        path = out / f"oracle_failure_seed{seed}.json"
        path.write_text(json.dumps(failures, indent=2))
        print(f"failing instances written to {path}", file=sys.stderr)
        return EXIT_FAIL
    return EXIT_OK


# -- ablate ------------------------------------------------------------------

def ablation_variants(study, cfg, gammas=None):
    """``[(label, RunConfig)]`` for one study."""
    t = cfg.train
    if study == "trc":
        return [("with_trc", cfg.with_train(trc=True)), ("without_trc", cfg.with_train(trc=False))]
    if study == "loss":
        pf = t.paired_fraction or 0.5
        gamma = t.gamma or 1e4
        return [("frot_plus_l2", cfg.with_train(paired_fraction=pf, gamma=gamma)),
                ("frot_only", cfg.with_train(paired_fraction=0.0, gamma=0.0))]
    if study == "regularizer":
        from .cost import CostSpec
        return [(k, cfg.with_train(cost=CostSpec(t.cost.base, k, t.cost.weight)))
                for k in ("none", "l1", "l2", "l0.5")]
    if study == "gamma":
        pf = t.paired_fraction or 0.5
        return [(f"gamma={g:g}", cfg.with_train(gamma=float(g), paired_fraction=pf))
                for g in (gammas or DEFAULT_GAMMAS)]
    raise RcotError(f"unknown study {study!r}")


def run_ablation(study, cfg, seeds=(0,), gammas=None):
    """Train every variant for every seed; returns the aggregated rows."""
    rows = []
    for label, variant in ablation_variants(study, cfg, gammas):
        reports = []
        for s in seeds:
            run = variant.with_train(seed=int(s))
            result, task, diverged = run_training(run)
            if diverged:
                raise DivergenceError(f"{study}/{label} seed {s} diverged")
            reports.append(final_report(run, task, result.map))
            log.info("%s %s seed %s: %s", study, label, s, reports[-1])
        psnrs = [r["psnr"] for r in reports]
        rows.append({
            "study": study, "variant": label, "seeds": " ".join(str(s) for s in seeds),
            "psnr": float(np.mean(psnrs)), "psnr_std": float(np.std(psnrs)),
            "ssim": float(np.mean([r["ssim"] for r in reports])),
            "spectrum_gini": float(np.mean([r["spectrum_gini"] for r in reports])),
            "gamma": variant.train.gamma,
        })
    return rows


def plot_ablation(rows, study, path):
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(5, 3.2))
    psnr = [r["psnr"] for r in rows]
    err = [r["psnr_std"] for r in rows]
    if study == "gamma":
        ax.errorbar([r["gamma"] for r in rows], psnr, yerr=err, marker="o")
        ax.set_xscale("log")
        ax.set_xlabel("gamma")
    else:
        ax.bar(range(len(rows)), psnr, yerr=err, color="tab:blue")
        ax.set_xticks(range(len(rows)), [r["variant"] for r in rows])
        lo = min(p - e for p, e in zip(psnr, err))
        ax.set_ylim(lo - 1.0, max(p + e for p, e in zip(psnr, err)) + 0.5)
    ax.set_ylabel("PSNR (dB)")
    ax.set_title(f"ablation: {study}")
    fig.tight_layout()
    fig.savefig(path, dpi=100)
    plt.close(fig)


def cmd_ablate(study, config_path, output_dir=None, overrides=None, seeds=(0,), gammas=None):
    cfg = load_config(config_path, overrides, output_dir)
    if cfg.task != "image":
        raise RcotError("ablate: studies compare PSNR and need an image task")
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows = run_ablation(study, cfg, seeds, gammas)
    write_csv(out / f"ablation_{study}.csv", ABLATION_COLUMNS, rows)
    plot_ablation(rows, study, out / f"ablation_{study}.png")
    for r in rows:
        print(f"{r['variant']:>14}  psnr {r['psnr']:.3f} +- {r['psnr_std']:.3f}  ssim {r['ssim']:.4f}")
    return EXIT_OK


# -- entry point -------------------------------------------------------------

def build_parser():
    p = argparse.ArgumentParser(prog="rcot", description=__doc__.split("\n")[0])
    p.add_argument("-v", "--verbose", action="store_true", help="log per-epoch progress")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="fit a map from a config file")
    t.add_argument("config")
    t.add_argument("--output-dir")
    t.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override a config field, e.g. train.epochs=2")

    e = sub.add_parser("eval", help="evaluate a checkpoint on a config's held-out data")
    e.add_argument("checkpoint")
    e.add_argument("config")
    e.add_argument("--output-dir")
    e.add_argument("--rows", type=int, default=8, help="samples shown in grid.png")
    e.add_argument("--set", action="append", default=[], metavar="KEY=VALUE")

    o = sub.add_parser("oracle-verify", help="check the assignment solver against enumeration")
    o.add_argument("--size", type=int, default=6)
    o.add_argument("--trials", type=int, default=100)
    o.add_argument("--seed", type=int, default=0)
    o.add_argument("--inject-fault", action="store_true", help="perturb solutions (negative control)")
    o.add_argument("--output-dir")

    a = sub.add_parser("ablate", help="paired training runs for one ablation study")
    a.add_argument("study", choices=("trc", "loss", "regularizer", "gamma"))
    a.add_argument("config")
    a.add_argument("--output-dir")
    a.add_argument("--seeds", type=int, nargs="+", default=[0])
    a.add_argument("--gammas", type=float, nargs="+")
    a.add_argument("--set", action="append", default=[], metavar="KEY=VALUE")
    return p


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "train":
            return cmd_train(args.config, args.output_dir, args.set)
        if args.command == "eval":
            return cmd_eval(args.checkpoint, args.config, args.output_dir, args.set, args.rows)
        if args.command == "oracle-verify":
            return cmd_oracle_verify(args.size, args.trials, args.seed, args.inject_fault,
                                     args.output_dir)
        return cmd_ablate(args.study, args.config, args.output_dir, args.set, args.seeds,
                          args.gammas)
    except DivergenceError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_DIVERGED
    except (RcotError, OSError, ValueError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_USAGE


def main_exit():
    sys.exit(main())


if __name__ == "__main__":
    main_exit()
