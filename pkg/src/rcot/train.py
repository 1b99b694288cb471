"""Losses and the adversarial minimax training loop.

One outer iteration samples a degraded batch and an independent clean
batch, takes one RMSProp step on the potential (descent on
``mean phi(T(y)) - mean phi(x)``), then ``n_T`` RMSProp steps on the map
(descent on ``mean[c + g - phi(T(y))]`` plus the paired loss when the
batch contains paired samples).
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import autodiff as ad
from .core import DivergenceError, UsageError
from .cost import CostSpec
from .metrics import evaluate
from .nets import init_params, potential_forward, potential_spec
from .optim import RMSProp
from .transport import apply, build_map

log = logging.getLogger(__name__)

HISTORY_COLUMNS = ("epoch", "loss_frot", "loss_paired", "psnr", "ssim", "spectrum_gini",
                   "wallclock_s")


@dataclass(frozen=True)
class TrainConfig:
    lr_map: float = 1e-4
    lr_potential: float = 0.5e-4
    n_T: int = 1
    gamma: float = 1e4
    batch_size: int = 4
    epochs: int = 1
    steps_per_epoch: int | None = None
    paired_fraction: float = 0.0
    cost: CostSpec = field(default_factory=CostSpec)
    seed: int = 0
    rms_decay: float = 0.9
    rms_eps: float = 1e-8
    lr_decay_epoch: int = 100
    lr_decay_factor: float = 0.1
    grad_clip: float | None = None
    trc: bool = True
    detach_residual: bool = False
    gen_widths: tuple | None = None
    enc_widths: tuple | None = None
    pot_widths: tuple | None = None
    activation: str = "silu"
    record_wallclock: bool = True

    def __post_init__(self):
        if isinstance(self.cost, dict):
            object.__setattr__(self, "cost", CostSpec(**self.cost))
        for name in ("gen_widths", "enc_widths", "pot_widths"):
            value = getattr(self, name)
            if value is not None:
                object.__setattr__(self, name, tuple(int(v) for v in value))
        problems = []
        for name in ("lr_map", "lr_potential"):
            if not getattr(self, name) > 0:
                problems.append(f"{name} must be > 0")
        if not self.gamma >= 0:
            problems.append("gamma must be >= 0")
        if int(self.n_T) < 1:
            problems.append("n_T must be >= 1")
        if not 0.0 <= self.paired_fraction <= 1.0:
            problems.append("paired_fraction must lie in [0, 1]")
        if int(self.batch_size) < 1:
            problems.append("batch_size must be >= 1")
        if int(self.epochs) < 0:
            problems.append("epochs must be >= 0")
        if problems:
            raise UsageError("; ".join(problems))

    def to_dict(self):
        d = asdict(self)
        for name in ("gen_widths", "enc_widths", "pot_widths"):
            if d[name] is not None:
                d[name] = list(d[name])
        return d


# -- losses ------------------------------------------------------------------

def transport_cost(ty, y, spec):
    """Per-sample ``c(T(y), y) + weight * g(y - T(y))`` as a Var of shape (N,)."""
    ty = ad.lift(ty)
    y = ad.lift(y)
    axes = tuple(range(1, ty.ndim))
    diff = ty - y
    if spec.base == "l2":
        total = ad.norm(diff, axis=axes)
    else:
        total = ad.vsum(ad.square(diff), axis=axes)
    if spec.has_penalty:
        if ty.ndim < 3:
            raise UsageError("a Fourier penalty needs image-shaped samples")
        amp = ad.fft_amplitude(-diff)
        if spec.penalty == "l1":
            g = ad.vsum(amp, axis=axes)
        elif spec.penalty == "l2":
            g = ad.norm(amp, axis=axes)
        else:
            g = ad.vsum(ad.sqrt_abs(amp), axis=axes)
        total = total + spec.weight * g
    return total


def _stack(batch):
    if isinstance(batch, np.ndarray):
        arr = batch
    else:
        arr = np.stack([np.asarray(b, dtype=np.float64) for b in batch]) if len(batch) else np.empty(0)
    if len(arr) == 0:
        raise UsageError("empty batch")
    return np.asarray(arr, dtype=np.float64)


def loss_frot(m, potential, batch_y, batch_x, spec):
    """Mini-batch estimate of ``E phi(x) + E[c(T(y), y) + g(y - T(y)) - phi(T(y))]``."""
    y = _stack(batch_y)
    x = _stack(batch_x)
    ty = apply(m, y)
    inner = transport_cost(ty, y, spec) - potential_forward(potential, ty)
    return ad.vmean(potential_forward(potential, x)) + ad.vmean(inner)


def _paired_term(ty_rows, x, gamma):
    axes = tuple(range(1, ty_rows.ndim))
    sq = ad.vsum(ad.square(ty_rows - x), axis=axes)
    return gamma * ad.vmean(sq)


def loss_paired(m, pairs, gamma):
    """``gamma / |P| * sum ||T(y) - x||^2`` over ``pairs = [(y, x), ...]``."""
    if gamma < 0:
        raise UsageError("gamma must be >= 0")
    if gamma == 0:
        return ad.Var(np.float64(0.0))
    if len(pairs) == 0:
        raise UsageError("paired loss needs at least one pair")
    y = _stack([p[0] for p in pairs])
    x = _stack([p[1] for p in pairs])
    return _paired_term(apply(m, y), x, gamma)


# -- steps -------------------------------------------------------------------

class TrainState:
    """Map, potential, their optimizers, and the current learning rates."""

    def __init__(self, config, shape):
        self.config = config
        shape = tuple(shape)
        seeds = np.random.SeedSequence(config.seed).generate_state(3)
        self.map = build_map(shape, int(seeds[0]), config.gen_widths, config.enc_widths,
                             config.activation, config.trc, config.detach_residual)
        pot_widths = config.pot_widths or ((16, 32) if len(shape) == 3 else (64, 64))
        self.potential = init_params(potential_spec(shape, pot_widths, config.activation),
                                     int(seeds[1]))
        self.rng = np.random.default_rng(int(seeds[2]))
        self.opt_map = RMSProp(self.map.stores().values(), config.lr_map, config.rms_decay,
                               config.rms_eps, config.grad_clip)
        self.opt_potential = RMSProp([self.potential], config.lr_potential, config.rms_decay,
                                     config.rms_eps, config.grad_clip)

    def set_lr_scale(self, scale):
        self.opt_map.lr = self.config.lr_map * scale
        self.opt_potential.lr = self.config.lr_potential * scale


def _finite_or_raise(value, what, state):
    if not np.isfinite(value):
        raise DivergenceError(f"non-finite {what} loss ({value})", state)


def potential_step(state, batch_y, batch_x, ty=None):
    """One update of the potential; the map is only evaluated.

    ``ty`` may carry an already computed ``T(batch_y)`` for the current map.
    Returns the losses measured before the update: ``loss_potential``
    (the quantity descended) and ``loss_frot`` (the minimax objective).
    """
    y = _stack(batch_y)
    x = _stack(batch_x)
    with ad.no_grad():
        ty = apply(state.map, y).value if ty is None else ad.value_of(ty)
        cost = float(np.mean(transport_cost(ty, y, state.config.cost).value))
    state.opt_potential.zero_grad()
    phi_ty = ad.vmean(potential_forward(state.potential, ty))
    phi_x = ad.vmean(potential_forward(state.potential, x))
    loss = phi_ty - phi_x
    value = float(loss.value)
    _finite_or_raise(value, "potential", state)
    ad.backward(loss)
    state.opt_potential.step()
    return {"loss_potential": value, "loss_frot": cost - value}


def map_step(state, batch_y, paired=None, ty=None):
    """``n_T`` updates of the map; ``paired = (rows, x)`` selects the rows of
    ``batch_y`` that have clean counterparts ``x``. A recorded ``ty`` for
    the current map is reused by the first update."""
    y = _stack(batch_y)
    cfg = state.config
    use_pairs = paired is not None and len(paired[0]) > 0 and cfg.gamma > 0
    out = {}
    for step in range(int(cfg.n_T)):
        state.opt_map.zero_grad()
        if step > 0 or not isinstance(ty, ad.Var):
            ty = apply(state.map, y)
        loss = ad.vmean(transport_cost(ty, y, cfg.cost) - potential_forward(state.potential, ty))
        paired_value = 0.0
        if use_pairs:
            rows, x = paired
            term = _paired_term(ad.getitem(ty, np.asarray(rows)), _stack(x), cfg.gamma)
            paired_value = float(term.value)
            loss = loss + term
        value = float(loss.value)
        _finite_or_raise(value, "map", state)
        ad.backward(loss)
        state.opt_map.step()
        out = {"loss_map": value, "loss_paired": paired_value}
    state.potential.zero_grad()
    return out


# -- loop --------------------------------------------------------------------

def batch_indices(n_y, n_x, batch_size, steps, rng):
    """Independent index streams for the degraded and clean sides."""
    def stream(n):
        while True:
            if n < batch_size:
                yield rng.choice(n, size=batch_size, replace=True)
                continue
            perm = rng.permutation(n)
            for start in range(0, n - batch_size + 1, batch_size):
                yield perm[start:start + batch_size]

    ys, xs = stream(n_y), stream(n_x)
    for _ in range(steps):
        yield next(ys), next(xs)


@dataclass
class FitResult:
    map: object
    potential: object
    history: list


def _eval_record(m, eval_data):
    if eval_data is None or len(m.shape) != 3:
        return {"psnr": math.nan, "ssim": math.nan, "spectrum_gini": math.nan}
    y_eval, x_eval = eval_data
    report = evaluate(m(y_eval), x_eval, y_eval)
    return {"psnr": report.psnr, "ssim": report.ssim, "spectrum_gini": report.spectrum_gini}


def fit(config, data, eval_data=None, state=None):
    """Run the minimax loop for ``config.epochs`` epochs.

    ``data`` is a DatasetHandle; ``eval_data`` an optional ``(degraded,
    clean)`` pair of aligned arrays used for per-epoch metrics. Returns a
    :class:`FitResult`. Two consecutive non-finite losses abort with a
    DivergenceError whose ``state`` is the partial FitResult.
    """
    if len(data.degraded) == 0 or len(data.clean) == 0:
        raise UsageError("empty dataset")
    state = state or TrainState(config, data.shape)
    history = []
    if config.epochs == 0:
        return FitResult(state.map, state.potential, history)
    lookup = data.pair_lookup() if config.paired_fraction > 0 or data.pairs is not None else {}
    steps = config.steps_per_epoch or max(1, len(data.degraded) // config.batch_size)
    start = time.perf_counter()
    bad_streak = 0
    for epoch in range(config.epochs):
        state.set_lr_scale(config.lr_decay_factor if epoch >= config.lr_decay_epoch else 1.0)
        sums = {"loss_frot": 0.0, "loss_paired": 0.0}
        counted = 0
        for yi, xi in batch_indices(len(data.degraded), len(data.clean), config.batch_size,
                                    steps, state.rng):
            y = data.degraded[yi]
            x = data.clean[xi]
            rows = [k for k, i in enumerate(yi) if int(i) in lookup]
            paired = None
            if rows:
                paired = (np.array(rows), data.clean[[lookup[int(yi[k])] for k in rows]])
            try:
                ty = apply(state.map, y)
                pot = potential_step(state, y, x, ty)
                mp = map_step(state, y, paired, ty)
            except DivergenceError as err:
                bad_streak += 1
                log.warning("epoch %d: %s", epoch, err)
                if bad_streak >= 2:
                    raise DivergenceError(str(err), FitResult(state.map, state.potential, history))
                continue
            bad_streak = 0
            sums["loss_frot"] += pot["loss_frot"]
            sums["loss_paired"] += mp["loss_paired"]
            counted += 1
        record = {"epoch": epoch + 1}
        record.update({k: v / max(counted, 1) for k, v in sums.items()})
        record.update(_eval_record(state.map, eval_data))
        record["wallclock_s"] = time.perf_counter() - start if config.record_wallclock else 0.0
        history.append(record)
        log.info("epoch %d: %s", epoch + 1, record)
    return FitResult(state.map, state.potential, history)


def with_overrides(config, **kwargs):
    return replace(config, **kwargs)
