"""Run configuration files and the datasets/oracles they describe.

A run config is a YAML mapping with these top-level keys (all optional
except ``task``)::

    name: toy_denoise
    task: image              # image | uniform1d | gaussian2d
    output_dir: runs/toy_denoise
    deterministic: true      # single BLAS thread, wallclock column written as 0
    data:        {size, channels, n_train, n_eval, image_dir, data_seed, eval_seed}
    degradation: DegradationSpec fields (image task only)
    gaussian:    {mean, cov}   (gaussian2d only; source is N(0, I))
    train:       TrainConfig fields; ``cost`` is a nested CostSpec mapping

Unset fields take the TrainConfig / DegradationSpec defaults. Errors name
the offending field, e.g. ``train: lr_map must be > 0``.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np
import yaml

from .core import DimensionError, UsageError, random_crops
from .cost import CostSpec
from .degrade import DatasetHandle, DegradationSpec, build_dataset, degrade, load_image_dir, synth_image
from .oracle import gaussian_map_affine, monotone_map_1d
from .train import TrainConfig

TASKS = ("image", "uniform1d", "gaussian2d")


@dataclass(frozen=True)
class DataConfig:
    size: int = 32
    channels: int = 1
    n_train: int = 512
    n_eval: int = 64
    image_dir: str | None = None
    data_seed: int = 1234
    eval_seed: int = 4321


@dataclass(frozen=True)
class GaussianConfig:
    mean: tuple = (1.0, -0.5)
    cov: tuple = ((2.0, 0.6), (0.6, 1.0))


@dataclass(frozen=True)
class RunConfig:
    task: str = "image"
    name: str = "run"
    output_dir: str = "runs/run"
    deterministic: bool = True
    data: DataConfig = field(default_factory=DataConfig)
    degradation: DegradationSpec = field(default_factory=DegradationSpec)
    gaussian: GaussianConfig = field(default_factory=GaussianConfig)
    train: TrainConfig = field(default_factory=TrainConfig)

    @property
    def shape(self):
        if self.task == "image":
            return (self.data.channels, self.data.size, self.data.size)
        return (1,) if self.task == "uniform1d" else (len(self.gaussian.mean),)

    def to_dict(self):
        return {
            "task": self.task, "name": self.name, "output_dir": self.output_dir,
            "deterministic": self.deterministic,
            "data": dataclasses.asdict(self.data),
            "degradation": self.degradation.to_dict(),
            "gaussian": {"mean": list(self.gaussian.mean),
                         "cov": [list(r) for r in self.gaussian.cov]},
            "train": self.train.to_dict(),
        }

    def replace(self, **kwargs):
        return dataclasses.replace(self, **kwargs)

    def with_train(self, **kwargs):
        return dataclasses.replace(self, train=dataclasses.replace(self.train, **kwargs))


def _build(cls, section, raw):
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise UsageError(f"{section}: expected a mapping, got {type(raw).__name__}")
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(raw) - known)
    if unknown:
        raise UsageError(f"{section}: unknown field(s) {', '.join(unknown)}")
    try:
        return cls(**raw)
    except (TypeError, ValueError) as err:
        raise UsageError(f"{section}: {err}") from err


def run_config_from_dict(raw):
    """Validate a parsed config mapping; raises UsageError naming the field."""
    if not isinstance(raw, dict):
        raise UsageError("config: top level must be a mapping")
    known = {f.name for f in fields(RunConfig)}
    unknown = sorted(set(raw) - known)
    if unknown:
        raise UsageError(f"config: unknown field(s) {', '.join(unknown)}")
    task = raw.get("task", "image")
    if task not in TASKS:
        raise UsageError(f"task: unknown task {task!r}; expected one of {TASKS}")
    train_raw = dict(raw.get("train") or {})
    if "cost" in train_raw:
        train_raw["cost"] = _build(CostSpec, "train.cost", train_raw["cost"])
    train = _build(TrainConfig, "train", train_raw)
    data = _build(DataConfig, "data", raw.get("data"))
    if data.size < 1 or data.channels < 1 or data.n_train < 1 or data.n_eval < 1:
        raise UsageError("data: size, channels, n_train and n_eval must be >= 1")
    gauss = _build(GaussianConfig, "gaussian", raw.get("gaussian"))
    gauss = GaussianConfig(tuple(float(v) for v in gauss.mean),
                           tuple(tuple(float(v) for v in row) for row in gauss.cov))
    name = str(raw.get("name", "run"))
    return RunConfig(
        task=task, name=name, output_dir=str(raw.get("output_dir", f"runs/{name}")),
        deterministic=bool(raw.get("deterministic", True)), data=data,
        degradation=_build(DegradationSpec, "degradation", raw.get("degradation")),
        gaussian=gauss, train=train)


def load_run_config(path):
    try:
        text = Path(path).read_text()
    except OSError as err:
        raise UsageError(f"cannot read config {path}: {err}") from err
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as err:
        raise UsageError(f"config {path} is not valid YAML: {err}") from err
    return run_config_from_dict(raw or {})


def dump_run_config(cfg, path):
    Path(path).write_text(yaml.safe_dump(cfg.to_dict(), sort_keys=False))


# -- tasks -------------------------------------------------------------------

@dataclass
class Task:
    """Training data, aligned evaluation pairs, and (for point tasks) the oracle map."""

    data: DatasetHandle
    eval_degraded: np.ndarray
    eval_clean: np.ndarray | None = None
    oracle: object = None

    @property
    def eval_pair(self):
        if self.eval_clean is None:
            return None
        return self.eval_degraded, self.eval_clean


def _clean_images(cfg, count, seed):
    d = cfg.data
    rng = np.random.default_rng(seed)
    if d.image_dir:
        images = load_image_dir(d.image_dir, d.channels)
        if any(min(im.shape[1:]) < d.size for im in images):
            raise DimensionError(f"data.image_dir: every image must be at least {d.size}x{d.size}")
        return random_crops(images, d.size, count, rng)
    return [synth_image(d.size, d.channels, rng) for _ in range(count)]


def eval_pairs(cfg):
    """Held-out ``(degraded, clean)`` arrays, aligned row by row."""
    d = cfg.data
    clean = np.stack(_clean_images(cfg, d.n_eval, d.eval_seed))
    seeds = np.random.SeedSequence(d.eval_seed).generate_state(d.n_eval)
    degraded = np.stack([
        degrade(c, dataclasses.replace(cfg.degradation, seed=int(s) ^ cfg.degradation.seed))
        for c, s in zip(clean, seeds)
    ])
    return degraded, clean


def build_task(cfg):
    d = cfg.data
    t = cfg.train
    if cfg.task == "image":
        clean = _clean_images(cfg, d.n_train, d.data_seed)
        data = build_dataset(clean, cfg.degradation, t.paired_fraction, t.seed)
        y_eval, x_eval = eval_pairs(cfg)
        return Task(data, y_eval, x_eval)
    rng = np.random.default_rng(d.data_seed)
    eval_rng = np.random.default_rng(d.eval_seed)
    if cfg.task == "uniform1d":
        data = DatasetHandle(clean=rng.uniform(2.0, 3.0, (d.n_train, 1)),
                             degraded=rng.uniform(0.0, 1.0, (d.n_train, 1)))
        # monotone rearrangement between population quantiles of the two laws
        knots = (np.arange(4096) + 0.5) / 4096
        oracle = monotone_map_1d(knots, 2.0 + knots)
        return Task(data, np.linspace(0.0, 1.0, 101)[:, None], None,
                    lambda y: oracle(np.asarray(y)[:, 0])[:, None])
    mean = np.asarray(cfg.gaussian.mean, dtype=np.float64)
    cov = np.asarray(cfg.gaussian.cov, dtype=np.float64)
    if cov.shape != (mean.size, mean.size):
        raise UsageError(f"gaussian.cov: expected shape {(mean.size, mean.size)}, got {cov.shape}")
    try:
        chol = np.linalg.cholesky(cov)
    except np.linalg.LinAlgError as err:
        raise UsageError("gaussian.cov: not positive definite") from err
    dim = mean.size
    data = DatasetHandle(clean=mean + rng.normal(size=(d.n_train, dim)) @ chol.T,
                         degraded=rng.normal(size=(d.n_train, dim)))
    oracle = gaussian_map_affine((np.zeros(dim), np.eye(dim)), (mean, cov), t.cost)
    return Task(data, eval_rng.normal(size=(d.n_eval, dim)), None, oracle)
