"""Transport costs: base cost c, residual penalty g, and c~ = c + weight * g."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .core import DimensionError, UsageError, check_same_shape
from .spectral import check_penalty_kind, freq_penalty

BASE_KINDS = ("l2", "sql2")


@dataclass(frozen=True)
class CostSpec:
    """Configuration of the FROT cost.

    ``base`` is ``"l2"`` (Euclidean distance) or ``"sql2"`` (its square);
    ``penalty`` is one of ``none``, ``l1``, ``l2``, ``l0.5``; ``weight``
    scales the penalty. ``weight=1`` gives the unweighted sum c + g.
    """

    base: str = "l2"
    penalty: str = "l1"
    weight: float = 1.0

    def __post_init__(self):
        base = str(self.base).lower()
        if base not in BASE_KINDS:
            raise UsageError(f"unknown base cost {self.base!r}; expected one of {BASE_KINDS}")
        object.__setattr__(self, "base", base)
        object.__setattr__(self, "penalty", check_penalty_kind(self.penalty))
        if not self.weight >= 0:
            raise UsageError(f"cost weight must be >= 0, got {self.weight}")
        object.__setattr__(self, "weight", float(self.weight))

    @property
    def has_penalty(self):
        return self.penalty != "none" and self.weight > 0

    def to_dict(self):
        return asdict(self)


def base_cost(x, y, kind="l2"):
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    check_same_shape(x, y)
    d2 = float(np.sum((x - y) ** 2))
    if kind == "sql2":
        return d2
    if kind == "l2":
        return float(np.sqrt(d2))
    raise UsageError(f"unknown base cost {kind!r}")


def frot_cost(x, y, spec=CostSpec()):
    """c~(y, x) = c(x, y) + weight * g(y - x)."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    check_same_shape(x, y)
    total = base_cost(x, y, spec.base)
    if spec.has_penalty:
        if x.ndim < 2:
            raise DimensionError("a Fourier penalty needs at least 2-D samples")
        total += spec.weight * freq_penalty(y - x, spec.penalty)
    return total


def cost_matrix(ys, xs, spec=CostSpec()):
    """Matrix with entry ``(i, j) = frot_cost(xs[j], ys[i])``."""
    ys = [np.asarray(y, dtype=np.float64) for y in ys]
    xs = [np.asarray(x, dtype=np.float64) for x in xs]
    shapes = {a.shape for a in ys + xs}
    if len(shapes) > 1:
        raise DimensionError(f"all samples must share one shape, got {sorted(shapes)}")
    out = np.empty((len(ys), len(xs)))
    for i, y in enumerate(ys):
        for j, x in enumerate(xs):
            out[i, j] = frot_cost(x, y, spec)
    return out
