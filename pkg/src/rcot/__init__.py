"""Optimal transport maps for image restoration that condition on their own residual.

The pieces, bottom up:

* ``core``, ``spectral``, ``cost``: image arrays, the DFT, and the
  transport cost with a frequency-domain residual penalty.
* ``oracle``: exact reference solutions (assignment, 1-D monotone maps,
  Gaussian affine maps) used to check the learned maps.
* ``autodiff``, ``nets``, ``optim``: a small reverse-mode engine, the
  generator / encoder / potential networks, and RMSProp.
* ``transport``: the two-pass map ``T(y) = G(y | E(y - G(y)))``.
* ``train``: the minimax losses and training loop.
* ``degrade``, ``metrics``: synthetic degradations and PSNR/SSIM/spectrum
  statistics.
* ``tasks``, ``checkpoint``, ``cli``: config files, persistence and the
  ``rcot`` command.
"""

from .core import (
    ContractError, DimensionError, DivergenceError, DomainError, NumericalError, RcotError,
    StateError, UsageError,
)
from .cost import CostSpec, cost_matrix, frot_cost
from .degrade import DatasetHandle, DegradationSpec, build_dataset, degrade
from .metrics import MetricReport, evaluate, psnr, spectrum_stats, ssim
from .oracle import gaussian_map_affine, monotone_map_1d, solve_assignment
from .train import TrainConfig, fit
from .transport import RcotMap, apply, build_map, first_pass, transport_residual

__all__ = [
    "ContractError", "DimensionError", "DivergenceError", "DomainError", "NumericalError",
    "RcotError", "StateError", "UsageError", "CostSpec", "cost_matrix", "frot_cost",
    "DatasetHandle", "DegradationSpec", "build_dataset", "degrade", "MetricReport", "evaluate",
    "psnr", "spectrum_stats", "ssim", "gaussian_map_affine", "monotone_map_1d",
    "solve_assignment", "TrainConfig", "fit", "RcotMap", "apply", "build_map", "first_pass",
    "transport_residual",
]

__version__ = "0.1.0"
