"""Exact optimal transport on small supports and closed-form continuous maps.

These are the ground truth against which the learned minimax solver is
checked: an assignment solver that also returns optimal dual potentials,
the 1-D monotone rearrangement, and the Gaussian affine map for the
squared Euclidean cost.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .core import ContractError, DimensionError, DomainError, UsageError

MAX_ASSIGNMENT_SIZE = 64
MAX_EXHAUSTIVE_SIZE = 8


@dataclass
class DiscreteOTSolution:
    """Solution of a uniform-marginal discrete OT problem.

    ``coupling`` has row sums and column sums ``1/n``. ``phi`` is the
    potential on targets (columns) and ``phi_c`` the potential on sources
    (rows); for a solver-produced solution they satisfy
    ``phi_c[i] + phi[j] <= cost[i, j]``. ``total_cost`` is the summed cost
    of the assignment, i.e. ``n`` times the coupling-weighted cost.
    """

    coupling: np.ndarray
    total_cost: float
    phi: np.ndarray
    phi_c: np.ndarray
    assignment: np.ndarray | None = None


def _as_square(cost):
    cost = np.asarray(cost, dtype=np.float64)
    if cost.ndim != 2 or cost.shape[0] != cost.shape[1]:
        raise DimensionError(f"cost must be a square matrix, got shape {cost.shape}")
    return cost


def _hungarian(cost):
    """Shortest augmenting path assignment with row/column potentials.

    Returns ``(col_of_row, u, v)`` with ``u[i] + v[j] <= cost[i, j]`` and
    equality on the matched pairs.
    """
    n = cost.shape[0]
    u = np.zeros(n + 1)
    v = np.zeros(n + 1)
    row_of_col = np.zeros(n + 1, dtype=int)  # 1-based rows, 0 = free
    way = np.zeros(n + 1, dtype=int)
    padded = np.zeros((n + 1, n + 1))
    padded[1:, 1:] = cost
    for i in range(1, n + 1):
        row_of_col[0] = i
        j0 = 0
        minv = np.full(n + 1, np.inf)
        used = np.zeros(n + 1, dtype=bool)
        while True:
            used[j0] = True
            i0 = row_of_col[j0]
            free = ~used
            free[0] = False
            reduced = padded[i0] - u[i0] - v
            better = free & (reduced < minv)
            minv[better] = reduced[better]
            way[better] = j0
            candidates = np.where(free, minv, np.inf)
            j1 = int(np.argmin(candidates))
            delta = candidates[j1]
            u[row_of_col[used]] += delta
            v[used] -= delta
            minv[~used] -= delta
            j0 = j1
            if row_of_col[j0] == 0:
                break
        while j0:
            j1 = way[j0]
            row_of_col[j0] = row_of_col[j1]
            j0 = j1
    col_of_row = np.empty(n, dtype=int)
    col_of_row[row_of_col[1:] - 1] = np.arange(n)
    return col_of_row, u[1:], v[1:]


def solve_assignment(cost):
    """Minimum-cost permutation for a square cost matrix (rows = sources)."""
    cost = _as_square(cost)
    n = cost.shape[0]
    if n == 0:
        raise UsageError("empty cost matrix")
    if n > MAX_ASSIGNMENT_SIZE:
        raise UsageError(f"assignment size {n} exceeds desk-scale limit {MAX_ASSIGNMENT_SIZE}")
    perm, u, v = _hungarian(cost)
    coupling = np.zeros((n, n))
    coupling[np.arange(n), perm] = 1.0 / n
    total = float(cost[np.arange(n), perm].sum())
    return DiscreteOTSolution(coupling=coupling, total_cost=total, phi=v, phi_c=u,
                              assignment=perm)


def brute_force_assignment(cost):
    """Exhaustive minimum over all permutations; returns ``(perm, total)``."""
    cost = _as_square(cost)
    n = cost.shape[0]
    if n > MAX_EXHAUSTIVE_SIZE:
        raise UsageError(f"exhaustive enumeration limited to n <= {MAX_EXHAUSTIVE_SIZE}")
    rows = np.arange(n)
    best, best_perm = np.inf, None
    for perm in itertools.permutations(range(n)):
        total = cost[rows, perm].sum()
        if total < best:
            best, best_perm = total, perm
    return np.array(best_perm), float(best)


def c_transform_discrete(phi, cost):
    """``out[i] = min_j cost[i, j] - phi[j]``."""
    cost = np.asarray(cost, dtype=np.float64)
    phi = np.asarray(phi, dtype=np.float64)
    if cost.ndim != 2 or phi.shape != (cost.shape[1],):
        raise DimensionError(f"phi of shape {phi.shape} does not match cost {cost.shape}")
    return np.min(cost - phi[None, :], axis=1)


def dual_gap(solution, cost):
    """Primal value of the coupling minus the dual value of ``solution.phi``.

    The dual value is ``mean(phi^c over sources) + mean(phi over targets)``.
    Weak duality makes this non-negative for every feasible coupling.
    """
    cost = np.asarray(cost, dtype=np.float64)
    coupling = np.asarray(solution.coupling, dtype=np.float64)
    phi = np.asarray(solution.phi, dtype=np.float64)
    if coupling.shape != cost.shape:
        raise DimensionError(f"coupling {coupling.shape} does not match cost {cost.shape}")
    if phi.shape != (cost.shape[1],):
        raise DimensionError(f"phi of shape {phi.shape} does not match cost {cost.shape}")
    primal = float(np.sum(coupling * cost))
    dual = float(np.mean(c_transform_discrete(phi, cost)) + np.mean(phi))
    return primal - dual


class MonotoneMap:
    """Piecewise-linear increasing map through paired sorted samples."""

    def __init__(self, knots_in, knots_out):
        self.knots_in = knots_in
        self.knots_out = knots_out

    def __call__(self, x):
        return np.interp(x, self.knots_in, self.knots_out)


def monotone_map_1d(source_samples, target_samples):
    """1-D OT map for convex costs: i-th source quantile to i-th target quantile."""
    s = np.asarray(source_samples, dtype=np.float64).ravel()
    t = np.asarray(target_samples, dtype=np.float64).ravel()
    if s.size != t.size:
        raise DimensionError(f"sample counts differ: {s.size} vs {t.size}")
    if s.size == 0:
        raise UsageError("no samples")
    if np.any(np.diff(s) < 0) or np.any(np.diff(t) < 0):
        raise UsageError("samples must be sorted ascending")
    return MonotoneMap(s, t)


@dataclass(frozen=True)
class AffineMap:
    shift: np.ndarray   # target mean
    matrix: np.ndarray
    center: np.ndarray  # source mean

    def __call__(self, x):
        x = np.asarray(x, dtype=np.float64)
        return self.shift + (x - self.center) @ self.matrix.T


def _check_spd(cov, name):
    cov = np.atleast_2d(np.asarray(cov, dtype=np.float64))
    if cov.ndim != 2 or cov.shape[0] != cov.shape[1]:
        raise DimensionError(f"{name} covariance must be square, got {cov.shape}")
    if not np.allclose(cov, cov.T, rtol=1e-10, atol=1e-12):
        raise DomainError(f"{name} covariance is not symmetric")
    if np.linalg.eigvalsh(cov).min() <= 0:
        raise DomainError(f"{name} covariance is not positive definite")
    return cov


def sqrtm_spd(mat, floor=1e-12):
    w, q = np.linalg.eigh(mat)
    return (q * np.sqrt(np.maximum(w, floor))) @ q.T


def gaussian_map_affine(source, target, cost=None):
    """OT map between Gaussians ``(mean, cov)`` under squared Euclidean cost.

    ``A = S^{-1/2} (S^{1/2} T S^{1/2})^{1/2} S^{-1/2}``. Passing a ``cost``
    other than squared L2 without penalty raises ContractError.
    """
    if cost is not None and (cost.base != "sql2" or cost.has_penalty):
        raise ContractError("the Gaussian closed form holds only for squared L2 cost without penalty")
    m_s, cov_s = source
    m_t, cov_t = target
    m_s = np.atleast_1d(np.asarray(m_s, dtype=np.float64))
    m_t = np.atleast_1d(np.asarray(m_t, dtype=np.float64))
    cov_s = _check_spd(cov_s, "source")
    cov_t = _check_spd(cov_t, "target")
    d = m_s.size
    if m_t.size != d or cov_s.shape != (d, d) or cov_t.shape != (d, d):
        raise DimensionError("source and target dimensions disagree")
    root_s = sqrtm_spd(cov_s)
    w, q = np.linalg.eigh(cov_s)
    inv_root_s = (q / np.sqrt(np.maximum(w, 1e-12))) @ q.T
    middle = sqrtm_spd(root_s @ cov_t @ root_s)
    a = inv_root_s @ middle @ inv_root_s
    return AffineMap(shift=m_t, matrix=0.5 * (a + a.T), center=m_s)
