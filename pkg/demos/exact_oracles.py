"""Exact transport on tiny supports, and the closed-form maps the neural
solver is checked against.

    python demos/exact_oracles.py
"""

import numpy as np

from rcot.cost import CostSpec, cost_matrix
from rcot.oracle import (
    brute_force_assignment, c_transform_discrete, dual_gap, gaussian_map_affine,
    monotone_map_1d, solve_assignment,
)

rng = np.random.default_rng(0)

# Six degraded and six clean 4x4 patches; the cost adds an L1 penalty on the
# Fourier amplitudes of the residual to the Euclidean distance.
ys = rng.uniform(size=(6, 1, 4, 4))
xs = rng.uniform(size=(6, 1, 4, 4))
C = cost_matrix(ys, xs, CostSpec("l2", "l1", 0.1))

sol = solve_assignment(C)
perm, brute = brute_force_assignment(C)
print("assignment      ", sol.assignment)
print("enumeration     ", perm)
print("total cost       %.12f (enumeration %.12f)" % (sol.total_cost, brute))

# Dual side: phi and its c-transform certify optimality.
print("dual gap         %.2e" % dual_gap(sol, C))
print("c-transform err  %.2e" % np.max(np.abs(sol.phi_c - c_transform_discrete(sol.phi, C))))

# 1-D: the optimal map is the monotone rearrangement of quantiles.
src = np.sort(rng.uniform(0, 1, 2000))
tgt = np.sort(rng.uniform(2, 3, 2000))
T = monotone_map_1d(src, tgt)
grid = np.linspace(0.05, 0.95, 5)
print("1-D map on grid ", np.round(T(grid), 3), "(exact: grid + 2)")

# Gaussians: the map is affine.
A = gaussian_map_affine((np.zeros(2), np.eye(2)), ([1.0, -0.5], [[2.0, 0.6], [0.6, 1.0]]))
z = rng.normal(size=(100000, 2))
out = A(z)
print("pushed mean      ", np.round(out.mean(axis=0), 3))
print("pushed cov       ", np.round(np.cov(out.T), 3).tolist())
