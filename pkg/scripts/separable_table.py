"""H_k for the separable 2D potential against the exact sum of 1D values."""

import numpy as np

from effham import NewtonConfig, PenalizedParams, default_initial, make_grid, make_hamiltonian, newton_solve
from effham.analytic import hbar_separable_2d
from effham.hamiltonian import discrete_hamiltonian

P = (1.5, 2.5)
spec, grid = make_hamiltonian("two_cos", P), make_grid(2, 12)
exact = hbar_separable_2d(P)
print(f"exact Hbar{P} = {exact:.7f}")
print(f"{'k':>8} {'H_k':>12} {'|H_k - exact|':>14} {'iters':>6} status")
for k in (10.0, 1e2, 1e3, 1e4):
    res = newton_solve(default_initial(grid), spec, grid, PenalizedParams(k), NewtonConfig(tau=2.0))
    print(f"{k:8g} {res.hbar:12.7f} {abs(res.hbar - exact):14.2e} {res.iterations:6d} {res.status}")

# the mean of G weighted by m, without the entropy term
res = newton_solve(default_initial(grid), spec, grid, PenalizedParams(10.0), NewtonConfig(tau=2.0))
G = discrete_hamiltonian(spec, grid, res.state.U)
print(f"k=10, sum(m G)/sum(m) = {np.sum(res.state.M * G) / res.state.M.sum():.7f}")
