"""Quadratic Hamiltonians ``|p|^2/2 + V(x)`` and their monotone upwind discretization.

For each node ``i`` and axis ``a`` the scheme uses the clamped one-sided
momenta

    fwd_a = min(P_a + (u[i+e_a] - u[i]) / h, 0)
    bwd_a = max(P_a + (u[i] - u[i-e_a]) / h, 0)

and ``G_i(U) = 1/2 * sum_a (fwd_a^2 + bwd_a^2) + V(x_i)``. Every ``G_i`` is
convex, invariant under ``U -> U + s`` and piecewise quadratic, so its
Jacobian and Hessian are available in closed form away from the kinks.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse as sp

from .grid import TorusGrid

TWO_PI = 2.0 * np.pi

PotentialFn = Callable[[np.ndarray], np.ndarray]

# name -> (dimension, V(x) with x of shape (..., d))
PRESETS: dict[str, tuple[int, PotentialFn]] = {
    "minus_sin": (1, lambda x: -np.sin(TWO_PI * x[..., 0])),
    "two_cos": (2, lambda x: np.cos(TWO_PI * x[..., 0]) + np.cos(TWO_PI * x[..., 1])),
    "sin_sin": (2, lambda x: np.sin(TWO_PI * x[..., 0]) * np.sin(TWO_PI * x[..., 1])),
    "strong_mix": (
        1,
        lambda x: -10.0 * np.cos(TWO_PI * x[..., 0]) - 10.0 * np.sin(TWO_PI * x[..., 0]),
    ),
}


class UnknownPresetError(ValueError):
    pass


@dataclass(frozen=True)
class HamiltonianSpec:
    """``H(x, p) = |p|^2 / 2 + V(x)`` with momentum shift ``P``.

    The kinetic Hessian is the identity, so the strong convexity constant is 1.
    """

    preset: str
    P: np.ndarray = field(compare=False)

    def __post_init__(self):
        if self.preset not in PRESETS:
            raise UnknownPresetError(f"unknown preset {self.preset!r}")
        P = np.atleast_1d(np.asarray(self.P, dtype=float)).copy()
        if P.shape != (self.d,):
            raise ValueError(
                f"preset {self.preset!r} is {self.d}-dimensional, got P of shape {P.shape}"
            )
        if not np.all(np.isfinite(P)):
            raise ValueError("P must be finite")
        P.setflags(write=False)
        object.__setattr__(self, "P", P)

    @property
    def d(self) -> int:
        return PRESETS[self.preset][0]

    @property
    def rho(self) -> float:
        return 1.0

    def potential(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.d == 1 and (x.ndim == 0 or x.shape[-1] != 1):
            x = x[..., None]
        return PRESETS[self.preset][1](x)

    def with_P(self, P) -> "HamiltonianSpec":
        return HamiltonianSpec(self.preset, P)


def make_hamiltonian(preset: str, P) -> HamiltonianSpec:
    return HamiltonianSpec(preset, P)


@dataclass
class DiscreteState:
    """Density ``M`` and value ``U`` sampled on a grid."""

    M: np.ndarray
    U: np.ndarray

    def __post_init__(self):
        self.M = np.asarray(self.M, dtype=float)
        self.U = np.asarray(self.U, dtype=float)
        if self.M.shape != self.U.shape or self.M.ndim != 1:
            raise ValueError("M and U must be 1-D arrays of equal length")

    @property
    def N(self) -> int:
        return self.M.size

    def stacked(self) -> np.ndarray:
        return np.concatenate([self.M, self.U])

    @classmethod
    def from_stacked(cls, z: np.ndarray) -> "DiscreteState":
        z = np.asarray(z, dtype=float)
        n = z.size // 2
        return cls(z[:n].copy(), z[n:].copy())

    def copy(self) -> "DiscreteState":
        return DiscreteState(self.M.copy(), self.U.copy())


def check_dims(spec: HamiltonianSpec, grid: TorusGrid) -> None:
    if spec.d != grid.d:
        raise ValueError(f"preset {spec.preset!r} is {spec.d}-D but grid is {grid.d}-D")


def eval_H(spec: HamiltonianSpec, x, p) -> float:
    p = np.atleast_1d(np.asarray(p, dtype=float))
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if p.shape != (spec.d,) or x.shape != (spec.d,):
        raise ValueError("x and p must match the Hamiltonian dimension")
    return float(0.5 * p @ p + spec.potential(x))


def potential_on_grid(spec: HamiltonianSpec, grid: TorusGrid) -> np.ndarray:
    check_dims(spec, grid)
    return spec.potential(grid.points)


def upwind_arguments(spec: HamiltonianSpec, grid: TorusGrid, U: np.ndarray):
    """Per-axis unclamped forward and backward momenta ``P_a + D_a^{+/-} U``."""
    U = np.asarray(U, dtype=float)
    if U.shape != (grid.N,):
        raise ValueError(f"U must have length {grid.N}")
    inv_h = 1.0 / grid.h
    args = []
    for a in range(grid.d):
        fwd = spec.P[a] + (U[grid.forward(a)] - U) * inv_h
        bwd = spec.P[a] + (U - U[grid.backward(a)]) * inv_h
        args.append((fwd, bwd))
    return args


def discrete_hamiltonian(spec, grid, U, V=None) -> np.ndarray:
    """Upwind approximation ``G(U)`` of ``H(x_i, P + DU(x_i))``.

    ``V`` may carry precomputed potential values to skip re-evaluating them.
    """
    if V is None:
        V = potential_on_grid(spec, grid)
    G = np.array(V, dtype=float, copy=True)
    for fwd, bwd in upwind_arguments(spec, grid, U):
        G += 0.5 * (np.minimum(fwd, 0.0) ** 2 + np.maximum(bwd, 0.0) ** 2)
    return G


def _active_slopes(spec, grid, U):
    # at a tie (argument exactly 0) the clamped branch is used: slope 0
    inv_h = 1.0 / grid.h
    return [
        (np.minimum(fwd, 0.0) * inv_h, np.maximum(bwd, 0.0) * inv_h)
        for fwd, bwd in upwind_arguments(spec, grid, U)
    ]


def linearize(spec, grid, U) -> sp.csr_matrix:
    """Jacobian ``L_U[i, j] = dG_i / du_j`` as a sparse matrix."""
    N = grid.N
    rows, cols, vals = [], [], []
    diag = np.zeros(N)
    idx = np.arange(N)
    for a, (cp, cm) in enumerate(_active_slopes(spec, grid, U)):
        rows += [idx, idx]
        cols += [grid.forward(a), grid.backward(a)]
        vals += [cp, -cm]
        diag += cm - cp
    rows.append(idx)
    cols.append(idx)
    vals.append(diag)
    L = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(N, N)
    )
    return L.tocsr()


def adjoint_apply(spec, grid, U, M) -> np.ndarray:
    """``L_U^T M`` without assembling ``L_U``.

    Forward and backward neighbour maps are mutually inverse permutations,
    so the scatter of the transpose reduces to gathers.
    """
    M = np.asarray(M, dtype=float)
    out = np.zeros(grid.N)
    for a, (cp, cm) in enumerate(_active_slopes(spec, grid, U)):
        mcp = M * cp
        mcm = M * cm
        out += mcp[grid.backward(a)] - mcm[grid.forward(a)] + mcm - mcp
    return out


def weighted_hessian(spec, grid, U, M) -> sp.csr_matrix:
    """``sum_i m_i * Hess G_i(U)``, the derivative of ``L_U^T M`` in ``U``.

    Each active branch contributes ``D^T diag(m) D / h^2`` for its one-sided
    difference ``D``; inactive (clamped) branches contribute nothing.
    """
    M = np.asarray(M, dtype=float)
    N = grid.N
    inv_h2 = 1.0 / grid.h**2
    idx = np.arange(N)
    total = sp.csr_matrix((N, N))
    for a, (fwd, bwd) in enumerate(upwind_arguments(spec, grid, U)):
        for nbr, active in ((grid.forward(a), fwd < 0.0), (grid.backward(a), bwd > 0.0)):
            # rows of the one-sided difference: e_nbr - e_i (sign irrelevant in D^T W D)
            D = sp.coo_matrix(
                (np.concatenate([np.ones(N), -np.ones(N)]),
                 (np.concatenate([idx, idx]), np.concatenate([nbr, idx]))),
                shape=(N, N),
            ).tocsr()
            W = sp.diags(M * active * inv_h2)
            total = total + D.T @ W @ D
    return total.tocsr()


def bregman_sum(spec, grid, U, V) -> float:
    """``sum_i G_i(U) - G_i(V) - grad G_i(V) . (U - V)``.

    Summed over nodes the clamped forward and backward terms recombine into
    full squares, so for the quadratic kinetic part this equals
    ``1/2 sum (D U - D V)^2`` exactly.
    """
    U = np.asarray(U, dtype=float)
    V = np.asarray(V, dtype=float)
    Vpot = potential_on_grid(spec, grid)
    GU = discrete_hamiltonian(spec, grid, U, Vpot)
    GV = discrete_hamiltonian(spec, grid, V, Vpot)
    lin = linearize(spec, grid, V) @ (U - V)
    return float(np.sum(GU - GV - lin))
