"""Entropy-penalized operators on (M, U).

With ``S = sum(M)`` and ``Hk = (sum m_i G_i - (1/k) sum m_i ln m_i) / S``:

* ``F_tilde(M, U) = [-G + Hk + ln(M)/k,  L_U^T M]`` is monotone on the
  simplex ``mean(M) = 1``;
* ``F_bar(M, U) = [M * (-G + Hk + ln(M)/k),  L_U^T M]`` is the flow field
  whose negative drives the Hessian Riemannian flow. Its first block sums
  to zero identically, which is the discrete conservation of mass.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .grid import TorusGrid
from .hamiltonian import (
    DiscreteState,
    HamiltonianSpec,
    adjoint_apply,
    discrete_hamiltonian,
    linearize,
    upwind_arguments,
    weighted_hessian,
)


@dataclass(frozen=True)
class PenalizedParams:
    k: float

    def __post_init__(self):
        if not (np.isfinite(self.k) and self.k > 0):
            raise ValueError(f"k must be positive and finite, got {self.k}")


@dataclass
class LogState:
    """Log-density ``W = ln M`` and value ``U``."""

    W: np.ndarray
    U: np.ndarray

    @classmethod
    def from_state(cls, state: DiscreteState) -> "LogState":
        _require_positive(state.M)
        return cls(np.log(state.M), state.U.copy())

    def to_state(self) -> DiscreteState:
        return DiscreteState(np.exp(self.W), self.U.copy())


class NonPositiveDensityError(ValueError):
    pass


def _require_positive(M):
    if not np.all(M > 0):
        i = int(np.argmin(M))
        raise NonPositiveDensityError(f"density must be positive, M[{i}] = {M[i]}")


def _hk(M, G, k, lnM=None):
    if lnM is None:
        lnM = np.log(M)
    return float((M @ G - (M @ lnM) / k) / M.sum())


def effective_H_estimate(state: DiscreteState, spec, grid, params: PenalizedParams) -> float:
    """Density-weighted, entropy-corrected mean of ``G(U)``."""
    _require_positive(state.M)
    G = discrete_hamiltonian(spec, grid, state.U)
    return _hk(state.M, G, params.k)


def F_tilde(state: DiscreteState, spec, grid, params) -> np.ndarray:
    M, U = state.M, state.U
    _require_positive(M)
    G = discrete_hamiltonian(spec, grid, U)
    lnM = np.log(M)
    hk = _hk(M, G, params.k, lnM)
    return np.concatenate([-G + hk + lnM / params.k, adjoint_apply(spec, grid, U, M)])


def F_bar(state: DiscreteState, spec, grid, params) -> np.ndarray:
    M, U = state.M, state.U
    _require_positive(M)
    G = discrete_hamiltonian(spec, grid, U)
    lnM = np.log(M)
    hk = _hk(M, G, params.k, lnM)
    return np.concatenate([M * (-G + hk + lnM / params.k), adjoint_apply(spec, grid, U, M)])


def F_bar_log(logstate: LogState, spec, grid, params, V=None) -> np.ndarray:
    """Right-hand side ``(dW/dt, dU/dt)`` of the flow in log coordinates.

    Note the sign: this is the time derivative, i.e. ``-F_bar`` rescaled by
    ``1/m_i`` in the first block.
    """
    W, U = logstate.W, logstate.U
    M = np.exp(W)
    G = discrete_hamiltonian(spec, grid, U, V)
    hk = _hk(M, G, params.k, W)
    return np.concatenate([G - hk - W / params.k, -adjoint_apply(spec, grid, U, M)])


class Jacobian(NamedTuple):
    matrix: np.ndarray
    analytic: bool


def kink_margin(spec: HamiltonianSpec) -> float:
    return 1e-8 * (1.0 + float(np.linalg.norm(spec.P)))


def near_kink(spec, grid, U, margin=None) -> bool:
    """True when some upwind argument is within ``margin`` of switching branch."""
    if margin is None:
        margin = kink_margin(spec)
    return any(
        np.any(np.abs(fwd) < margin) or np.any(np.abs(bwd) < margin)
        for fwd, bwd in upwind_arguments(spec, grid, U)
    )


def analytic_jacobian_F_bar(state: DiscreteState, spec, grid, params) -> np.ndarray:
    M, U = state.M, state.U
    _require_positive(M)
    k = params.k
    N = grid.N
    G = discrete_hamiltonian(spec, grid, U)
    lnM = np.log(M)
    S = M.sum()
    hk = _hk(M, G, k, lnM)
    L = linearize(spec, grid, U).toarray()
    LtM = L.T @ M

    dhk_dm = (G - (lnM + 1.0) / k - hk) / S
    dhk_du = LtM / S

    J = np.empty((2 * N, 2 * N))
    J[:N, :N] = np.outer(M, dhk_dm)
    J[:N, :N][np.diag_indices(N)] += -G + hk + (lnM + 1.0) / k
    J[:N, N:] = -M[:, None] * L + np.outer(M, dhk_du)
    J[N:, :N] = L.T
    J[N:, N:] = weighted_hessian(spec, grid, U, M).toarray()
    return J


def jacobian_F_bar_log(logstate: LogState, spec, grid, params) -> np.ndarray:
    """Jacobian of ``F_bar_log`` in ``(W, U)``.

    Assembled directly in log coordinates so that densities that underflow
    to zero cause no division.
    """
    W, U = logstate.W, logstate.U
    k = params.k
    N = grid.N
    M = np.exp(W)
    S = M.sum()
    G = discrete_hamiltonian(spec, grid, U)
    hk = _hk(M, G, k, W)
    L = linearize(spec, grid, U).toarray()
    LtM = L.T @ M

    J = np.empty((2 * N, 2 * N))
    J[:N, :N] = -np.broadcast_to(M * (G - (W + 1.0) / k - hk) / S, (N, N))
    J[:N, :N][np.diag_indices(N)] -= 1.0 / k
    J[:N, N:] = L - LtM / S
    J[N:, :N] = -L.T * M[None, :]
    J[N:, N:] = -weighted_hessian(spec, grid, U, M).toarray()
    return J


def fd_jacobian(fun, z: np.ndarray, n_positive: int = 0, rel_step: float = 1e-6) -> np.ndarray:
    """Central-difference Jacobian of ``fun`` at ``z``.

    The first ``n_positive`` coordinates are kept strictly positive by
    capping their step at half their value.
    """
    z = np.asarray(z, dtype=float)
    n = z.size
    cols = []
    for j in range(n):
        step = rel_step * max(abs(z[j]), 1.0)
        if j < n_positive:
            step = min(step, 0.5 * z[j])
        zp = z.copy()
        zm = z.copy()
        zp[j] += step
        zm[j] -= step
        cols.append((fun(zp) - fun(zm)) / (zp[j] - zm[j]))
    return np.column_stack(cols)


def fd_jacobian_F_bar(state: DiscreteState, spec, grid, params, rel_step=1e-6) -> np.ndarray:
    def fun(z):
        return F_bar(DiscreteState.from_stacked(z), spec, grid, params)

    return fd_jacobian(fun, state.stacked(), n_positive=state.N, rel_step=rel_step)


def jacobian_F_bar(state: DiscreteState, spec, grid, params, margin=None) -> Jacobian:
    """Jacobian of ``F_bar``; near upwind kinks the ``U`` columns come from
    finite differences. ``F_bar`` is smooth in ``M``, so those columns stay
    analytic (differencing them fails for densities near underflow)."""
    J = analytic_jacobian_F_bar(state, spec, grid, params)
    if not near_kink(spec, grid, state.U, margin):
        return Jacobian(J, analytic=True)

    def fun(u):
        return F_bar(DiscreteState(state.M, u), spec, grid, params)

    J[:, state.N :] = fd_jacobian(fun, state.U)
    return Jacobian(J, analytic=False)
