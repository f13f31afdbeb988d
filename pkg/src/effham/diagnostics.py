"""Error metrics, the Lyapunov value and monotonicity probes.

Integrals over the torus are grid means, i.e. ``(1/N) sum_i``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .hamiltonian import DiscreteState
from .operators import F_bar, F_tilde, effective_H_estimate


@dataclass(frozen=True)
class ErrorReport:
    u_error: float
    m_error: float
    hbar_error: float
    mass_drift: float
    min_density: float

    def as_dict(self) -> dict:
        return dict(
            u_error=self.u_error,
            m_error=self.m_error,
            hbar_error=self.hbar_error,
            mass_drift=self.mass_drift,
            min_density=self.min_density,
        )


def _check_same_grid(a, b):
    if a.shape != b.shape:
        raise ValueError(f"grid mismatch: {a.shape} vs {b.shape}")


def u_error(U, U_ref) -> float:
    """Grid mean of ``(U - U_ref)^2``."""
    _check_same_grid(U, U_ref)
    return float(np.mean((U - U_ref) ** 2))


def m_error(M, M_ref) -> float:
    """Grid mean of ``|M - M_ref|``."""
    _check_same_grid(M, M_ref)
    return float(np.mean(np.abs(M - M_ref)))


def error_report(
    state: DiscreteState,
    reference_U: np.ndarray,
    hbar_ref: float,
    spec,
    grid,
    params,
    reference_M: np.ndarray | None = None,
    hbar: float | None = None,
) -> ErrorReport:
    """Errors of ``state`` against a reference solution.

    ``reference_M`` may be omitted when the reference measure is singular;
    ``m_error`` is then NaN. ``hbar`` overrides the estimate computed from
    ``state`` (useful when ``M`` has underflowed).
    """
    if state.N != grid.N:
        raise ValueError("state does not match the grid")
    if hbar is None:
        hbar = effective_H_estimate(state, spec, grid, params)
    me = m_error(state.M, reference_M) if reference_M is not None else float("nan")
    return ErrorReport(
        u_error=u_error(state.U, reference_U),
        m_error=me,
        hbar_error=abs(hbar - hbar_ref),
        mass_drift=abs(float(state.M.mean()) - 1.0),
        min_density=float(state.M.min()),
    )


def lyapunov(state: DiscreteState, root: DiscreteState, log_m=None) -> float:
    """``mean(m* ln(m*/m)) + mean((u - u*)^2) / 2``.

    Root densities that are exactly zero contribute nothing (``0 ln 0 = 0``).
    ``log_m`` may supply ``ln M`` directly when ``M`` is too small to
    represent.
    """
    _check_same_grid(state.M, root.M)
    if np.any(root.M < 0):
        raise ValueError("root density must be non-negative")
    if log_m is None:
        if not np.all(state.M > 0):
            raise ValueError("state density must be strictly positive")
        log_m = np.log(state.M)
    ms = root.M
    pos = ms > 0
    ent = np.zeros_like(ms)
    ent[pos] = ms[pos] * (np.log(ms[pos]) - log_m[pos])
    return float(np.mean(ent) + 0.5 * np.mean((state.U - root.U) ** 2))


_OPERATORS = {"tilde": F_tilde, "bar": F_bar}


def monotonicity_gap(op, a: DiscreteState, b: DiscreteState, spec, grid, params) -> float:
    """``<op(a) - op(b), a - b>`` for ``op`` in ``{"tilde", "bar"}`` or a callable."""
    fn = _OPERATORS[op] if isinstance(op, str) else op
    diff = fn(a, spec, grid, params) - fn(b, spec, grid, params)
    return float(diff @ (a.stacked() - b.stacked()))


def gap_scale(a: DiscreteState, b: DiscreteState) -> float:
    return float(np.linalg.norm(a.stacked()) + np.linalg.norm(b.stacked()) + 1.0)


def pair_distance_series(traj_a, traj_b) -> np.ndarray:
    """``sum_i (m_i - m~_i)^2 + (u_i - u~_i)^2`` at each common sample time."""
    if traj_a.times.shape != traj_b.times.shape or not np.allclose(traj_a.times, traj_b.times):
        raise ValueError("trajectories are sampled at different times")
    dm = np.exp(traj_a.log_density) - np.exp(traj_b.log_density)
    du = traj_a.values - traj_b.values
    return (dm**2 + du**2).sum(axis=1)


def max_increase(series) -> float:
    """Largest increase between consecutive entries (negative if strictly decreasing)."""
    return float(np.max(np.diff(np.asarray(series))))
