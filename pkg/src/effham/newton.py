"""Regularized Newton iteration ``z <- z - (tau I + kappa J)^{-1} F_bar(z)``.

``kappa = 0, tau = 1`` is one explicit Euler step of the flow with unit step;
``tau = 0`` is plain Newton. For ``tau > 0`` the iteration conserves
``mean(M)`` and ``mean(U)`` because ``(1,...,1, 0,...,0)`` and
``(0,...,0, 1,...,1)`` are left null vectors of both ``F_bar`` and ``J``.

The linear system is solved in density-relative form: rows of the density
block are divided by ``M`` and its columns multiplied by ``M``. The unknown
becomes the relative change ``dM / M``, which is the same iterate in exact
arithmetic but keeps tiny densities from being wiped out by absolute
rounding errors of the solve.
"""

from __future__ import annotations

import time
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.linalg as sla

from .hamiltonian import DiscreteState
from .operators import (
    F_bar,
    NonPositiveDensityError,
    _require_positive,
    effective_H_estimate,
    jacobian_F_bar,
)


class SingularMatrixError(np.linalg.LinAlgError):
    def __init__(self, message, condition=np.inf):
        super().__init__(message)
        self.condition = condition


@dataclass(frozen=True)
class NewtonConfig:
    tau: float = 1.0
    kappa: float = 1.0
    residual_tol: float = 1e-9
    max_iters: int = 500

    def __post_init__(self):
        if self.tau < 0 or self.kappa < 0 or not self.tau + self.kappa > 0:
            raise ValueError("need tau >= 0, kappa >= 0 and tau + kappa > 0")
        if not self.residual_tol > 0:
            raise ValueError("residual_tol must be positive")
        if self.max_iters < 0:
            raise ValueError("max_iters must be non-negative")


def lu_solve(A: np.ndarray, b: np.ndarray, rcond_min: float = 1e-15) -> np.ndarray:
    """Solve ``A x = b`` by LU with partial pivoting.

    Raises ``SingularMatrixError`` on an exactly zero pivot or when the
    reciprocal 1-norm condition estimate falls below ``rcond_min``.
    """
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError("A must be square")
    if b.shape[0] != A.shape[0]:
        raise ValueError("b does not conform to A")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", sla.LinAlgWarning)
        lu, piv = sla.lu_factor(A, check_finite=True)
    if np.any(np.diag(lu) == 0.0):
        raise SingularMatrixError("matrix is singular (zero pivot); try a larger tau")
    anorm = np.abs(A).sum(axis=0).max()
    rcond, info = sla.lapack.dgecon(lu, anorm, norm="1")
    if info == 0 and rcond < rcond_min:
        raise SingularMatrixError(
            f"matrix is numerically singular (condition ~ {1.0 / max(rcond, 1e-300):.3g});"
            " try a larger tau",
            condition=1.0 / max(rcond, 1e-300),
        )
    return sla.lu_solve((lu, piv), b)


def _step(state, spec, grid, params, config, F=None):
    M, U = state.M, state.U
    _require_positive(M)
    N = state.N
    if F is None:
        F = F_bar(state, spec, grid, params)
    jac = jacobian_F_bar(state, spec, grid, params)
    A = config.kappa * jac.matrix
    diag = A.diagonal().copy()
    # off-diagonal density-row entries carry a factor m_i, so the division is
    # benign; the diagonal of D^-1 A D is the diagonal of A and is restored
    # exactly (dividing it by a subnormal m_i would overflow)
    with np.errstate(over="ignore", invalid="ignore"):
        A[:N, :] /= M[:, None]
        A[:, :N] *= M[None, :]
    A[np.diag_indices(2 * N)] = diag + config.tau
    rhs = F.copy()
    rhs[:N] /= M
    x = lu_solve(A, rhs)
    ratio = 1.0 - x[:N]
    M_new = M * ratio
    bad = np.nonzero(~(M_new > 0))[0]
    if bad.size:
        i = int(bad[0])
        raise NonPositiveDensityError(f"Newton step produced M[{i}] = {M_new[i]:.3g} <= 0")
    return DiscreteState(M_new, U - x[N:]), jac.analytic


def newton_step(state: DiscreteState, spec, grid, params, config: NewtonConfig) -> DiscreteState:
    return _step(state, spec, grid, params, config)[0]


@dataclass
class SolveResult:
    state: DiscreteState
    hbar: float
    status: str  # "converged", "max_iters" or "stopped"
    iterations: int
    residual_history: np.ndarray
    hbar_history: np.ndarray
    mass_history: np.ndarray
    min_density_history: np.ndarray
    fd_jacobians: int = 0
    n_evals: int = 0
    wall_time: float = 0.0
    extras: dict = field(default_factory=dict)

    @property
    def converged(self) -> bool:
        return self.status == "converged"

    @property
    def residual(self) -> float:
        return float(self.residual_history.min())

    @property
    def residual_monotone(self) -> bool:
        return bool(np.all(np.diff(self.residual_history) < 0))


def newton_solve(
    initial: DiscreteState,
    spec,
    grid,
    params,
    config: NewtonConfig | None = None,
    callback: Callable[[int, DiscreteState, float], bool] | None = None,
) -> SolveResult:
    """Iterate until ``max|F_bar| <= residual_tol`` or ``max_iters``.

    ``callback(j, state, hbar)`` is called on every iterate (``j = 0`` is the
    initial state); returning True stops the iteration. If the iteration
    does not converge, the iterate with the smallest residual is returned.
    """
    config = config or NewtonConfig()
    start = time.perf_counter()
    state = initial.copy()
    res_h, hbar_h, mass_h, min_h = [], [], [], []
    best = None
    n_fd = 0
    n_evals = 0
    status = "max_iters"
    j = 0
    while True:
        F = F_bar(state, spec, grid, params)
        n_evals += 1
        r = float(np.abs(F).max())
        hb = effective_H_estimate(state, spec, grid, params)
        res_h.append(r)
        hbar_h.append(hb)
        mass_h.append(float(state.M.mean()))
        min_h.append(float(state.M.min()))
        if best is None or r < best[0]:
            best = (r, state, hb)
        if callback is not None and callback(j, state, hb):
            status = "stopped"
            break
        if r <= config.residual_tol:
            status = "converged"
            break
        if j >= config.max_iters:
            break
        state, analytic = _step(state, spec, grid, params, config, F)
        n_evals += 1
        n_fd += not analytic
        j += 1

    if status != "max_iters":
        final, hbar = state, hb
    else:
        final, hbar = best[1], best[2]
    return SolveResult(
        state=final,
        hbar=hbar,
        status=status,
        iterations=j,
        residual_history=np.array(res_h),
        hbar_history=np.array(hbar_h),
        mass_history=np.array(mass_h),
        min_density_history=np.array(min_h),
        fd_jacobians=n_fd,
        n_evals=n_evals,
        wall_time=time.perf_counter() - start,
    )
