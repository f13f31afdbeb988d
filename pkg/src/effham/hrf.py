"""Time integration of the Hessian Riemannian flow in log coordinates.

The state ``(W, U)`` with ``W = ln M`` evolves by ``F_bar_log``; positivity of
``M = exp(W)`` is structural. Two integrators are available:

``"dopri5"``
    Dormand-Prince 5(4) with PI step-size control. Explicit, so the step is
    bounded by the stiffness ``~ max(M) / h^2`` of the value equation.
``"radau"`` (default)
    scipy's Radau IIA (order 5) driven by the analytic Jacobian. Needed at
    paper-scale grids, where the explicit pair requires ~1e7 steps.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import BDF, LSODA, Radau

from .diagnostics import lyapunov
from .grid import TorusGrid
from .hamiltonian import DiscreteState, HamiltonianSpec, discrete_hamiltonian, potential_on_grid
from .operators import F_bar_log, LogState, PenalizedParams, _hk, jacobian_F_bar_log

SCIPY_METHODS = {"radau": Radau, "bdf": BDF, "lsoda": LSODA}


class FlowError(RuntimeError):
    def __init__(self, message, t=None):
        super().__init__(message)
        self.t = t


@dataclass
class FlowConfig:
    T: float = 40.0
    rel_tol: float = 1e-8
    abs_tol: float = 1e-10
    sample_times: np.ndarray | None = None
    n_samples: int = 81
    max_steps: int = 1_000_000
    method: str = "radau"
    h0: float = 1e-3

    def __post_init__(self):
        if not self.T > 0:
            raise ValueError("T must be positive")
        if not (self.rel_tol > 0 and self.abs_tol > 0):
            raise ValueError("tolerances must be positive")
        if self.method not in SCIPY_METHODS and self.method != "dopri5":
            raise ValueError(f"unknown integrator {self.method!r}")

    def times(self) -> np.ndarray:
        if self.sample_times is None:
            return np.linspace(0.0, self.T, self.n_samples)
        ts = np.asarray(self.sample_times, dtype=float)
        if np.any(np.diff(ts) <= 0) or ts[0] < 0 or ts[-1] > self.T:
            raise ValueError("sample_times must be strictly increasing within [0, T]")
        return ts


@dataclass
class Trajectory:
    """Sampled flow. ``log_density[j]`` is ``W`` at ``times[j]``; densities
    far below the float range are only meaningful through it."""

    times: np.ndarray
    log_density: np.ndarray
    values: np.ndarray
    hbar_series: np.ndarray
    mass_series: np.ndarray
    u_mean_series: np.ndarray
    min_density_series: np.ndarray
    residual_series: np.ndarray
    lyapunov_series: np.ndarray | None = None
    n_steps: int = 0
    n_rejected: int = 0
    nfev: int = 0
    njev: int = 0
    wall_time: float = 0.0
    method: str = ""
    extras: dict = field(default_factory=dict)

    @property
    def states(self) -> list[DiscreteState]:
        return [DiscreteState(np.exp(w), u.copy()) for w, u in zip(self.log_density, self.values)]

    def state_at(self, j: int) -> DiscreteState:
        return DiscreteState(np.exp(self.log_density[j]), self.values[j].copy())

    @property
    def final(self) -> DiscreteState:
        return self.state_at(-1)

    def first_time_within(self, target: float, eps: float) -> float | None:
        """Earliest sample time with ``|hbar - target| < eps``."""
        hit = np.nonzero(np.abs(self.hbar_series - target) < eps)[0]
        return float(self.times[hit[0]]) if hit.size else None


# Dormand-Prince 5(4) tableau
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_B = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_B_HAT = np.array(
    [5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40]
)
_E = _B - _B_HAT


class Dopri5:
    """Embedded Runge-Kutta 5(4) pair with FSAL and PI step control.

    ``step(t_stop)`` advances one accepted step without passing ``t_stop``.
    """

    order = 4  # order of the error estimate
    safety = 0.9
    min_factor = 0.2
    max_factor = 10.0

    def __init__(self, fun, t0, y0, rtol, atol, h0):
        self.fun = fun
        self.t = float(t0)
        self.y = np.array(y0, dtype=float)
        self.rtol = rtol
        self.atol = atol
        self.h = float(h0)
        self.f = fun(self.t, self.y)
        self.nfev = 1
        self.n_rejected = 0
        self._err_prev = 1e-4
        self._alpha = 0.7 / (self.order + 1)
        self._beta = 0.4 / (self.order + 1)

    def _attempt(self, h):
        K = np.empty((7, self.y.size))
        K[0] = self.f
        for s in range(1, 7):
            dy = np.dot(_A[s], K[:s]) * h
            K[s] = self.fun(self.t + _C[s] * h, self.y + dy)
        self.nfev += 6
        y_new = self.y + h * np.dot(_B, K)
        scale = self.atol + self.rtol * np.maximum(np.abs(self.y), np.abs(y_new))
        err = float(np.max(np.abs(h * np.dot(_E, K)) / scale))
        return y_new, K[6], err

    def step(self, t_stop):
        while True:
            h = min(self.h, t_stop - self.t)
            if h <= 1e-14 * max(1.0, abs(self.t)):
                raise FlowError(f"step size underflow at t={self.t:.6g}", t=self.t)
            y_new, f_new, err = self._attempt(h)
            if not np.isfinite(err) or not np.all(np.isfinite(y_new)):
                err = np.inf
            if err <= 1.0:
                err = max(err, 1e-10)
                factor = self.safety * err**-self._alpha * self._err_prev**self._beta
                factor = min(self.max_factor, max(self.min_factor, factor))
                self._err_prev = err
                self.t += h
                self.y = y_new
                self.f = f_new
                # a step clipped at a sample time must not shrink the controller's step
                self.h = max(self.h, h * factor) if h < self.h else h * factor
                return
            self.n_rejected += 1
            if np.isfinite(err):
                factor = max(self.min_factor, self.safety * err**-self._alpha)
            else:
                factor = self.min_factor
            self.h = h * factor


def default_initial(grid: TorusGrid) -> DiscreteState:
    """``m = 1 + 0.9 cos(2 pi x1)``, ``u = 0.2 cos(2 pi x1)``, normalized."""
    x1 = grid.points[:, 0]
    c = np.cos(2.0 * np.pi * x1)
    M = 1.0 + 0.9 * c
    U = 0.2 * c
    mean_M = M.mean()
    if abs(mean_M - 1.0) > 1e-15:
        M = M / mean_M
    return DiscreteState(M, U - U.mean())


def integrate_hrf(
    initial: DiscreteState | LogState,
    spec: HamiltonianSpec,
    grid: TorusGrid,
    params: PenalizedParams,
    config: FlowConfig | None = None,
    reference: DiscreteState | None = None,
) -> Trajectory:
    """Integrate ``d(W, U)/dt = F_bar_log(W, U)`` from ``initial`` to ``config.T``.

    ``initial`` may be given in log form, which allows warm starts from
    states whose densities underflow. If ``reference`` (a root) is given, the
    Lyapunov value is sampled too.
    """
    config = config or FlowConfig()
    if isinstance(initial, DiscreteState):
        if not np.all(initial.M > 0):
            raise ValueError("initial density must be strictly positive")
        initial = LogState.from_state(initial)
    if initial.W.shape != (grid.N,) or initial.U.shape != (grid.N,):
        raise ValueError("initial state does not match the grid")

    N = grid.N
    V = potential_on_grid(spec, grid)
    sample_times = config.times()

    def rhs(t, z):
        return F_bar_log(LogState(z[:N], z[N:]), spec, grid, params, V)

    def jac(t, z):
        return jacobian_F_bar_log(LogState(z[:N], z[N:]), spec, grid, params)

    z0 = np.concatenate([initial.W, initial.U]).astype(float)
    start = time.perf_counter()
    samples: list[np.ndarray] = []
    next_idx = 0
    while next_idx < len(sample_times) and sample_times[next_idx] <= 0.0:
        samples.append(z0.copy())
        next_idx += 1

    n_steps = 0
    if config.method == "dopri5":
        solver = Dopri5(rhs, 0.0, z0, config.rel_tol, config.abs_tol, config.h0)
        while next_idx < len(sample_times):
            stop = sample_times[next_idx]
            solver.step(stop)
            n_steps += 1
            if n_steps > config.max_steps:
                raise FlowError(f"max_steps exceeded at t={solver.t:.6g}", t=solver.t)
            if solver.t >= stop:
                samples.append(solver.y.copy())
                next_idx += 1
        nfev, njev, n_rej = solver.nfev, 0, solver.n_rejected
    else:
        cls = SCIPY_METHODS[config.method]
        kwargs = {"jac": jac} if config.method != "lsoda" else {}
        solver = cls(rhs, 0.0, z0, config.T, rtol=config.rel_tol, atol=config.abs_tol, **kwargs)
        while next_idx < len(sample_times):
            msg = solver.step()
            n_steps += 1
            if solver.status == "failed":
                raise FlowError(f"{msg} at t={solver.t:.6g}", t=solver.t)
            if n_steps > config.max_steps:
                raise FlowError(f"max_steps exceeded at t={solver.t:.6g}", t=solver.t)
            if not np.all(np.isfinite(solver.y)):
                raise FlowError(f"non-finite state at t={solver.t:.6g}", t=solver.t)
            dense = None
            while next_idx < len(sample_times) and sample_times[next_idx] <= solver.t:
                ts = sample_times[next_idx]
                if ts == solver.t:
                    samples.append(solver.y.copy())
                else:
                    if dense is None:
                        dense = solver.dense_output()
                    samples.append(dense(ts))
                next_idx += 1
        nfev, njev, n_rej = solver.nfev, solver.njev, 0
    wall = time.perf_counter() - start

    Z = np.array(samples)
    if not np.all(np.isfinite(Z)):
        raise FlowError("non-finite state in trajectory")
    W, U = Z[:, :N].copy(), Z[:, N:].copy()

    hbar, resid = [], []
    for w, u in zip(W, U):
        m = np.exp(w)
        G = discrete_hamiltonian(spec, grid, u, V)
        hbar.append(_hk(m, G, params.k, w))
        # F_bar in terms of the log-form right-hand side: first block is -m * dW/dt
        r = F_bar_log(LogState(w, u), spec, grid, params, V)
        resid.append(max(np.abs(m * r[:N]).max(), np.abs(r[N:]).max()))

    traj = Trajectory(
        times=np.asarray(sample_times, dtype=float).copy(),
        log_density=W,
        values=U,
        hbar_series=np.array(hbar),
        mass_series=np.exp(W).mean(axis=1),
        u_mean_series=U.mean(axis=1),
        min_density_series=np.exp(W).min(axis=1),
        residual_series=np.array(resid),
        n_steps=n_steps,
        n_rejected=n_rej,
        nfev=nfev,
        njev=njev,
        wall_time=wall,
        method=config.method,
    )
    if reference is not None:
        traj.lyapunov_series = np.array(
            [lyapunov(DiscreteState(np.exp(w), u), reference, log_m=w) for w, u in zip(W, U)]
        )
    return traj
