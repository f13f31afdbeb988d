"""Entropy-penalized effective Hamiltonians on the torus.

Computes the effective Hamiltonian of ``|p|^2/2 + V(x)`` from an upwind
discretization of the penalized Mather problem, using either a
positivity-preserving Hessian Riemannian flow or a regularized Newton
iteration.
"""

from .grid import TorusGrid, make_grid
from .hamiltonian import (
    PRESETS,
    DiscreteState,
    HamiltonianSpec,
    UnknownPresetError,
    adjoint_apply,
    discrete_hamiltonian,
    eval_H,
    linearize,
    make_hamiltonian,
)
from .operators import (
    LogState,
    NonPositiveDensityError,
    PenalizedParams,
    F_bar,
    F_bar_log,
    F_tilde,
    effective_H_estimate,
    jacobian_F_bar,
)
from .hrf import FlowConfig, FlowError, Trajectory, default_initial, integrate_hrf
from .newton import NewtonConfig, SingularMatrixError, SolveResult, lu_solve, newton_solve, newton_step
from .analytic import (
    P0,
    ReferenceSolution,
    adaptive_quadrature,
    corrector_gradient_pendulum,
    hbar_pendulum,
    hbar_separable_2d,
)
from .diagnostics import ErrorReport, error_report, lyapunov, monotonicity_gap, pair_distance_series

__version__ = "0.1.0"
