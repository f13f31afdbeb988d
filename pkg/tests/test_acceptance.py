"""Acceptance suite: one test per criterion, each reporting PASS/FAIL.

Run with ``pytest tests/test_acceptance.py -v`` or ``python tests/test_acceptance.py``.
The heavy runs (N=120, k=1e4) take a few minutes on one core.
"""

from __future__ import annotations

import numpy as np
import pytest

from conftest import PRESET_CASES, random_state, setup_case
from effham import (
    FlowConfig,
    NewtonConfig,
    PenalizedParams,
    adaptive_quadrature,
    default_initial,
    hbar_pendulum,
    hbar_separable_2d,
    integrate_hrf,
    make_grid,
    make_hamiltonian,
    newton_solve,
)
from effham.analytic import P0, corrector_values
from effham.cli import ExperimentConfig, bench_one, monotonicity_run
from effham.diagnostics import error_report, gap_scale, max_increase, monotonicity_gap
from effham.hamiltonian import bregman_sum
from effham.operators import analytic_jacobian_F_bar, fd_jacobian_F_bar, near_kink

RTOL = 1e-8  # integrator tolerance used by the flow runs below


# --- shared heavy run: P=0.5, k=1e4, N=120, T=40 ---------------------------


@pytest.fixture(scope="module")
def pendulum_run():
    spec, grid = make_hamiltonian("minus_sin", 0.5), make_grid(1, 120)
    params = PenalizedParams(1e4)
    initial = default_initial(grid)
    root = newton_solve(initial, spec, grid, params, NewtonConfig(max_iters=500))
    flow = FlowConfig(T=40.0, rel_tol=RTOL, abs_tol=1e-10, n_samples=81)
    traj = integrate_hrf(initial, spec, grid, params, flow, reference=root.state)
    return spec, grid, params, root, traj


# --- 1 ----------------------------------------------------------------------


def test_criterion_01_separable_2d(criterion):
    with criterion(1, "2D separable benchmark, 12x12, tau=2 kappa=1") as c:
        spec, grid = make_hamiltonian("two_cos", [1.5, 2.5]), make_grid(2, 12)
        expected = {10.0: 4.40935, 1e2: 4.40994, 1e3: 4.40996, 1e4: 4.40996}
        cfg = NewtonConfig(tau=2.0, kappa=1.0)
        got = {}
        for k in expected:
            res = newton_solve(default_initial(grid), spec, grid, PenalizedParams(k), cfg)
            got[k] = res.hbar
            c.note(f"k={k:g}: {res.hbar:.7f} ({res.status}, residual monotone={res.residual_monotone})")
        exact = hbar_separable_2d([1.5, 2.5])
        assert abs(exact - 4.4099660) <= 1e-6
        bad = {k: got[k] for k in expected if abs(got[k] - expected[k]) > 1e-3}
        assert not bad, f"outside 1e-3 of the table values: {bad}"
        assert abs(got[1e4] - exact) <= 5e-4


# --- 2 ----------------------------------------------------------------------


def test_criterion_02_speed_benchmark(criterion):
    with criterion(2, "1D benchmark values and Newton vs flow cost") as c:
        cfg = ExperimentConfig(hamiltonian="minus_sin", P=(0.5,), k=(100.0,), bench_T=50.0,
                               eps=1e-3, experiment="bench").validate()
        expected = {15: 0.964609, 30: 0.964754, 60: 0.96476, 120: 0.96476}
        failures = []
        for n, value in expected.items():
            hrf, nm = bench_one(cfg, n)
            bench = hrf[7]
            c.note(f"N={n}: bench {bench:.6f}, hrf {hrf[4]:.2f}s/{hrf[5]} evals, "
                   f"newton {nm[4]:.2f}s/{nm[5]} evals")
            if abs(bench - value) > 1e-3:
                failures.append(f"N={n} benchmark {bench:.6f}")
            if not np.isfinite(hrf[4]) or abs(hrf[2] - bench) >= 1e-3:
                failures.append(f"N={n} flow never reached eps")
            if abs(nm[2] - bench) >= 1e-3:
                failures.append(f"N={n} Newton never reached eps")
            if not (nm[5] < hrf[5] and nm[4] < hrf[4]):
                failures.append(f"N={n} Newton not cheaper")
        assert not failures, ", ".join(failures)


# --- 3 ----------------------------------------------------------------------


def test_criterion_03_analytic_identities(criterion):
    with criterion(3, "analytic identities of the pendulum") as c:
        p0 = adaptive_quadrature(lambda s: np.sqrt(2 * (np.sin(2 * np.pi * s) + 1)), 0.0, 1.0)
        assert abs(p0 - 4 / np.pi) <= 1e-9
        assert hbar_pendulum(0.5) == 1.0
        Ps = np.linspace(0.0, 3.0, 100)
        H = np.array([hbar_pendulum(p) for p in Ps])
        assert all(hbar_pendulum(-p) == h for p, h in zip(Ps, H))
        flat = Ps <= P0
        assert np.all(H[flat] == 1.0)
        assert np.all(np.diff(H[~flat]) > 0) and H[~flat][0] > 1.0
        assert np.all(np.diff(H) >= 0)
        # continuity: no jump larger than the slope bound |P| * dP allows
        assert np.max(np.diff(H)) <= 3.0 * (Ps[1] - Ps[0])
        c.note(f"P0 error {abs(p0 - 4 / np.pi):.1e}")


# --- 4 ----------------------------------------------------------------------


def test_criterion_04_conservation(criterion, pendulum_run):
    with criterion(4, "mass and mean conservation along the flow") as c:
        _, _, _, _, traj = pendulum_run
        drift = np.abs(traj.mass_series - 1).max()
        u_mean = np.abs(traj.u_mean_series).max()
        c.note(f"mass drift {drift:.2e}, |mean U| {u_mean:.2e}, min log m {traj.log_density.min():.1f}")
        assert drift <= 1e-8
        assert u_mean <= 1e-8
        # positivity is structural: the state carries ln m
        assert np.all(np.isfinite(traj.log_density))


# --- 5 ----------------------------------------------------------------------


def test_criterion_05_monotonicity(criterion):
    with criterion(5, "F_tilde monotone, F_bar not, Lyapunov still decreasing") as c:
        rng = np.random.default_rng(2024)
        worst = np.inf
        for name, d, n, P in PRESET_CASES:
            spec, grid, params = setup_case(name, d, n, P)
            for _ in range(1000):
                a, b = random_state(rng, grid.N), random_state(rng, grid.N)
                g = monotonicity_gap("tilde", a, b, spec, grid, params)
                worst = min(worst, g / gap_scale(a, b))
                assert g >= -1e-10 * gap_scale(a, b), f"{name}: gap {g}"
        c.note(f"min scaled F_tilde gap {worst:.3g}")

        spec, grid = make_hamiltonian("strong_mix", 0.5), make_grid(1, 20)
        flow = FlowConfig(T=20.0, rel_tol=RTOL, abs_tol=1e-10, n_samples=401)
        ta, tb, dist, gap, _ = monotonicity_run(spec, grid, PenalizedParams(100.0), flow)
        rise = max(max_increase(ta.lyapunov_series), max_increase(tb.lyapunov_series))
        c.note(f"min F_bar gap {np.nanmin(gap):.3g}, distance rise {max_increase(dist):.3g}, "
               f"Lyapunov rise {rise:.3g}")
        assert np.nanmin(gap) < 0
        assert max_increase(dist) > 0
        tol = 10 * RTOL * max(ta.lyapunov_series[0], tb.lyapunov_series[0], 1.0)
        assert rise <= tol


# --- 6 ----------------------------------------------------------------------


def test_criterion_06_lyapunov_decay(criterion, pendulum_run):
    with criterion(6, "Lyapunov decay and error reduction by 1e-4 at T=40") as c:
        spec, grid, params, root, traj = pendulum_run
        phi = traj.lyapunov_series
        tol = 10 * RTOL * max(phi[0], 1.0)
        c.note(f"reference Newton {root.status}, residual {root.residual:.2e}")
        c.note(f"Lyapunov {phi[0]:.3g} -> {phi[-1]:.3g}, max rise {max_increase(phi):.2e}")
        ratios = {}
        reps = []
        for j in (0, -1):
            st = traj.state_at(j)
            reps.append(error_report(st, root.state.U, root.hbar, spec, grid, params,
                                     reference_M=root.state.M, hbar=traj.hbar_series[j]))
        for key in ("u_error", "m_error", "hbar_error"):
            e0, eT = getattr(reps[0], key), getattr(reps[1], key)
            ratios[key] = eT / e0
        c.note(", ".join(f"{k} ratio {v:.2e}" for k, v in ratios.items()))
        assert max_increase(phi) <= tol
        bad = {k: v for k, v in ratios.items() if not v <= 1e-4}
        assert not bad, f"errors not reduced to 1e-4 of initial: {bad}"


# --- 7 ----------------------------------------------------------------------


def test_criterion_07_jacobian(criterion):
    with criterion(7, "analytic Jacobian vs central differences") as c:
        rng = np.random.default_rng(7)
        worst = 0.0
        checked = 0
        while checked < 50:
            name, d, n, P = PRESET_CASES[checked % len(PRESET_CASES)]
            spec, grid, params = setup_case(name, d, n, P, k=20.0)
            s = random_state(rng, grid.N)
            if near_kink(spec, grid, s.U, 1e-4):
                continue
            J = analytic_jacobian_F_bar(s, spec, grid, params)
            Jfd = fd_jacobian_F_bar(s, spec, grid, params)
            rel = np.abs(J - Jfd).max() / np.abs(Jfd).max()
            worst = max(worst, rel)
            assert rel <= 1e-5, f"{name}: relative mismatch {rel:.2e}"
            checked += 1
        c.note(f"worst relative mismatch {worst:.2e}")


# --- 8 ----------------------------------------------------------------------


def test_criterion_08_bregman(criterion):
    with criterion(8, "Bregman identity with rho=2") as c:
        rng = np.random.default_rng(8)
        worst = 0.0
        for _ in range(100):
            n = int(rng.integers(3, 40))
            spec, grid = make_hamiltonian("minus_sin", rng.uniform(-2, 2)), make_grid(1, n)
            U, V = rng.standard_normal(n), rng.standard_normal(n)
            lhs = bregman_sum(spec, grid, U, V)
            back = grid.backward(0)
            rhs = 0.5 * np.sum(((U - U[back]) - (V - V[back])) ** 2) / grid.h**2
            rel = abs(lhs - rhs) / abs(rhs)
            worst = max(worst, rel)
            assert rel <= 1e-10
        c.note(f"worst relative error {worst:.1e}")


# --- 9 ----------------------------------------------------------------------


def test_criterion_09_stability(criterion):
    with criterion(9, "both methods stable at k=1e5, N=20") as c:
        spec, grid = make_hamiltonian("minus_sin", 0.5), make_grid(1, 20)
        params = PenalizedParams(1e5)
        initial = default_initial(grid)
        traj = integrate_hrf(initial, spec, grid, params, FlowConfig(T=40.0))
        assert np.all(np.isfinite(traj.log_density)) and np.all(np.isfinite(traj.values))
        assert np.all(np.isfinite(traj.hbar_series))
        res = newton_solve(initial, spec, grid, params, NewtonConfig())
        assert np.all(res.min_density_history > 0)
        assert np.isfinite(res.hbar) and np.all(np.isfinite(res.state.U))
        c.note(f"flow hbar {traj.hbar_series[-1]:.6f}, Newton hbar {res.hbar:.6f} "
               f"({res.status}, {res.iterations} its, min m {res.min_density_history.min():.1e})")


# --- 10 ---------------------------------------------------------------------


def test_criterion_10_dirac(criterion):
    with criterion(10, "Dirac concentration at the flat-part boundary") as c:
        P = P0
        spec, grid = make_hamiltonian("minus_sin", P), make_grid(1, 120)
        U_ref, H_ref = corrector_values(P, grid), hbar_pendulum(P)
        initial = default_initial(grid)
        u_err, h_err = [], []
        argmax = None
        for k in (10.0, 1e2, 1e3, 1e4):
            params = PenalizedParams(k)
            traj = integrate_hrf(initial, spec, grid, params, FlowConfig(T=40.0, n_samples=2))
            rep = error_report(traj.final, U_ref, H_ref, spec, grid, params,
                               hbar=traj.hbar_series[-1])
            u_err.append(rep.u_error)
            h_err.append(rep.hbar_error)
            argmax = grid.points[int(np.argmax(traj.log_density[-1])), 0]
        c.note(f"argmax {argmax:.4f}, u_err {['%.2e' % e for e in u_err]}, "
               f"hbar_err {['%.2e' % e for e in h_err]}")
        assert abs(argmax - 0.75) <= grid.h
        assert np.all(np.diff(u_err) < 0)
        assert np.all(np.diff(h_err) < 0)


if __name__ == "__main__":
    import sys

    sys.exit(pytest.main([__file__, "-v"]))
