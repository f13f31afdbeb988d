"""Command-line experiment drivers.

    effham <verb> [--config FILE] [--out PREFIX] [--P ..] [--k ..] [--n ..]
                  [--method ..] [--tau ..] [--kappa ..] [--T ..]

Verbs: solve, sweep, kconv, bench, stability, monotonicity. Config files hold
one ``key = value`` per line (``#`` starts a comment, vectors are
comma-separated). Exit status: 0 success, 1 solver failure, 2 config error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import time
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from .analytic import P0, corrector_values, hbar_pendulum, hbar_separable_2d
from .diagnostics import (
    error_report,
    lyapunov,
    max_increase,
    monotonicity_gap,
    pair_distance_series,
)
from .grid import make_grid
from .hamiltonian import PRESETS, DiscreteState, HamiltonianSpec, UnknownPresetError
from .hrf import FlowConfig, FlowError, default_initial, integrate_hrf
from .newton import NewtonConfig, SingularMatrixError, newton_solve
from .operators import LogState, NonPositiveDensityError, PenalizedParams

log = logging.getLogger("effham")

VERBS = ("solve", "sweep", "kconv", "bench", "stability", "monotonicity")
SOLVER_ERRORS = (FlowError, NonPositiveDensityError, SingularMatrixError, np.linalg.LinAlgError)


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    hamiltonian: str = "minus_sin"
    dimension: int | None = None
    n: int = 30
    P: tuple = (0.5,)
    k: tuple = (100.0,)
    method: str = "newton"  # hrf | newton | both
    tau: float = 1.0
    kappa: float = 1.0
    T: float = 40.0
    rel_tol: float = 1e-8
    abs_tol: float = 1e-10
    integrator: str = "radau"
    n_samples: int = 81
    residual_tol: float = 1e-9
    max_iters: int = 500
    experiment: str = "solve"
    sweep_min: tuple = (-2.0,)
    sweep_max: tuple = (2.0,)
    sweep_step: float = 0.25
    n_list: tuple = (15, 30, 60, 120)
    eps: float = 1e-3
    bench_T: float = 50.0
    out: str = "out/run"
    lyapunov: bool = True
    extras: dict = field(default_factory=dict)

    @property
    def d(self) -> int:
        return PRESETS[self.hamiltonian][0]

    def spec(self, P=None) -> HamiltonianSpec:
        return HamiltonianSpec(self.hamiltonian, self.P if P is None else P)

    def grid(self, n=None):
        return make_grid(self.d, self.n if n is None else n)

    def flow(self, **kw) -> FlowConfig:
        base = dict(
            T=self.T,
            rel_tol=self.rel_tol,
            abs_tol=self.abs_tol,
            n_samples=self.n_samples,
            method=self.integrator,
        )
        base.update(kw)
        return FlowConfig(**base)

    def newton(self, **kw) -> NewtonConfig:
        base = dict(
            tau=self.tau, kappa=self.kappa, residual_tol=self.residual_tol, max_iters=self.max_iters
        )
        base.update(kw)
        return NewtonConfig(**base)

    def validate(self) -> "ExperimentConfig":
        if self.hamiltonian not in PRESETS:
            raise ConfigError(f"unknown preset {self.hamiltonian!r}")
        if self.dimension is not None and self.dimension != self.d:
            raise ConfigError(f"preset {self.hamiltonian!r} is {self.d}-dimensional")
        if len(self.P) != self.d:
            raise ConfigError(f"P needs {self.d} components, got {len(self.P)}")
        if self.method not in ("hrf", "newton", "both"):
            raise ConfigError(f"unknown method {self.method!r}")
        if self.experiment not in VERBS:
            raise ConfigError(f"unknown experiment {self.experiment!r}")
        nums = [*self.P, *self.k, self.tau, self.kappa, self.T, self.rel_tol, self.abs_tol,
                self.residual_tol, self.sweep_step, self.eps, self.bench_T,
                *self.sweep_min, *self.sweep_max]
        if not all(np.isfinite(v) for v in nums):
            raise ConfigError("numeric fields must be finite")
        if not all(v > 0 for v in self.k):
            raise ConfigError("k must be positive")
        if list(self.k) != sorted(self.k):
            raise ConfigError("k list must be ascending")
        if self.n < 2 or any(n < 2 for n in self.n_list):
            raise ConfigError("grid sizes must be >= 2")
        try:
            self.flow()
            self.newton()
        except ValueError as e:
            raise ConfigError(str(e)) from None
        return self


_CASTS = {}
for _f in fields(ExperimentConfig):
    _CASTS[_f.name] = _f.type


def _parse_value(key: str, raw: str):
    kind = _CASTS.get(key)
    raw = raw.strip()
    try:
        if kind == "tuple":
            if key == "n_list":
                return tuple(int(v) for v in raw.split(","))
            return tuple(float(v) for v in raw.split(","))
        if kind == "float":
            return float(raw)
        if kind in ("int", "int | None"):
            return int(raw)
        if kind == "bool":
            if raw.lower() in ("1", "true", "yes", "on"):
                return True
            if raw.lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        return raw
    except ValueError:
        raise ConfigError(f"bad value for {key}: {raw!r}") from None


ALIASES = {"preset": "hamiltonian", "n_per_dim": "n", "N_list": "n_list"}


def parse_config_text(text: str) -> dict:
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, raw = (s.strip() for s in line.split("=", 1))
        key = ALIASES.get(key, key)
        if key not in _CASTS or key == "extras":
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        values[key] = _parse_value(key, raw)
    return values


def load_config(path: str | None, overrides: dict, verb: str) -> ExperimentConfig:
    values = {}
    if path is not None:
        try:
            text = Path(path).read_text()
        except OSError as e:
            raise ConfigError(f"cannot read config: {e}") from None
        values = parse_config_text(text)
    values.update({k: _parse_value(k, v) for k, v in overrides.items() if v is not None})
    values["experiment"] = verb
    return ExperimentConfig(**values).validate()


# --- output helpers -------------------------------------------------------


def fmt(v) -> str:
    if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


def write_csv(path: Path, header: list[str], rows) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])


def write_json(path: Path, data: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)

    def conv(o):
        if isinstance(o, np.ndarray):
            return o.tolist()
        if isinstance(o, np.generic):
            return o.item()
        raise TypeError(type(o))

    path.write_text(json.dumps(data, indent=2, default=conv) + "\n")


def out_path(cfg: ExperimentConfig, name: str) -> Path:
    prefix = Path(cfg.out)
    return prefix.parent / f"{prefix.name}_{name}" if prefix.name else prefix / name


def analytic_hbar(preset: str, P) -> float | None:
    if preset == "minus_sin":
        return hbar_pendulum(P[0])
    if preset == "two_cos":
        return hbar_separable_2d(P)
    return None


def state_rows(grid, M, U, W=None):
    W = np.log(M) if W is None else W
    for i in range(grid.N):
        yield [*grid.points[i], M[i], U[i], W[i]]


def state_header(grid):
    return [f"x{a + 1}" for a in range(grid.d)] + ["m", "u", "log_m"]


# --- verbs ----------------------------------------------------------------


def _reference_root(cfg, spec, grid, params, initial):
    """Best available root for Lyapunov diagnostics: a Newton solve."""
    res = newton_solve(initial, spec, grid, params, cfg.newton())
    return res


def run_solve(cfg: ExperimentConfig) -> int:
    spec, grid = cfg.spec(), cfg.grid()
    params = PenalizedParams(cfg.k[-1])
    initial = default_initial(grid)
    methods = ["newton", "hrf"] if cfg.method == "both" else [cfg.method]
    summary = dict(
        preset=cfg.hamiltonian, P=list(cfg.P), k=params.k, N=grid.N, method=cfg.method,
        hbar=None, mass_drift=None, min_density=None, status="ok",
    )
    code = 0
    try:
        for meth in methods:
            if meth == "newton":
                res = newton_solve(initial, spec, grid, params, cfg.newton())
                write_csv(
                    out_path(cfg, "residuals.csv"),
                    ["iteration", "residual", "hbar", "mass", "min_density"],
                    zip(range(len(res.residual_history)), res.residual_history,
                        res.hbar_history, res.mass_history, res.min_density_history),
                )
                summary.update(
                    hbar=res.hbar, newton_status=res.status, iterations=res.iterations,
                    residual=res.residual, residual_monotone=res.residual_monotone,
                    mass_drift=float(np.abs(res.mass_history - 1).max()),
                    min_density=float(res.min_density_history.min()),
                    newton_wall_time=res.wall_time,
                )
                if not res.converged:
                    summary["status"] = "not_converged"  # best iterate is reported
                final = (res.state.M, res.state.U, None)
            else:
                reference = None
                if cfg.lyapunov:
                    reference = _reference_root(cfg, spec, grid, params, initial).state
                traj = integrate_hrf(initial, spec, grid, params, cfg.flow(), reference=reference)
                cols = [traj.times, traj.hbar_series, traj.mass_series, traj.u_mean_series,
                        traj.min_density_series, traj.residual_series]
                header = ["t", "hbar", "mass", "u_mean", "min_density", "residual"]
                if traj.lyapunov_series is not None:
                    cols.append(traj.lyapunov_series)
                    header.append("lyapunov")
                    summary["lyapunov_max_increase"] = max_increase(traj.lyapunov_series)
                write_csv(out_path(cfg, "trajectory.csv"), header, zip(*cols))
                summary.update(
                    hbar=float(traj.hbar_series[-1]), steps=traj.n_steps, T=cfg.T,
                    hrf_wall_time=traj.wall_time,
                    mass_drift=float(np.abs(traj.mass_series - 1).max()),
                    min_density=float(traj.min_density_series.min()),
                    u_mean_drift=float(np.abs(traj.u_mean_series).max()),
                )
                final = (np.exp(traj.log_density[-1]), traj.values[-1], traj.log_density[-1])
        write_csv(out_path(cfg, "final_state.csv"), state_header(grid), state_rows(grid, *final))
    except SOLVER_ERRORS as e:
        summary.update(status="failed", error=f"{type(e).__name__}: {e}")
        code = 1
    write_json(out_path(cfg, "summary.json"), summary)
    return code


def sweep_points(cfg: ExperimentConfig) -> list[np.ndarray]:
    axes = []
    for a in range(cfg.d):
        lo = cfg.sweep_min[a] if len(cfg.sweep_min) > a else cfg.sweep_min[0]
        hi = cfg.sweep_max[a] if len(cfg.sweep_max) > a else cfg.sweep_max[0]
        if hi < lo or cfg.sweep_step <= 0:
            raise ConfigError("sweep range is empty or step is not positive")
        n = int(np.floor((hi - lo) / cfg.sweep_step + 1e-9)) + 1
        axes.append(np.round(lo + cfg.sweep_step * np.arange(n), 12))
    if cfg.d == 1:
        return [np.array([p]) for p in axes[0]]
    # serpentine order keeps consecutive points neighbours for warm starts
    pts = []
    for i, p1 in enumerate(axes[0]):
        col = axes[1] if i % 2 == 0 else axes[1][::-1]
        pts += [np.array([p1, p2]) for p2 in col]
    return pts


def _solve_one(cfg, spec, grid, params, start):
    """Solve one instance; returns (hbar, status, state_as_log)."""
    if cfg.method == "hrf":
        traj = integrate_hrf(start, spec, grid, params, cfg.flow(n_samples=2))
        return traj.hbar_series[-1], "ok", LogState(traj.log_density[-1], traj.values[-1])
    if isinstance(start, LogState):
        start = start.to_state()
    res = newton_solve(start, spec, grid, params, cfg.newton())
    return res.hbar, res.status, LogState(np.log(res.state.M), res.state.U)


def run_sweep(cfg: ExperimentConfig) -> int:
    grid = cfg.grid()
    params = PenalizedParams(cfg.k[-1])
    pts = sweep_points(cfg)
    warm = default_initial(grid)
    rows = []
    failures = 0
    for P in pts:
        spec = cfg.spec(P)
        exact = analytic_hbar(cfg.hamiltonian, P)
        try:
            try:
                hb, status, state = _solve_one(cfg, spec, grid, params, warm)
            except SOLVER_ERRORS:
                # a warm start near underflow can fail where a cold one does not
                hb, status, state = _solve_one(cfg, spec, grid, params, default_initial(grid))
                status += " (cold restart)"
            if np.all(np.isfinite(state.W)) and np.exp(state.W).min() > 0:
                warm = state
        except SOLVER_ERRORS as e:
            hb, status = float("nan"), f"failed: {type(e).__name__}"
            failures += 1
            warm = default_initial(grid)
        gap = abs(hb - exact) if exact is not None else float("nan")
        rows.append([*P, hb, exact if exact is not None else float("nan"), gap, status])
        log.info("P=%s hbar=%.8f %s", P, hb, status)
    header = [f"P{a + 1}" for a in range(cfg.d)] + ["hbar", "hbar_exact", "gap", "status"]
    write_csv(out_path(cfg, "hbar_curve.csv"), header, rows)
    return 1 if failures == len(pts) else 0


def run_kconv(cfg: ExperimentConfig) -> int:
    spec, grid = cfg.spec(), cfg.grid()
    initial = default_initial(grid)
    # within 1e-6 of 4/pi counts as the boundary case (configs carry rounded values)
    analytic = cfg.hamiltonian == "minus_sin" and abs(cfg.P[0]) >= P0 - 1e-6
    results = []
    try:
        for k in cfg.k:
            params = PenalizedParams(k)
            if cfg.method == "newton":
                res = newton_solve(initial, spec, grid, params, cfg.newton())
                W, U, hb = np.log(res.state.M), res.state.U, res.hbar
            else:
                traj = integrate_hrf(initial, spec, grid, params, cfg.flow(n_samples=2))
                W, U, hb = traj.log_density[-1], traj.values[-1], traj.hbar_series[-1]
            results.append((k, W, U, hb))
    except SOLVER_ERRORS as e:
        log.error("solver failure: %s", e)
        return 1

    if analytic:
        P = float(np.sign(cfg.P[0]) * max(abs(cfg.P[0]), P0))
        U_ref = corrector_values(P, grid)
        M_ref, hbar_ref = None, hbar_pendulum(P)
    else:
        _, W_ref, U_ref, hbar_ref = results[-1]
        M_ref = np.exp(W_ref)
    rows = []
    for k, W, U, hb in results:
        st = DiscreteState(np.exp(W), U)
        rep = error_report(st, U_ref, hbar_ref, spec, grid, PenalizedParams(k), M_ref, hbar=hb)
        argmax = grid.points[int(np.argmax(W))]
        rows.append([k, rep.u_error, rep.m_error, rep.hbar_error, hb, *argmax])
    header = ["k", "u_error", "m_error", "hbar_error", "hbar"] + [
        f"argmax_x{a + 1}" for a in range(grid.d)
    ]
    write_csv(out_path(cfg, "kconv.csv"), header, rows)
    return 0


def bench_one(cfg: ExperimentConfig, n: int) -> list[list]:
    """Long-flow benchmark, then time each method to eps agreement with it."""
    spec, grid = cfg.spec(), cfg.grid(n)
    params = PenalizedParams(cfg.k[-1])
    initial = default_initial(grid)
    bench = integrate_hrf(initial, spec, grid, params, cfg.flow(T=cfg.bench_T, n_samples=2))
    target = float(bench.hbar_series[-1])

    # first flow time within eps, located on a fine sample grid
    probe = integrate_hrf(
        initial, spec, grid, params, cfg.flow(T=cfg.bench_T, n_samples=int(cfg.bench_T * 10) + 1)
    )
    t_hit = probe.first_time_within(target, cfg.eps)
    rows = []
    if t_hit is None:
        rows.append([n, "hrf", float("nan"), -1, float("nan"), -1, float("nan"), target])
    else:
        timed = integrate_hrf(initial, spec, grid, params, cfg.flow(T=max(t_hit, 1e-6), n_samples=2))
        rows.append([n, "hrf", timed.hbar_series[-1], timed.n_steps, timed.wall_time,
                     timed.nfev + timed.njev, t_hit, target])

    def stop(j, state, hb):
        return abs(hb - target) < cfg.eps

    res = newton_solve(initial, spec, grid, params, cfg.newton(), callback=stop)
    # one Newton iteration plays the role of one unit of flow time
    rows.append([n, "newton", res.hbar, res.iterations, res.wall_time, res.n_evals,
                 float(res.iterations), target])
    return rows


def run_bench(cfg: ExperimentConfig) -> int:
    rows = []
    try:
        for n in cfg.n_list:
            rows += bench_one(cfg, n)
    except SOLVER_ERRORS as e:
        log.error("solver failure: %s", e)
        return 1
    write_csv(
        out_path(cfg, "bench.csv"),
        ["N", "method", "hbar", "iterations", "wall_seconds", "evaluations", "pseudo_time",
         "benchmark_hbar"],
        rows,
    )
    return 0


def run_stability(cfg: ExperimentConfig) -> int:
    spec, grid = cfg.spec(), cfg.grid()
    params = PenalizedParams(cfg.k[-1])
    initial = default_initial(grid)
    rows = []
    ok = True
    try:
        if cfg.method in ("hrf", "both"):
            tr = integrate_hrf(initial, spec, grid, params, cfg.flow())
            rows += [["hrf", t, h, m, md] for t, h, m, md in
                     zip(tr.times, tr.hbar_series, tr.mass_series, tr.min_density_series)]
        if cfg.method in ("newton", "both"):
            res = newton_solve(initial, spec, grid, params, cfg.newton())
            rows += [["newton", j, h, m, md] for j, (h, m, md) in
                     enumerate(zip(res.hbar_history, res.mass_history, res.min_density_history))]
    except SOLVER_ERRORS as e:
        log.error("solver failure: %s", e)
        ok = False
    write_csv(out_path(cfg, "stability.csv"), ["method", "time", "hbar", "mass", "min_density"], rows)
    vals = np.array([r[2:] for r in rows], dtype=float) if rows else np.zeros((0, 3))
    if not ok or not np.all(np.isfinite(vals)) or not np.all(vals[:, 2] > 0):
        return 1
    return 0


def monotonicity_initial(grid):
    x = grid.points[:, 0]
    c, s = np.cos(2 * np.pi * x), np.sin(2 * np.pi * x)
    return DiscreteState(1 + 0.2 * c, c - c.mean()), DiscreteState(1 + 0.7 * c, s - s.mean())


def monotonicity_run(spec, grid, params, flow: FlowConfig, root_T: float = 3000.0):
    """Two flows from distinct data, their distance and the F_bar gap along them.

    The Lyapunov reference is a long flow run from the first datum.
    """
    a0, b0 = monotonicity_initial(grid)
    ref = integrate_hrf(a0, spec, grid, params, replace(flow, T=root_T, n_samples=2))
    root = ref.final
    ta = integrate_hrf(a0, spec, grid, params, flow, reference=root)
    tb = integrate_hrf(b0, spec, grid, params, flow, reference=root)
    dist = pair_distance_series(ta, tb)
    gap = np.full(len(ta.times), np.nan)
    for j in range(len(ta.times)):
        a, b = ta.state_at(j), tb.state_at(j)
        if a.M.min() > 0 and b.M.min() > 0:
            gap[j] = monotonicity_gap("bar", a, b, spec, grid, params)
    return ta, tb, dist, gap, ref


def run_monotonicity(cfg: ExperimentConfig) -> int:
    spec, grid = cfg.spec(), cfg.grid()
    params = PenalizedParams(cfg.k[-1])
    try:
        ta, tb, dist, gap, _ = monotonicity_run(spec, grid, params, cfg.flow())
    except SOLVER_ERRORS as e:
        log.error("solver failure: %s", e)
        return 1
    write_csv(
        out_path(cfg, "monotonicity.csv"),
        ["t", "distance", "gap_bar", "lyapunov_a", "lyapunov_b"],
        zip(ta.times, dist, gap, ta.lyapunov_series, tb.lyapunov_series),
    )
    log.info(
        "max distance increase %.3g, min gap %.3g, max lyapunov increase %.3g",
        max_increase(dist), np.nanmin(gap),
        max(max_increase(ta.lyapunov_series), max_increase(tb.lyapunov_series)),
    )
    return 0


RUNNERS = {
    "solve": run_solve,
    "sweep": run_sweep,
    "kconv": run_kconv,
    "bench": run_bench,
    "stability": run_stability,
    "monotonicity": run_monotonicity,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="effham", description=__doc__.split("\n\n")[0])
    p.add_argument("verb", choices=VERBS)
    p.add_argument("--config")
    p.add_argument("--out")
    p.add_argument("--P")
    p.add_argument("--k")
    p.add_argument("--n")
    p.add_argument("--method")
    p.add_argument("--tau")
    p.add_argument("--kappa")
    p.add_argument("--T")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return 2 if e.code else 0
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    overrides = {
        "out": args.out, "P": args.P, "k": args.k, "n": args.n, "method": args.method,
        "tau": args.tau, "kappa": args.kappa, "T": args.T,
    }
    try:
        cfg = load_config(args.config, overrides, args.verb)
    except (ConfigError, UnknownPresetError, TypeError) as e:
        msg = str(e)
        print(f"error: {msg}", file=sys.stderr)
        if args.out:
            write_json(out_path(replace(ExperimentConfig(), out=args.out), "summary.json"),
                       {"status": "config_error", "error": msg})
        return 2
    start = time.perf_counter()
    try:
        code = RUNNERS[args.verb](cfg)
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    log.info("%s finished in %.2fs (exit %d)", args.verb, time.perf_counter() - start, code)
    return code


if __name__ == "__main__":
    sys.exit(main())
