"""Reference effective Hamiltonians for the pendulum family.

For ``H = p^2/2 - sin(2 pi x)`` (or any translate, e.g. ``+cos``) the cell
problem gives ``|P + u'| = sqrt(2 (c + sin(2 pi x)))``. Averaging over a
period,

    Hbar(P) = 1                          if |P| <= P0 = 4/pi,
    Hbar(P) = c  with  |P| = int_0^1 sqrt(2 (sin(2 pi s) + c)) ds   otherwise.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

P0 = 4.0 / np.pi
TOL = 1e-10


class QuadratureError(RuntimeError):
    pass


def adaptive_quadrature(f, a: float, b: float, tol: float = TOL, max_depth: int = 60) -> float:
    """Adaptive Simpson rule with Richardson correction."""

    def simpson(fa, fm, fb, a, b):
        return (b - a) / 6.0 * (fa + 4.0 * fm + fb)

    fa, fb, fm = f(a), f(b), f(0.5 * (a + b))
    whole = simpson(fa, fm, fb, a, b)
    total = 0.0
    # explicit stack instead of recursion: (a, b, fa, fm, fb, whole, tol, depth)
    stack = [(a, b, fa, fm, fb, whole, tol, 0)]
    while stack:
        a, b, fa, fm, fb, whole, eps, depth = stack.pop()
        m = 0.5 * (a + b)
        lm, rm = 0.5 * (a + m), 0.5 * (m + b)
        flm, frm = f(lm), f(rm)
        left = simpson(fa, flm, fm, a, m)
        right = simpson(fm, frm, fb, m, b)
        delta = left + right - whole
        if abs(delta) <= 15.0 * eps:
            total += left + right + delta / 15.0
            continue
        if depth >= max_depth:
            raise QuadratureError(f"recursion depth {max_depth} exhausted on [{a}, {b}]")
        stack.append((a, m, fa, flm, fm, left, 0.5 * eps, depth + 1))
        stack.append((m, b, fm, frm, fb, right, 0.5 * eps, depth + 1))
    return total


def bisect(g, lo: float, hi: float, tol: float = TOL) -> float:
    """Root of an increasing function ``g`` bracketed by ``[lo, hi]``."""
    glo, ghi = g(lo), g(hi)
    if glo > 0 or ghi < 0:
        raise ValueError(f"root not bracketed: g({lo})={glo}, g({hi})={ghi}")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if g(mid) < 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def rotation_integral(c: float, tol: float = TOL) -> float:
    """``int_0^1 sqrt(2 max(sin(2 pi s) + c, 0)) ds``."""
    return adaptive_quadrature(
        lambda s: np.sqrt(2.0 * max(np.sin(2.0 * np.pi * s) + c, 0.0)), 0.0, 1.0, tol
    )


def energy_level(P: float, tol: float = TOL) -> float:
    """The level ``c >= 1`` whose rotation integral equals ``|P|``; 1 on the flat part."""
    P = abs(float(P))
    if not np.isfinite(P):
        raise ValueError("P must be finite")
    if P <= P0:
        return 1.0
    # integral is 4/pi <= |P| at c = 1 and at least sqrt(2(c - 1)) beyond
    return bisect(lambda c: rotation_integral(c, 0.01 * tol) - P, 1.0, 1.0 + P * P, tol)


def hbar_pendulum(P: float) -> float:
    return energy_level(P)


def hbar_separable_2d(P) -> float:
    P = np.asarray(P, dtype=float)
    if P.shape != (2,):
        raise ValueError("P must be a 2-vector")
    return hbar_pendulum(P[0]) + hbar_pendulum(P[1])


def corrector_gradient_pendulum(P: float, grid) -> np.ndarray:
    """``u*_x = sign(P) sqrt(2 max(C + sin(2 pi x), 0)) - P`` at the grid nodes."""
    if grid.d != 1:
        raise ValueError("the pendulum corrector is one-dimensional")
    if abs(P) < P0:
        raise ValueError(f"corrector is only determined for |P| >= 4/pi, got {P}")
    C = energy_level(P)
    x = grid.points[:, 0]
    return np.sign(P) * np.sqrt(2.0 * np.maximum(C + np.sin(2.0 * np.pi * x), 0.0)) - P


def corrector_values(P: float, grid, tol: float = 1e-12) -> np.ndarray:
    """Corrector ``u*`` at the grid nodes, normalized to zero grid mean."""
    if grid.d != 1:
        raise ValueError("the pendulum corrector is one-dimensional")
    if abs(P) < P0:
        raise ValueError(f"corrector is only determined for |P| >= 4/pi, got {P}")
    C = energy_level(P)
    s = np.sign(P)

    def du(t):
        return s * np.sqrt(2.0 * max(C + np.sin(2.0 * np.pi * t), 0.0)) - P

    x = grid.points[:, 0]
    u = np.empty_like(x)
    acc, prev = 0.0, 0.0
    for i, xi in enumerate(x):
        acc += adaptive_quadrature(du, prev, xi, tol)
        u[i] = acc
        prev = xi
    return u - u.mean()


@dataclass(frozen=True)
class ReferenceSolution:
    hbar_star: float
    corrector_gradient: np.ndarray | None
    measure_description: str


def pendulum_reference(P: float, grid=None) -> ReferenceSolution:
    """Exact data for the 1D ``-sin`` pendulum. On the flat part the
    projected Mather measure is a point mass at the top of the potential,
    ``x = 3/4``."""
    grad = None
    if grid is not None and abs(P) >= P0:
        grad = corrector_gradient_pendulum(P, grid)
    desc = "Dirac at x=3/4" if abs(P) <= P0 else "absolutely continuous"
    return ReferenceSolution(hbar_pendulum(P), grad, desc)
