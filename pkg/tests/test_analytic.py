import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from effham import (
    P0,
    adaptive_quadrature,
    corrector_gradient_pendulum,
    hbar_pendulum,
    hbar_separable_2d,
    make_grid,
)
from effham.analytic import (
    QuadratureError,
    bisect,
    corrector_values,
    energy_level,
    pendulum_reference,
    rotation_integral,
)

# Regression constants, frozen from an independent oracle
# (scipy.integrate.quad with a breakpoint at s = 3/4, scipy.optimize.brentq, xtol 1e-14).
C_AT_2_5 = 3.1653276232839125
C_AT_2 = 2.0637954228622046


def test_quadrature_basics():
    assert adaptive_quadrature(lambda s: 1.0, 0, 1) == pytest.approx(1.0, abs=1e-15)
    assert abs(adaptive_quadrature(lambda s: np.sin(2 * np.pi * s), 0, 1, 1e-13)) <= 1e-12


def test_quadrature_flat_threshold():
    val = adaptive_quadrature(lambda s: np.sqrt(2 * (np.sin(2 * np.pi * s) + 1)), 0, 1, 1e-10)
    assert val == pytest.approx(4 / np.pi, abs=1e-9)


def test_quadrature_depth_exhaustion():
    with pytest.raises(QuadratureError):
        adaptive_quadrature(lambda s: np.sign(s - 1 / 3), 0, 1, tol=1e-30, max_depth=8)


def test_bisect_bracket_check():
    with pytest.raises(ValueError):
        bisect(lambda x: x - 5, 0, 1)


def test_flat_part():
    assert hbar_pendulum(0.5) == 1.0
    assert hbar_pendulum(P0) == 1.0
    assert hbar_pendulum(0.0) == 1.0


def test_energy_level_oracle():
    assert hbar_pendulum(2.5) == pytest.approx(C_AT_2_5, abs=1e-9)
    assert energy_level(2.0) == pytest.approx(C_AT_2, abs=1e-9)


def test_separable():
    assert hbar_separable_2d([1.5, 2.5]) == pytest.approx(4.4099660, abs=1e-6)
    assert hbar_separable_2d([0, 0]) == 2.0
    assert hbar_separable_2d([P0, 0]) == 2.0
    with pytest.raises(ValueError):
        hbar_separable_2d([1.0])


def test_monotone_on_grid():
    Ps = np.linspace(0, 3, 100)
    H = np.array([hbar_pendulum(p) for p in Ps])
    flat = Ps <= P0
    assert np.all(H[flat] == 1.0)
    assert np.all(np.diff(H[~flat]) > 0)
    assert H[~flat][0] > 1.0
    # continuity at the boundary: small steps give small changes
    assert hbar_pendulum(P0 + 1e-6) - 1.0 < 1e-3


@settings(max_examples=30, deadline=None)
@given(st.floats(-4, 4))
def test_even(P):
    assert hbar_pendulum(P) == hbar_pendulum(-P)


@settings(max_examples=15, deadline=None)
@given(st.floats(P0 + 1e-3, 4))
def test_root_consistency(P):
    c = energy_level(P)
    assert rotation_integral(c, 1e-12) == pytest.approx(P, abs=1e-8)


def test_corrector_at_threshold():
    g = make_grid(1, 4)
    grad = corrector_gradient_pendulum(P0, g)
    assert grad[2] == pytest.approx(-4 / np.pi, abs=1e-12)  # x = 3/4


def test_corrector_mean_vanishes():
    means = [corrector_gradient_pendulum(P0, make_grid(1, n)).mean() for n in (40, 160, 640)]
    assert abs(means[-1]) < abs(means[0])
    assert abs(means[-1]) < 1e-4


def test_corrector_quarter_point():
    g = make_grid(1, 4)
    grad = corrector_gradient_pendulum(2.0, g)
    assert grad[0] == pytest.approx(np.sqrt(2 * (C_AT_2 + 1)) - 2, abs=1e-8)


def test_corrector_rejects_flat_part():
    with pytest.raises(ValueError):
        corrector_gradient_pendulum(0.5, make_grid(1, 8))


def test_corrector_values_periodic_and_consistent():
    g = make_grid(1, 64)
    u = corrector_values(2.0, g)
    assert abs(u.mean()) < 1e-12
    # backward differences of u approximate the gradient at cell midpoints
    du = (u - np.roll(u, 1)) / g.h
    mid = corrector_gradient_pendulum(2.0, make_grid(1, 128))[0::2]
    assert np.abs(du - mid).max() < 1e-3


def test_reference_description():
    assert pendulum_reference(P0).measure_description == "Dirac at x=3/4"
    assert pendulum_reference(2.0).measure_description == "absolutely continuous"
