import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from levywave.acceptance import phi_sq_mass_by_quadrature
from levywave.kernel import (
    green,
    limit_covariance_constant_sigma,
    phi,
    phi_cross_mass,
    phi_mass,
    phi_sq_mass,
    phi_sq_slice,
)


def simpson(f, a, b, tol=1e-10, depth=50):
    """Adaptive Simpson with Richardson correction."""

    def rec(a, b, fa, fm, fb, whole, tol, depth):
        m = 0.5 * (a + b)
        lm, rm = 0.5 * (a + m), 0.5 * (m + b)
        flm, frm = f(lm), f(rm)
        left = (m - a) / 6 * (fa + 4 * flm + fm)
        right = (b - m) / 6 * (fm + 4 * frm + fb)
        if depth <= 0 or abs(left + right - whole) <= 15 * tol:
            return left + right + (left + right - whole) / 15
        return (rec(a, m, fa, flm, fm, left, tol / 2, depth - 1)
                + rec(m, b, fm, frm, fb, right, tol / 2, depth - 1))

    fa, fb, fm = f(a), f(b), f(0.5 * (a + b))
    return rec(a, b, fa, fm, fb, (b - a) / 6 * (fa + 4 * fm + fb), tol, depth)


def phi_y_quadrature(t, R, r):
    a = t - r
    if a <= 0:
        return 0.0
    knots = sorted({-R - a, -R + a, R - a, R + a})
    return math.fsum(simpson(lambda y: float(phi(t, R, r, y)), lo, hi)
                     for lo, hi in zip(knots, knots[1:]))


def test_green_values():
    assert green(0.5, 0.2) == 0.5
    assert green(0.5, 0.5) == 0.0
    assert green(0.5, -0.5) == 0.0
    assert green(-1.0, 0.0) == 0.0
    assert green(0.0, 0.0) == 0.0


def test_green_broadcasts():
    out = green(np.array([1.0, 1.0, 2.0]), np.array([0.0, 1.0, -1.5]))
    np.testing.assert_array_equal(out, [0.5, 0.0, 0.5])


def test_phi_values():
    assert phi(1.0, 2.0, 0.0, 0.0) == 1.0
    assert phi(1.0, 2.0, 0.0, 3.0) == 0.0
    assert phi(2.0, 1.0, 0.5, 1.0) == 0.75
    assert phi(1.0, 2.0, 1.0, 0.0) == 0.0
    assert phi(1.0, 2.0, 1.5, 0.0) == 0.0


def test_phi_matches_direct_green_quadrature():
    val = simpson(lambda x: float(green(1.5, x - 1.0)), -1.0, 0.0) + \
        simpson(lambda x: float(green(1.5, x - 1.0)), 0.0, 1.0)
    assert val == pytest.approx(float(phi(2.0, 1.0, 0.5, 1.0)), abs=1e-9)


def test_phi_mass_values():
    assert phi_mass(1.0, 2.0, 0.0) == 4.0
    assert phi_mass(1.0, 2.0, 1.0) == 0.0


def test_phi_mass_sweep_against_quadrature():
    rng = np.random.default_rng(2024)
    for _ in range(100):
        t = rng.uniform(0.05, 3.0)
        R = rng.uniform(0.05, 4.0)
        r = rng.uniform(0.0, t)
        assert phi_y_quadrature(t, R, r) == pytest.approx(float(phi_mass(t, R, r)), abs=1e-9)


def test_phi_sq_mass_value_and_quadrature():
    assert phi_sq_mass(1.0, 1.0) == 0.5
    q = integrate.dblquad(lambda y, r: float(phi(1.0, 1.0, r, y)) ** 2, 0.0, 1.0,
                          lambda r: -2.0 + r, lambda r: 2.0 - r, epsabs=1e-11)[0]
    assert q == pytest.approx(0.5, abs=1e-7)
    assert phi_sq_mass_by_quadrature(1.0, 1.0) == pytest.approx(0.5, abs=1e-9)
    assert phi_sq_mass_by_quadrature(1.7, 0.6) == pytest.approx(phi_sq_mass(1.7, 0.6), abs=1e-9)


@pytest.mark.parametrize("t,R", [(0.3, 1.0), (1.0, 0.25), (2.0, 2.0), (3.0, 0.7), (0.5, 8.0)])
def test_phi_sq_mass_against_slice_quadrature(t, R):
    q = integrate.quad(lambda r: float(phi_sq_slice(t - r, R)), 0.0, t,
                       points=[max(t - R, 0.0)] if t > R else None, epsabs=1e-13)[0]
    assert phi_sq_mass(t, R) == pytest.approx(q, rel=1e-11)


@pytest.mark.parametrize("a,R", [(0.4, 1.0), (1.3, 0.5), (1.0, 1.0)])
def test_phi_sq_slice_against_y_quadrature(a, R):
    t = 2.0
    r = t - a
    knots = sorted({-R - a, -R + a, R - a, R + a})
    q = math.fsum(simpson(lambda y: float(phi(t, R, r, y)) ** 2, lo, hi)
                  for lo, hi in zip(knots, knots[1:]))
    assert float(phi_sq_slice(a, R)) == pytest.approx(q, abs=1e-9)


def test_phi_sq_mass_edge_cases():
    assert phi_sq_mass(0.0, 3.0) == 0.0
    assert phi_sq_mass(1e-9, 3.0) < 1e-25
    with pytest.raises(ValueError):
        phi_sq_mass(1.0, 0.0)


pos = st.floats(0.01, 10.0, allow_nan=False)


@given(pos, pos)
def test_phi_sq_mass_crude_bound(t, R):
    assert 0.0 <= phi_sq_mass(t, R) <= 2.0 * R * t**3 * (1 + 1e-12)


@given(pos, pos, st.floats(0.0, 1.0), st.floats(-15.0, 15.0))
def test_phi_range(t, R, frac, y):
    r = frac * t * 0.999
    v = float(phi(t, R, r, y))
    assert 0.0 <= v <= min(t - r, R) + 1e-12


@given(pos, pos, st.floats(0.0, 0.999), st.floats(0.0, 15.0), st.floats(0.0, 5.0))
def test_phi_even_and_monotone_in_abs_y(t, R, frac, y, dy):
    r = frac * t
    assert float(phi(t, R, r, y)) == float(phi(t, R, r, -y))
    assert float(phi(t, R, r, y + dy)) <= float(phi(t, R, r, y)) + 1e-12


@given(pos, pos)
def test_phi_sq_mass_continuous_across_regimes(t, R):
    # both branches agree at t == R
    assert phi_sq_mass(R, R) == pytest.approx(R**4 / 2.0, rel=1e-12)


def test_limit_covariance():
    assert limit_covariance_constant_sigma(1.0, 1.0, 2.0) == pytest.approx(4.0 / 3.0)
    assert limit_covariance_constant_sigma(1.0, 0.0, 2.0) == 0.0
    assert limit_covariance_constant_sigma(0.7, 1.3, 2.0) == \
        limit_covariance_constant_sigma(1.3, 0.7, 2.0)
    q = integrate.quad(lambda r: (0.7 - r) * (1.3 - r), 0.0, 0.7)[0]
    assert limit_covariance_constant_sigma(0.7, 1.3, 2.0, c=1.5) == \
        pytest.approx(2 * 2.25 * 2.0 * q, rel=1e-12)


@settings(max_examples=10, deadline=None)
@given(st.floats(0.2, 2.0), st.floats(0.5, 3.0))
def test_cross_mass_reduces_to_square(t, R):
    assert phi_cross_mass(t, t, R) == pytest.approx(phi_sq_mass(t, R), rel=1e-8)


def test_cross_mass_large_R_limit():
    # finite-R covariance per unit length approaches the limit
    R = 200.0
    m2 = 2.0
    assert m2 * phi_cross_mass(1.0, 0.6, R) / R == pytest.approx(
        limit_covariance_constant_sigma(1.0, 0.6, m2), rel=5e-3)
