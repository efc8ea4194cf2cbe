"""Closed forms for the 1-D wave kernel and its window integrals.

``green(t, x) = 1/2`` on the open cone ``|x| < t`` and 0 elsewhere.  The
inequality is strict everywhere: a jump exactly on a cone boundary
contributes nothing, and a jump never sees its own atom.

``phi(t, R, r, y)`` is the weight a jump at ``(r, y)`` carries in the
spatial integral of the solution over ``[-R, R]`` at time ``t``.
"""
from __future__ import annotations

import numpy as np


def green(t, x):
    t = np.asarray(t, dtype=float)
    x = np.asarray(x, dtype=float)
    out = np.where(np.abs(x) < t, 0.5, 0.0)
    return out[()] if out.ndim == 0 else out


def phi(t, R, r, y):
    """``int_{-R}^{R} green(t - r, x - y) dx``; zero for ``r >= t``."""
    a = np.asarray(t, dtype=float) - np.asarray(r, dtype=float)
    y = np.asarray(y, dtype=float)
    R = np.asarray(R, dtype=float)
    hi = np.minimum(R, y + a)
    lo = np.maximum(-R, y - a)
    out = np.where(a > 0, 0.5 * np.maximum(0.0, hi - lo), 0.0)
    return out[()] if out.ndim == 0 else out


def phi_mass(t, R, r):
    """``int_R phi(t, R, r, y) dy = 2 (t - r) R`` for ``r < t``."""
    a = np.asarray(t, dtype=float) - np.asarray(r, dtype=float)
    out = np.where(a > 0, 2.0 * a * np.asarray(R, dtype=float), 0.0)
    return out[()] if out.ndim == 0 else out


def phi_sq_slice(a, R):
    """``int_R phi^2 dy`` at time-to-go ``a = t - r``.

    With ``m = min(a, R)``, ``M = max(a, R)`` the profile in ``y`` is a
    plateau of height ``m`` on ``|y| <= M - m`` plus two linear ramps of
    width ``2m``, giving ``2 M m^2 - (2/3) m^3``.
    """
    a = np.maximum(np.asarray(a, dtype=float), 0.0)
    m = np.minimum(a, R)
    M = np.maximum(a, R)
    return 2.0 * M * m**2 - (2.0 / 3.0) * m**3


def phi_sq_mass(t, R):
    """``int_0^t int_R phi(t, R, r, y)^2 dy dr``.

    Times ``m2`` this is the exact variance of the spatial integral when
    sigma is identically 1.
    """
    t = float(t)
    R = float(R)
    if R <= 0:
        raise ValueError("R must be positive")
    if t <= 0:
        return 0.0
    if t <= R:
        return 2.0 * R * t**3 / 3.0 - t**4 / 6.0
    return R**2 * t**2 - (2.0 / 3.0) * R**3 * t + R**4 / 6.0


def phi_cross_mass(t, s, R):
    """``int int phi(t, R, r, y) phi(s, R, r, y) dy dr`` by adaptive quadrature.

    Used for the finite-R covariance of two spatial integrals under
    constant sigma (no closed form is kept for the mixed case).
    """
    from scipy import integrate

    lo = min(t, s)
    if lo <= 0:
        return 0.0
    R = float(R)

    def inner(r):
        a, b = t - r, s - r
        pts = sorted({-R - a, -R + a, R - a, R + a, -R - b, -R + b, R - b, R + b})
        lo_y, hi_y = -R - max(a, b), R + max(a, b)
        return integrate.quad(
            lambda y: phi(t, R, r, y) * phi(s, R, r, y),
            lo_y,
            hi_y,
            points=[p for p in pts if lo_y < p < hi_y],
            epsabs=1e-13,
            epsrel=1e-11,
            limit=200,
        )[0]

    return integrate.quad(inner, 0.0, lo, epsabs=1e-12, epsrel=1e-11, limit=200)[0]


def limit_covariance_constant_sigma(t, s, m2, c=1.0):
    """``K(t, s) = 2 c^2 m2 int_0^{t^s} (t - r)(s - r) dr`` for sigma == c."""
    lo = min(t, s)
    if lo <= 0:
        return 0.0
    # int_0^lo (t - r)(s - r) dr
    integral = t * s * lo - (t + s) * lo**2 / 2.0 + lo**3 / 3.0
    return 2.0 * c * c * m2 * integral
