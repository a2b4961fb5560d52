"""Circular statistics: versine distortion and dispersion conversions."""

from __future__ import annotations

import math

import numpy as np
from scipy import optimize, special

from .errors import DomainError

DEG_PER_RAD = 360.0 / (2.0 * math.pi)


def normalize_angle(deg):
    """Map degrees into [0, 360)."""
    out = np.mod(deg, 360.0)
    out = np.where(out >= 360.0, 0.0, out)
    return float(out) if np.ndim(out) == 0 else out


def angle_difference(a, b):
    """Signed difference ``a - b`` wrapped into [-180, 180)."""
    return np.mod(np.asarray(a) - np.asarray(b) + 180.0, 360.0) - 180.0


def versin(x):
    """1 - cos(x) for ``x`` in radians, accurate near zero."""
    return 2.0 * np.sin(np.asarray(x) / 2.0) ** 2


def versin_distortion(orientation, bearing):
    """Distortion between a measured orientation and a bearing, both in degrees.

    >>> versin_distortion(180.0, 0.0)
    2.0
    """
    d = versin(np.radians(np.asarray(orientation, float) - np.asarray(bearing, float)))
    return float(d) if np.ndim(d) == 0 else d


def variance_to_sigma(variance: float) -> float:
    """Circular standard deviation in degrees from circular variance."""
    if not 0.0 <= variance < 1.0:
        raise DomainError(f"circular variance must lie in [0, 1), got {variance}")
    return DEG_PER_RAD * math.sqrt(-2.0 * math.log1p(-variance))


def sigma_to_variance(sigma: float) -> float:
    if sigma < 0:
        raise DomainError(f"sigma must be non-negative, got {sigma}")
    theta = sigma / DEG_PER_RAD
    return -math.expm1(-0.5 * theta * theta)


def von_mises_variance(kappa: float) -> float:
    """Circular variance ``1 - I1(k)/I0(k)`` of a von Mises distribution."""
    if kappa == 0:
        return 1.0
    return 1.0 - special.i1e(kappa) / special.i0e(kappa)


def kappa_for_sigma(sigma: float) -> float:
    """Concentration of the von Mises law with the given circular std (degrees).

    Solved by bracketing on the Bessel ratio; the variance is monotone
    decreasing in kappa.
    """
    if sigma <= 0:
        raise DomainError("sigma must be positive")
    target = sigma_to_variance(sigma)
    if target >= 1.0:
        return 0.0
    lo, hi = 1e-12, 1.0
    while von_mises_variance(hi) > target:
        hi *= 2.0
        if hi > 1e15:
            raise DomainError(f"sigma {sigma} too small to represent")
    return optimize.brentq(lambda k: von_mises_variance(k) - target, lo, hi,
                           xtol=1e-14, rtol=1e-14, maxiter=500)
