"""Standard normal special functions and the tail/power functions built on them.

Everything here is evaluated through ``math.erfc`` so that upper tails keep
full relative precision far into the tail (``1 - Phi(t)`` is never formed by
subtraction).
"""

from __future__ import annotations

import math

import numpy as np

from .exceptions import DomainError

__all__ = [
    "std_normal_pdf",
    "std_normal_cdf",
    "std_normal_sf",
    "std_normal_quantile",
    "std_normal_isf",
    "tail_G",
    "tail_G_array",
    "power_F",
]

_SQRT2 = math.sqrt(2.0)
_SQRT2PI = math.sqrt(2.0 * math.pi)

# Acklam's rational approximation, relative error ~1.15e-9 before refinement.
_A = (-3.969683028665376e01, 2.209460984245205e02, -2.759285104469687e02,
      1.383577518672690e02, -3.066479806614716e01, 2.506628277459239e00)
_B = (-5.447609879822406e01, 1.615858368580409e02, -1.556989798598866e02,
      6.680131188771972e01, -1.328068155288572e01)
_C = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e00,
      -2.549732539343734e00, 4.374664141464968e00, 2.938163982698783e00)
_D = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e00,
      3.754408661907416e00)
_P_LOW = 0.02425


def _finite(z: float, name: str = "z") -> float:
    z = float(z)
    if not math.isfinite(z):
        raise DomainError(f"{name} must be finite, got {z!r}")
    return z


def std_normal_pdf(z: float) -> float:
    z = _finite(z)
    return math.exp(-0.5 * z * z) / _SQRT2PI


def std_normal_cdf(z: float) -> float:
    """Phi(z), the standard normal distribution function."""
    z = _finite(z)
    return 0.5 * math.erfc(-z / _SQRT2)


def std_normal_sf(z: float) -> float:
    """Upper tail 1 - Phi(z) without cancellation."""
    z = _finite(z)
    return 0.5 * math.erfc(z / _SQRT2)


def _acklam(p: float) -> float:
    if p < _P_LOW:
        r = math.sqrt(-2.0 * math.log(p))
        return ((((((_C[0] * r + _C[1]) * r + _C[2]) * r + _C[3]) * r + _C[4]) * r + _C[5])
                / ((((_D[0] * r + _D[1]) * r + _D[2]) * r + _D[3]) * r + 1.0))
    if p > 1.0 - _P_LOW:
        return -_acklam(1.0 - p)
    r = p - 0.5
    s = r * r
    return ((((((_A[0] * s + _A[1]) * s + _A[2]) * s + _A[3]) * s + _A[4]) * s + _A[5]) * r
            / (((((_B[0] * s + _B[1]) * s + _B[2]) * s + _B[3]) * s + _B[4]) * s + 1.0))


def _lower_quantile(p: float) -> float:
    # p <= 0.5: refine in the lower tail where Phi keeps relative precision.
    x = _acklam(p)
    for _ in range(2):
        e = 0.5 * math.erfc(-x / _SQRT2) - p
        u = e * _SQRT2PI * math.exp(0.5 * x * x)
        x = x - u / (1.0 + 0.5 * x * u)
    return x


def std_normal_quantile(p: float) -> float:
    """Inverse of :func:`std_normal_cdf` on the open interval (0, 1).

    Acklam's rational approximation followed by two Halley steps on Phi.
    """
    p = float(p)
    if not (0.0 < p < 1.0):
        raise DomainError(f"quantile requires 0 < p < 1, got {p!r}")
    if p <= 0.5:
        return _lower_quantile(p)
    # 1 - p is exact for p >= 0.5
    return -_lower_quantile(1.0 - p)


def std_normal_isf(alpha: float) -> float:
    """Upper-tail quantile: the z with 1 - Phi(z) = alpha.

    Preferred over ``std_normal_quantile(1 - alpha)`` for tiny ``alpha``.
    """
    alpha = float(alpha)
    if not (0.0 < alpha < 1.0):
        raise DomainError(f"upper-tail quantile requires 0 < alpha < 1, got {alpha!r}")
    if alpha <= 0.5:
        return -_lower_quantile(alpha)
    return _lower_quantile(1.0 - alpha)


def tail_G(t: float) -> float:
    """Two-sided tail G(t) = 2 (1 - Phi(t)) for t >= 0."""
    t = _finite(t, "t")
    if t < 0.0:
        raise DomainError(f"tail_G is defined for t >= 0, got {t!r}")
    return math.erfc(t / _SQRT2)


_erfc_ufunc = np.frompyfunc(math.erfc, 1, 1)


def tail_G_array(t) -> np.ndarray:
    """Vectorised :func:`tail_G`; entries must be finite and nonnegative."""
    t = np.asarray(t, dtype=float)
    if not np.all(np.isfinite(t)):
        raise DomainError("tail_G requires finite arguments")
    if np.any(t < 0.0):
        raise DomainError("tail_G is defined for t >= 0")
    return _erfc_ufunc(t / _SQRT2).astype(float)


def power_F(alpha: float, u: float) -> float:
    """F(alpha, u) = 1 - Phi(Phi^{-1}(1 - alpha/2) - u).

    Probability that a two-sided level-``alpha`` test on a unit-variance
    Gaussian statistic with mean ``u`` rejects on the correct side.
    """
    alpha = _finite(alpha, "alpha")
    u = _finite(u, "u")
    if not (0.0 < alpha <= 1.0):
        raise DomainError(f"power_F requires 0 < alpha <= 1, got {alpha!r}")
    if u < 0.0:
        raise DomainError(f"power_F requires u >= 0, got {u!r}")
    z = std_normal_isf(alpha / 2.0)
    return std_normal_sf(z - u)
