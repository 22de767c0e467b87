"""Test statistics, the data-dependent FCD threshold, and p-values."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .debias import DebiasedEstimate
from .exceptions import DomainError
from .gauss import std_normal_isf, tail_G, tail_G_array

RATIO_SLACK = 1e-12

__all__ = [
    "TestStatistics",
    "SelectionResult",
    "test_statistics",
    "search_ceiling",
    "fallback_threshold",
    "fdp_estimate",
    "fcd_threshold",
    "compute_pvalues",
]


@dataclass
class TestStatistics:
    __test__ = False  # not a pytest class

    T: np.ndarray
    sigma_hat: float
    Lambda_diag: np.ndarray


@dataclass
class SelectionResult:
    t0: float
    threshold_found: bool
    selected: np.ndarray  # sorted 0-based indices
    signs: np.ndarray  # length p, sign(T_i) on the selection and 0 elsewhere
    p_values: np.ndarray
    q: float

    @property
    def n_selected(self) -> int:
        return int(self.selected.size)


def test_statistics(theta_d, sigma_hat, n) -> TestStatistics:
    """``T_i = sqrt(n) theta_d_i / (sigma_hat sqrt(Lambda_ii))``."""
    sigma_hat = float(sigma_hat)
    if not (sigma_hat > 0 and math.isfinite(sigma_hat)):
        raise DomainError(f"sigma_hat must be positive, got {sigma_hat!r}")
    if isinstance(theta_d, DebiasedEstimate):
        td, lam_diag = theta_d.theta_d, np.diag(theta_d.Lambda).copy()
    else:
        td, lam_diag = theta_d
        td = np.asarray(td, dtype=float)
        lam_diag = np.asarray(lam_diag, dtype=float)
    if np.any(lam_diag <= 0):
        raise DomainError("Lambda diagonal must be positive")
    T = math.sqrt(n) * td / (sigma_hat * np.sqrt(lam_diag))
    return TestStatistics(T=T, sigma_hat=sigma_hat, Lambda_diag=lam_diag)


def search_ceiling(p: int) -> float:
    """``t_p = sqrt(2 log p - 2 log log p)``."""
    return math.sqrt(2.0 * math.log(p) - 2.0 * math.log(math.log(p)))


def fallback_threshold(p: int) -> float:
    return math.sqrt(2.0 * math.log(p))


def fdp_estimate(t: float, abs_T_sorted: np.ndarray, p: int) -> float:
    """``2p(1 - Phi(t)) / max(R(t), 1)`` with ``R(t) = #{|T_i| >= t}``."""
    R = abs_T_sorted.size - np.searchsorted(abs_T_sorted, t, side="left")
    return p * tail_G(t) / max(int(R), 1)


def _as_T(T) -> np.ndarray:
    T = T.T if isinstance(T, TestStatistics) else T
    T = np.asarray(T, dtype=float).reshape(-1)
    if not np.all(np.isfinite(T)):
        raise DomainError("test statistics must be finite")
    return T


def fcd_threshold(T, q: float, p: int | None = None) -> SelectionResult:
    """Data-dependent threshold and selection.

    ``t0 = inf{0 <= t <= t_p : 2p(1 - Phi(t)) / max(R(t), 1) <= q}``, else
    ``sqrt(2 log p)``; coordinates with ``|T_i| >= t0`` are selected with sign
    ``sign(T_i)``.

    ``R`` is piecewise constant between the sorted ``|T_i|`` and the numerator
    decreases in ``t``, so on a stretch where ``R = k`` the feasible ``t`` start
    at ``z_k = Phi^{-1}(1 - q max(k,1)/(2p))``.  The infimum is therefore the
    smallest feasible point among ``{0}``, the ``|T_i|`` and the ``z_k``.
    """
    T = _as_T(T)
    q = float(q)
    if not (0.0 < q <= 1.0):
        raise DomainError(f"q must lie in (0, 1], got {q!r}")
    p = T.size if p is None else int(p)
    if p < 3:
        raise DomainError(f"dimension below procedure's domain: p={p} (need p >= 3)")
    absT = np.sort(np.abs(T))
    tp = search_ceiling(p)

    cands = [0.0]
    cands.extend(float(a) for a in absT if a <= tp)
    for k in range(0, absT.size + 1):
        alpha = q * max(k, 1) / (2.0 * p)
        if alpha >= 0.5:
            continue  # z_k <= 0, covered by t = 0
        z = std_normal_isf(alpha)
        if z <= tp:
            cands.append(z)
    cands.sort()

    # z_k is a root of the ratio, which evaluates to q only up to rounding there;
    # a relative slack of 1e-12 keeps such roots (and the |T_i| equal to them).
    t0 = None
    for t in cands:
        if fdp_estimate(t, absT, p) <= q * (1.0 + RATIO_SLACK):
            t0 = t
            break

    found = t0 is not None
    if not found:
        t0 = fallback_threshold(p)
    sel = np.flatnonzero(np.abs(T) >= t0)
    signs = np.zeros(T.size, dtype=np.int64)
    signs[sel] = np.sign(T[sel]).astype(np.int64)
    return SelectionResult(t0=float(t0), threshold_found=found, selected=sel,
                           signs=signs, p_values=compute_pvalues(T), q=q)


def compute_pvalues(T) -> np.ndarray:
    """Two-sided p-values ``2(1 - Phi(|T_i|))``."""
    return tail_G_array(np.abs(_as_T(T)))
