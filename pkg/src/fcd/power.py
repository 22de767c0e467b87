"""Ground-truth metrics and the analytic power bound."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .exceptions import DomainError, ShapeError
from .gauss import power_F, std_normal_isf
from .selection import SelectionResult

__all__ = [
    "GroundTruth",
    "DirectionalMetrics",
    "directional_metrics",
    "power_lower_bound",
    "t_star",
    "unit_power_margin",
    "bound_precondition_holds",
]


@dataclass
class GroundTruth:
    theta0: np.ndarray

    def __post_init__(self):
        self.theta0 = np.asarray(self.theta0, dtype=float).reshape(-1)

    @property
    def support(self) -> np.ndarray:
        return np.flatnonzero(self.theta0 != 0)

    @property
    def s0(self) -> int:
        return int(np.count_nonzero(self.theta0))

    @property
    def p(self) -> int:
        return self.theta0.size


@dataclass
class DirectionalMetrics:
    fdp_dir: float
    fdp_classical: float
    power: float
    n_selected: int


def directional_metrics(sel: SelectionResult, truth: GroundTruth) -> DirectionalMetrics:
    """Directional FDP, classical FDP and directional power of one selection.

    A selected coordinate is a directional false discovery when its declared
    sign differs from ``sign(theta0_j)`` (with ``sign(0) = 0``), so null
    selections count as well as sign flips.
    """
    if sel.signs.size != truth.p:
        raise ShapeError(f"selection covers {sel.signs.size} coordinates, truth has {truth.p}")
    S = sel.selected
    true_sign = np.sign(truth.theta0[S])
    est_sign = sel.signs[S]
    denom = max(S.size, 1)
    wrong = int(np.count_nonzero(est_sign != true_sign))
    nulls = int(np.count_nonzero(true_sign == 0))
    right = S.size - wrong
    return DirectionalMetrics(
        fdp_dir=wrong / denom,
        fdp_classical=nulls / denom,
        power=right / max(truth.s0, 1),
        n_selected=int(S.size),
    )


def _signal_strengths(theta0, n, sigma, omega_diag):
    theta0 = np.asarray(theta0, dtype=float).reshape(-1)
    omega_diag = np.asarray(omega_diag, dtype=float).reshape(-1)
    if omega_diag.shape != theta0.shape:
        raise ShapeError("Omega diagonal and theta0 lengths differ")
    if sigma <= 0 or np.any(omega_diag <= 0):
        raise DomainError("sigma and the Omega diagonal must be positive")
    S = np.flatnonzero(theta0)
    u = math.sqrt(n) * np.abs(theta0[S]) / (sigma * np.sqrt(omega_diag[S]))
    return S, u


def power_lower_bound(truth, n: int, sigma: float, omega_diag, q: float) -> float:
    """``(1/s0) sum_{i in S} F(q s0/p, sqrt(n)|theta0_i| / (sigma sqrt(Omega_ii)))``."""
    theta0 = truth.theta0 if isinstance(truth, GroundTruth) else np.asarray(truth, dtype=float)
    S, u = _signal_strengths(theta0, n, sigma, omega_diag)
    s0, p = S.size, theta0.size
    if s0 == 0:
        raise DomainError("power bound undefined for s0 = 0")
    alpha = q * s0 / p
    return float(np.mean([power_F(alpha, ui) for ui in u]))


def bound_precondition_holds(truth, n, sigma, omega_diag) -> bool:
    """Whether every signal exceeds ``(sigma/sqrt(n)) sqrt(2 Omega_ii log(p/s0))``."""
    theta0 = truth.theta0 if isinstance(truth, GroundTruth) else np.asarray(truth, dtype=float)
    S, u = _signal_strengths(theta0, n, sigma, omega_diag)
    if S.size == 0:
        return False
    return bool(np.all(u > math.sqrt(2.0 * math.log(theta0.size / S.size))))


def t_star(q: float, s0: int, p: int) -> float:
    """Data-independent threshold ``Phi^{-1}(1 - q s0/(2p))``.

    The vanishing correction inside the quantile is dropped.
    """
    alpha = q * s0 / (2.0 * p)
    if not (0.0 < alpha < 1.0):
        raise DomainError(f"q*s0/(2p) must lie in (0, 1), got {alpha!r}")
    return std_normal_isf(alpha)


def unit_power_margin(theta_min, n, sigma, max_omega_ii, q, s0, p) -> float:
    """``sqrt(n) theta_min - sigma sqrt(2 max_i Omega_ii log(2p/(q s0)))``.

    Power tends to one when this quantity diverges.
    """
    if s0 < 1:
        raise DomainError("unit_power_margin requires s0 >= 1")
    return math.sqrt(n) * theta_min - sigma * math.sqrt(
        2.0 * max_omega_ii * math.log(2.0 * p / (q * s0)))
