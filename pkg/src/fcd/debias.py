"""Decorrelating matrix, debiased estimator and the Lambda normalisations."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from ._backend import get_kernels
from .exceptions import DegenerateVarianceError, DomainError, ShapeError
from .solvers import check_design

__all__ = [
    "Decorrelator",
    "DebiasedEstimate",
    "empirical_covariance",
    "default_mu",
    "default_beta",
    "compute_decorrelator",
    "constraint_violation",
    "debias_estimate",
    "bias_noise_decomposition",
    "bias_bound_diagnostic",
]

log = logging.getLogger(__name__)

COLUMN_TOL = 1e-9
COLUMN_MAX_SWEEPS = 5_000
FEASIBILITY_SLACK = 1e-8


@dataclass
class Decorrelator:
    M: np.ndarray
    mu: float
    column_feasible: np.ndarray
    fallback_identity: bool
    beta: float | None = None
    sweeps: np.ndarray = field(default=None, repr=False)

    @property
    def failed_columns(self) -> list[int]:
        return np.flatnonzero(~self.column_feasible).tolist()


@dataclass
class DebiasedEstimate:
    theta_d: np.ndarray
    Lambda: np.ndarray
    Lambda0: np.ndarray


def empirical_covariance(X) -> np.ndarray:
    """``X'X / n``, symmetrised so the result is exactly symmetric."""
    X, _ = check_design(X)
    S = X.T @ X / X.shape[0]
    return np.ascontiguousarray(0.5 * (S + S.T))


def default_mu(n: int, p: int, a: float = 2.0) -> float:
    return a * math.sqrt(math.log(p) / n)


def default_beta(a_noise: float) -> float:
    """Largest admissible row-cap exponent ``1/2 - 1/a`` minus a 0.01 margin."""
    if a_noise <= 2:
        raise DomainError(f"noise moment parameter must exceed 2, got {a_noise!r}")
    return 0.5 - 1.0 / a_noise - 0.01


def _check_cov(S) -> np.ndarray:
    S = np.asarray(S, dtype=float)
    if S.ndim != 2 or S.shape[0] != S.shape[1]:
        raise ShapeError(f"covariance must be square, got shape {S.shape}")
    if not np.all(np.isfinite(S)):
        raise DomainError("covariance contains non-finite entries")
    scale = max(1.0, float(np.abs(S).max(initial=0.0)))
    if np.abs(S - S.T).max(initial=0.0) > 1e-12 * scale:
        raise DomainError("covariance matrix is not symmetric")
    return np.ascontiguousarray(S)


def constraint_violation(M, Sigma_hat) -> np.ndarray:
    """Per-row ``||Sigma_hat m_i - e_i||_inf``."""
    R = M @ Sigma_hat
    R[np.diag_indices_from(R)] -= 1.0
    return np.abs(R).max(axis=1)


def _clip_to_cap(m, i, X, cap):
    """Clip the off-diagonal entries of ``m`` to a common magnitude ceiling,
    the largest (by bisection) for which ``||X m||_inf <= cap``.

    ``m_i`` is kept: shrinking it breaks ``(Sigma_hat m)_i >= 1 - mu`` at once.
    If the diagonal alone already exceeds the cap the ceiling ends at 0.
    """
    off = np.ones(m.size, dtype=bool)
    off[i] = False

    def clipped(c):
        out = m.copy()
        out[off] = np.clip(m[off], -c, c)
        return out

    lo, hi = 0.0, float(np.abs(m[off]).max(initial=0.0))
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if np.abs(X @ clipped(mid)).max() <= cap:
            lo = mid
        else:
            hi = mid
    return clipped(lo)


def compute_decorrelator(Sigma_hat, mu, X=None, beta=None, *, per_column_fallback=False,
                         tol=COLUMN_TOL, max_sweeps=COLUMN_MAX_SWEEPS, backend=None) -> Decorrelator:
    """Build M row by row from the penalised program

        minimise 1/2 m' Sigma_hat m - m_i + mu ||m||_1,

    whose stationarity conditions give ``||Sigma_hat m - e_i||_inf <= mu``; the
    constraint is then re-checked for every row.  If any row fails the whole
    matrix falls back to the identity (or only that row, with
    ``per_column_fallback=True``).

    With ``beta`` the rows must also satisfy ``||X m_i||_inf <= n**beta``;
    offending rows are re-solved at ``mu/2``, their off-diagonal entries are
    clipped into the cap, and both constraints are re-verified.
    """
    S = _check_cov(Sigma_hat)
    mu = float(mu)
    if not (mu > 0 and math.isfinite(mu)):
        raise DomainError(f"mu must be positive, got {mu!r}")
    p = S.shape[0]
    if beta is not None:
        if X is None:
            raise DomainError("beta requires the design matrix X")
        if not (0.0 < beta < 0.5):
            raise DomainError(f"beta must lie in (0, 1/2), got {beta!r}")
        X, _ = check_design(X)
        if X.shape[1] != p:
            raise ShapeError(f"X has {X.shape[1]} columns but Sigma_hat is {p}x{p}")

    kern = get_kernels(backend)
    M, sweeps, converged = kern.cd_decorrelator(S, mu, float(tol), int(max_sweeps))
    viol = constraint_violation(M, S)

    # converged rows can miss the certificate by accumulated update error; polish once
    for i in np.flatnonzero(converged & (viol > mu + FEASIBILITY_SLACK)):
        b = np.zeros(p)
        b[i] = 1.0
        row = M[i].copy()
        extra, ok = kern.cd_quadratic_l1(S, b, mu, row, tol * 1e-3, max_sweeps)
        sweeps[i] += extra
        M[i] = row
    viol = constraint_violation(M, S)
    feasible = converged & (viol <= mu + FEASIBILITY_SLACK)

    if beta is not None:
        # Support entries of a surrogate solution sit on the constraint boundary, so
        # they cannot be clipped as is; re-solve the offending rows at mu/2 to leave
        # slack, then clip their off-diagonal entries into the cap.
        cap = X.shape[0] ** beta
        for i in np.flatnonzero(feasible):
            if np.abs(X @ M[i]).max() <= cap + FEASIBILITY_SLACK:
                continue
            b = np.zeros(p)
            b[i] = 1.0
            row = np.zeros(p)
            extra, ok = kern.cd_quadratic_l1(S, b, 0.5 * mu, row, tol, max_sweeps)
            sweeps[i] += extra
            row = _clip_to_cap(row, i, X, cap)
            r = S @ row
            r[i] -= 1.0
            M[i] = row
            feasible[i] = bool(ok and np.abs(r).max() <= mu + FEASIBILITY_SLACK
                               and np.abs(X @ row).max() <= cap + FEASIBILITY_SLACK)

    fallback = False
    if not feasible.all():
        bad = np.flatnonzero(~feasible)
        if per_column_fallback:
            log.warning("decorrelator: %d infeasible rows replaced by unit vectors: %s",
                        bad.size, bad[:20].tolist())
            M[bad] = 0.0
            M[bad, bad] = 1.0
        else:
            log.warning("decorrelator: %d infeasible rows, falling back to M = I: %s",
                        bad.size, bad[:20].tolist())
            M = np.eye(p)
            fallback = True
    return Decorrelator(M=M, mu=mu, column_feasible=feasible, fallback_identity=fallback,
                        beta=beta, sweeps=sweeps)


def _as_matrix(M):
    return M.M if isinstance(M, Decorrelator) else np.asarray(M, dtype=float)


def debias_estimate(theta_hat, M, X, y) -> DebiasedEstimate:
    """One-step correction ``theta_hat + M X'(y - X theta_hat)/n`` and its
    noise covariance ``Lambda = M Sigma_hat M'``.

    Raises
    ------
    DegenerateVarianceError
        If some ``Lambda_ii <= 0``.
    """
    X, y = check_design(X, y)
    Mm = _as_matrix(M)
    n, p = X.shape
    theta_hat = np.asarray(theta_hat, dtype=float).reshape(-1)
    if theta_hat.shape[0] != p or Mm.shape != (p, p):
        raise ShapeError("theta_hat, M and X dimensions disagree")
    theta_d = theta_hat + Mm @ (X.T @ (y - X @ theta_hat)) / n
    XM = X @ Mm.T
    Lam = XM.T @ XM / n
    Lam = 0.5 * (Lam + Lam.T)
    d = np.diag(Lam).copy()
    if np.any(d <= 0):
        raise DegenerateVarianceError(
            f"degenerate variance at coordinates {np.flatnonzero(d <= 0)[:10].tolist()}")
    s = np.sqrt(d)
    Lam0 = Lam / np.outer(s, s)
    np.fill_diagonal(Lam0, 1.0)
    return DebiasedEstimate(theta_d=theta_d, Lambda=Lam, Lambda0=Lam0)


def bias_noise_decomposition(M, X, theta_hat, theta0, w):
    """Return ``(Z, Delta)`` with ``Z = M X'w/sqrt(n)`` and
    ``Delta = sqrt(n)(M Sigma_hat - I)(theta0 - theta_hat)``; for ``y = X theta0 + w``
    their sum equals ``sqrt(n)(theta_d - theta0)``."""
    X, w = check_design(X, w)
    Mm = _as_matrix(M)
    n = X.shape[0]
    Z = Mm @ (X.T @ w) / math.sqrt(n)
    diff = np.asarray(theta0, dtype=float) - np.asarray(theta_hat, dtype=float)
    Delta = math.sqrt(n) * (Mm @ (X.T @ (X @ diff)) / n - diff)
    return Z, Delta


def bias_bound_diagnostic(M, Sigma_hat, theta_hat, theta0, n) -> float:
    """Realised bias ``||sqrt(n)(M Sigma_hat - I)(theta0 - theta_hat)||_inf``."""
    Mm = _as_matrix(M)
    diff = np.asarray(theta0, dtype=float) - np.asarray(theta_hat, dtype=float)
    return float(math.sqrt(n) * np.abs(Mm @ (Sigma_hat @ diff) - diff).max(initial=0.0))
