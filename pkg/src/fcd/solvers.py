"""Lasso and scaled-Lasso solvers by cyclic coordinate descent.

Both solvers work in covariance form: the Gram matrix ``X'X/n`` and the
correlation vector ``X'y/n`` are formed once, after which a sweep costs
O(p) per coordinate plus O(p) per nonzero move.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from ._backend import get_kernels
from .exceptions import DegenerateNoiseError, DomainError, ShapeError

__all__ = [
    "LassoSolution",
    "ScaledLassoSolution",
    "check_design",
    "lasso_objective",
    "kkt_residual",
    "default_lambda_bar",
    "solve_lasso",
    "solve_scaled_lasso",
]

log = logging.getLogger(__name__)

LASSO_TOL = 1e-8
LASSO_MAX_SWEEPS = 10_000
SIGMA_TOL = 1e-8
SCALED_MAX_OUTER = 100


@dataclass
class LassoSolution:
    theta_hat: np.ndarray
    lam: float
    iterations: int
    converged: bool
    kkt_residual: float


@dataclass
class ScaledLassoSolution:
    theta_hat: np.ndarray
    sigma_hat: float
    lambda_bar: float
    lam: float  # sigma * lambda_bar used in the final inner Lasso
    outer_iterations: int
    converged: bool
    kkt_residual: float


def check_design(X, y=None) -> tuple[np.ndarray, np.ndarray | None]:
    """Validate and convert a design matrix (and optional response)."""
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise ShapeError(f"X must be two-dimensional, got shape {X.shape}")
    n, p = X.shape
    if n < 1 or p < 1:
        raise ShapeError(f"X must have at least one row and column, got {X.shape}")
    if not np.all(np.isfinite(X)):
        raise DomainError("X contains non-finite entries")
    if y is None:
        return X, None
    y = np.asarray(y, dtype=float).reshape(-1)
    if y.shape[0] != n:
        raise ShapeError(f"y has length {y.shape[0]} but X has {n} rows")
    if not np.all(np.isfinite(y)):
        raise DomainError("y contains non-finite entries")
    return X, y


def lasso_objective(X, y, theta, lam) -> float:
    r = y - X @ theta
    return float(r @ r) / (2 * X.shape[0]) + lam * float(np.abs(theta).sum())


def kkt_residual(gram, xty, theta, lam) -> float:
    """Largest violation of the Lasso subgradient conditions.

    On the support the gradient must equal ``-lam * sign(theta_j)``; off the
    support its magnitude must not exceed ``lam``.
    """
    grad = gram @ theta - xty
    on = theta != 0
    viol = np.zeros_like(theta)
    viol[on] = np.abs(grad[on] + lam * np.sign(theta[on]))
    viol[~on] = np.maximum(np.abs(grad[~on]) - lam, 0.0)
    return float(viol.max()) if viol.size else 0.0


def default_lambda_bar(n: int, p: int, factor: float = 10.0) -> float:
    """``factor * sqrt(2 log p / n)``; ``factor=10`` is the consistency-proof choice."""
    return factor * math.sqrt(2.0 * math.log(max(p, 2)) / n)


def _gram(X, y):
    n = X.shape[0]
    gram = X.T @ X / n
    gram = np.ascontiguousarray(0.5 * (gram + gram.T))
    return gram, X.T @ y / n


def _cd(gram, xty, lam, theta0, tol, max_sweeps, backend):
    kern = get_kernels(backend)
    theta = np.array(theta0, dtype=float, copy=True)
    sweeps, converged = kern.cd_quadratic_l1(gram, xty, float(lam), theta, float(tol), int(max_sweeps))
    return theta, int(sweeps), bool(converged)


def solve_lasso(X, y, lam, *, theta0=None, tol=LASSO_TOL, max_sweeps=LASSO_MAX_SWEEPS,
                gram=None, xty=None, backend=None) -> LassoSolution:
    """Minimise ``(1/2n)||y - X theta||^2 + lam * ||theta||_1``.

    ``gram`` and ``xty`` may be passed to reuse a precomputed ``X'X/n`` and
    ``X'y/n``.  Hitting ``max_sweeps`` returns with ``converged=False``.
    """
    X, y = check_design(X, y)
    lam = float(lam)
    if not (lam > 0 and math.isfinite(lam)):
        raise DomainError(f"lambda must be positive and finite, got {lam!r}")
    if gram is None or xty is None:
        gram, xty = _gram(X, y)
    p = X.shape[1]
    start = np.zeros(p) if theta0 is None else np.asarray(theta0, dtype=float)
    theta, sweeps, converged = _cd(gram, xty, lam, start, tol, max_sweeps, backend)
    if not converged:
        log.warning("lasso hit the sweep cap (%d) at lambda=%g", max_sweeps, lam)
    return LassoSolution(theta, lam, sweeps, converged, kkt_residual(gram, xty, theta, lam))


def solve_scaled_lasso(X, y, lambda_bar=None, *, tol=SIGMA_TOL, max_outer=SCALED_MAX_OUTER,
                       lasso_tol=LASSO_TOL, backend=None) -> ScaledLassoSolution:
    """Joint minimiser of ``||y - X theta||^2/(2 sigma n) + sigma/2 + lambda_bar ||theta||_1``.

    Alternates a Lasso fit at ``lam = sigma * lambda_bar`` with the closed-form
    noise update ``sigma = ||y - X theta||_2 / sqrt(n)``, starting from
    ``sigma = ||y||_2 / sqrt(n)``.  The returned ``sigma_hat`` is the residual
    RMS of the returned ``theta_hat``.

    Raises
    ------
    DegenerateNoiseError
        If ``y`` is zero or the fit interpolates the data.
    """
    X, y = check_design(X, y)
    n, p = X.shape
    if lambda_bar is None:
        lambda_bar = default_lambda_bar(n, p)
    lambda_bar = float(lambda_bar)
    if not (lambda_bar > 0 and math.isfinite(lambda_bar)):
        raise DomainError(f"lambda_bar must be positive and finite, got {lambda_bar!r}")

    sigma = float(np.linalg.norm(y)) / math.sqrt(n)
    if sigma == 0.0:
        raise DegenerateNoiseError("noise level degenerate: y is identically zero")
    floor = 1e-12 * sigma

    gram, xty = _gram(X, y)
    theta = np.zeros(p)
    converged = False
    lam = sigma * lambda_bar
    outer = 0
    for outer in range(1, max_outer + 1):
        lam = sigma * lambda_bar
        theta, _, inner_ok = _cd(gram, xty, lam, theta, lasso_tol, LASSO_MAX_SWEEPS, backend)
        new_sigma = float(np.linalg.norm(y - X @ theta)) / math.sqrt(n)
        if new_sigma <= floor:
            raise DegenerateNoiseError("noise level degenerate: residual collapsed to zero")
        change = abs(new_sigma - sigma)
        sigma = new_sigma
        if change <= tol and inner_ok:
            converged = True
            break
    if not converged:
        log.warning("scaled lasso did not converge in %d outer iterations", max_outer)
    return ScaledLassoSolution(
        theta_hat=theta,
        sigma_hat=sigma,
        lambda_bar=lambda_bar,
        lam=lam,
        outer_iterations=outer,
        converged=converged,
        kkt_residual=kkt_residual(gram, xty, theta, lam),
    )
