"""End-to-end FCD fit on one data set."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .debias import (
    Decorrelator,
    DebiasedEstimate,
    compute_decorrelator,
    debias_estimate,
    default_mu,
    empirical_covariance,
)
from .exceptions import DomainError
from .selection import SelectionResult, TestStatistics, fcd_threshold, test_statistics
from .solvers import ScaledLassoSolution, check_design, solve_lasso, solve_scaled_lasso

__all__ = ["FCDFit", "PreparedDesign", "standardize_columns", "prepare_design", "fit_fcd"]

log = logging.getLogger(__name__)


@dataclass
class FCDFit:
    selection: SelectionResult
    stats: TestStatistics
    scaled_lasso: ScaledLassoSolution
    decorrelator: Decorrelator
    debiased: DebiasedEstimate
    theta_hat: np.ndarray  # Lasso estimate on the standardised scale
    col_scale: np.ndarray  # ||x_j|| / sqrt(n) of the raw columns
    sigma_hat: float
    lam: float  # penalty behind theta_hat
    Sigma_hat: np.ndarray  # empirical covariance of the standardised design

    @property
    def theta_hat_original(self) -> np.ndarray:
        return self.theta_hat / self.col_scale

    @property
    def theta_d_original(self) -> np.ndarray:
        return self.debiased.theta_d / self.col_scale


def standardize_columns(X) -> tuple[np.ndarray, np.ndarray]:
    """Rescale columns to ``||x_j||_2 = sqrt(n)``; returns ``(X_std, scale)``."""
    X, _ = check_design(X)
    scale = np.linalg.norm(X, axis=0) / math.sqrt(X.shape[0])
    zero = np.flatnonzero(scale == 0)
    if zero.size:
        raise DomainError(f"design has all-zero columns: {zero[:10].tolist()}")
    return X / scale, scale


@dataclass
class PreparedDesign:
    """Standardised design plus its decorrelator; depends on X only."""

    X_std: np.ndarray
    col_scale: np.ndarray
    Sigma_hat: np.ndarray
    decorrelator: Decorrelator


def prepare_design(X, *, mu=None, mu_a=2.0, beta=None, per_column_fallback=False,
                   backend=None) -> PreparedDesign:
    X_std, scale = standardize_columns(X)
    n, p = X_std.shape
    S = empirical_covariance(X_std)
    if mu is None:
        mu = default_mu(n, p, mu_a)
    dec = compute_decorrelator(S, mu, X=X_std if beta is not None else None, beta=beta,
                               per_column_fallback=per_column_fallback, backend=backend)
    return PreparedDesign(X_std, scale, S, dec)


def fit_fcd(X, y, q=0.1, *, lambda_bar=None, lam=None, mu=None, mu_a=2.0, beta=None,
            per_column_fallback=False, design: PreparedDesign | None = None,
            backend=None) -> FCDFit:
    """Run the FCD selection procedure.

    Columns are first rescaled to unit empirical variance; the test statistics
    are invariant to this, and it puts ``lambda_bar`` and ``mu`` on the scale
    their defaults assume.  The scaled Lasso supplies both the coefficient
    estimate and the noise level unless ``lam`` forces a separate Lasso fit.

    Parameters
    ----------
    X, y : design (n x p) and response (n,)
    q : target directional FDR level
    lambda_bar : scaled-Lasso penalty; default ``10 sqrt(2 log p / n)``
    lam : optional Lasso penalty overriding the scaled-Lasso coefficients
    mu, mu_a : decorrelator constraint level, default ``mu_a sqrt(log p / n)``
    beta : row cap exponent for non-Gaussian noise (``||X m||_inf <= n^beta``)
    design : result of :func:`prepare_design` for this ``X`` to skip recomputation
    """
    X, y = check_design(X, y)
    n, p = X.shape
    if p < 3:
        raise DomainError(f"dimension below procedure's domain: p={p} (need p >= 3)")
    if n < 2:
        raise DomainError(f"need at least two samples, got n={n}")
    if design is None:
        design = prepare_design(X, mu=mu, mu_a=mu_a, beta=beta,
                                per_column_fallback=per_column_fallback, backend=backend)
    Xs = design.X_std

    sl = solve_scaled_lasso(Xs, y, lambda_bar, backend=backend)
    theta_hat, used_lam = sl.theta_hat, sl.lam
    if lam is not None:
        theta_hat = solve_lasso(Xs, y, lam, backend=backend).theta_hat
        used_lam = float(lam)

    deb = debias_estimate(theta_hat, design.decorrelator, Xs, y)
    stats = test_statistics(deb, sl.sigma_hat, n)
    sel = fcd_threshold(stats, q, p)
    return FCDFit(selection=sel, stats=stats, scaled_lasso=sl, decorrelator=design.decorrelator,
                  debiased=deb, theta_hat=theta_hat, col_scale=design.col_scale,
                  sigma_hat=sl.sigma_hat, lam=used_lam, Sigma_hat=design.Sigma_hat)
