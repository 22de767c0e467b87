import math

import numpy as np
import pytest

from fcd.debias import (
    bias_bound_diagnostic,
    bias_noise_decomposition,
    compute_decorrelator,
    constraint_violation,
    debias_estimate,
    default_beta,
    default_mu,
    empirical_covariance,
)
from fcd.exceptions import DegenerateVarianceError, DomainError
from fcd.simulate import CovarianceSpec, build_covariance, precision_matrix


def test_empirical_covariance_examples(rng):
    n, p = 30, 6
    Q, _ = np.linalg.qr(rng.standard_normal((n, p)))
    np.testing.assert_allclose(empirical_covariance(math.sqrt(n) * Q), np.eye(p), atol=1e-13)
    assert empirical_covariance(np.array([[1.0], [3.0]]))[0, 0] == 5.0

    X = rng.standard_normal((7, 4))
    naive = np.zeros((4, 4))
    for i in range(4):
        for j in range(4):
            naive[i, j] = sum(X[k, i] * X[k, j] for k in range(7)) / 7
    S = empirical_covariance(X)
    np.testing.assert_allclose(S, naive, atol=1e-12)
    assert np.array_equal(S, S.T)


def test_identity_covariance_closed_form(backend):
    dec = compute_decorrelator(np.eye(5), 0.1, backend=backend)
    np.testing.assert_allclose(dec.M, 0.9 * np.eye(5), atol=1e-14)
    assert not dec.fallback_identity


def test_large_mu_zero_feasible(backend):
    dec = compute_decorrelator(np.eye(4), 1.5, backend=backend)
    assert np.all(constraint_violation(dec.M, np.eye(4)) <= 1.5)
    assert not dec.fallback_identity


def test_two_dimensional_grid_oracle(backend):
    S = np.array([[1.0, 0.5], [0.5, 1.0]])
    mu = 0.05
    dec = compute_decorrelator(S, mu, backend=backend)
    m = dec.M[0]
    assert np.abs(S @ m - np.array([1.0, 0.0])).max() <= mu + 1e-8
    val = m @ S @ m

    # feasible set of |S m - e_1|_inf <= mu is the image of a square under S^{-1}
    Sinv = np.linalg.inv(S)
    g = np.linspace(-mu, mu, 100)
    pts = np.array([Sinv @ (np.array([1.0, 0.0]) + np.array([a, b])) for a in g for b in g])
    vals = np.einsum("ij,jk,ik->i", pts, S, pts)
    assert val <= vals.min() + 1e-12


def test_constraint_certificate_random(rng, backend):
    n, p = 200, 60
    Sigma = build_covariance(CovarianceSpec("circulant", p, eta=0.4))
    X = rng.standard_normal((n, p)) @ np.linalg.cholesky(Sigma).T
    S = empirical_covariance(X)
    mu = default_mu(n, p, 1.0)
    dec = compute_decorrelator(S, mu, backend=backend)
    assert not dec.fallback_identity
    assert np.all(constraint_violation(dec.M, S) <= mu + 1e-8)


def test_backends_agree_on_decorrelator(rng):
    X = rng.standard_normal((80, 40))
    S = empirical_covariance(X)
    a = compute_decorrelator(S, 0.2, backend="python")
    b = compute_decorrelator(S, 0.2)
    np.testing.assert_allclose(a.M, b.M, atol=1e-10)


def test_infeasible_falls_back_to_identity(rng, caplog):
    X = rng.standard_normal((10, 30))
    S = empirical_covariance(X)
    dec = compute_decorrelator(S, 1e-4, max_sweeps=3)
    assert dec.fallback_identity
    assert np.array_equal(dec.M, np.eye(30))
    assert dec.failed_columns
    assert "falling back" in caplog.text


def test_per_column_fallback(rng):
    X = rng.standard_normal((10, 30))
    S = empirical_covariance(X)
    dec = compute_decorrelator(S, 1e-4, max_sweeps=3, per_column_fallback=True)
    assert not dec.fallback_identity
    for i in dec.failed_columns:
        e = np.zeros(30)
        e[i] = 1.0
        np.testing.assert_array_equal(dec.M[i], e)


def test_decorrelator_validation():
    with pytest.raises(DomainError):
        compute_decorrelator(np.eye(3), 0.0)
    with pytest.raises(DomainError):
        compute_decorrelator(np.array([[1.0, 0.2], [0.1, 1.0]]), 0.1)
    with pytest.raises(DomainError):
        compute_decorrelator(np.eye(3), 0.1, beta=0.2)  # beta without X


def test_row_cap_loose_leaves_rows_unchanged(rng):
    n, p = 400, 20
    X = rng.standard_normal((n, p))
    S = empirical_covariance(X)
    mu = default_mu(n, p, 2.0)
    plain = compute_decorrelator(S, mu)
    beta = 0.45
    capped = compute_decorrelator(S, mu, X=X, beta=beta)
    assert not capped.fallback_identity
    np.testing.assert_array_equal(capped.M, plain.M)
    assert np.abs(X @ capped.M.T).max() <= n**beta + 1e-8


def test_row_cap_binding_is_verified(rng, caplog):
    n, p = 400, 20
    X = rng.standard_normal((n, p))
    X[0] *= 3.0  # one high-leverage sample
    S = empirical_covariance(X)
    mu = default_mu(n, p, 2.0)
    beta = default_beta(4.0)
    cap = n**beta
    assert np.abs(X @ compute_decorrelator(S, mu).M.T).max() > cap
    dec = compute_decorrelator(S, mu, X=X, beta=beta, per_column_fallback=True)
    ok = dec.column_feasible
    assert not ok.all() and "infeasible rows" in caplog.text
    assert np.all(np.abs(X @ dec.M[ok].T).max(axis=0) <= cap + 1e-8)
    assert np.all(constraint_violation(dec.M, S)[ok] <= mu + 1e-8)
    assert compute_decorrelator(S, mu, X=X, beta=beta).fallback_identity


def test_default_beta():
    assert default_beta(4.0) == pytest.approx(0.24)
    with pytest.raises(DomainError):
        default_beta(2.0)


def test_debias_examples(rng):
    n, p = 40, 10
    X = rng.standard_normal((n, p))
    S = empirical_covariance(X)
    M = np.linalg.inv(S)
    th_hat = rng.standard_normal(p)
    # zero residual
    est = debias_estimate(th_hat, rng.standard_normal((p, p)), X, X @ th_hat)
    np.testing.assert_allclose(est.theta_d, th_hat, atol=1e-12)
    # M Sigma_hat = I, noiseless
    theta0 = rng.standard_normal(p)
    est = debias_estimate(th_hat, M, X, X @ theta0)
    np.testing.assert_allclose(est.theta_d, theta0, atol=1e-10)


def test_decomposition_identity(rng):
    n, p = 50, 80
    X = rng.standard_normal((n, p))
    theta0 = np.zeros(p)
    theta0[:4] = [1.0, -2.0, 0.5, 3.0]
    w = rng.standard_normal(n)
    y = X @ theta0 + w
    M = compute_decorrelator(empirical_covariance(X), 0.3).M
    th_hat = theta0 + 0.1 * rng.standard_normal(p)
    est = debias_estimate(th_hat, M, X, y)
    Z, Delta = bias_noise_decomposition(M, X, th_hat, theta0, w)
    np.testing.assert_allclose(math.sqrt(n) * (est.theta_d - theta0), Z + Delta, atol=1e-10)


def test_lambda_properties(rng):
    n, p = 60, 30
    X = rng.standard_normal((n, p))
    S = empirical_covariance(X)
    M = compute_decorrelator(S, 0.2).M
    est = debias_estimate(np.zeros(p), M, X, rng.standard_normal(n))
    np.testing.assert_array_equal(est.Lambda, est.Lambda.T)
    np.testing.assert_allclose(est.Lambda, M @ S @ M.T, atol=1e-12)
    assert np.all(np.diag(est.Lambda0) == 1.0)
    np.testing.assert_array_equal(est.Lambda0, est.Lambda0.T)


def test_degenerate_variance(rng):
    X = rng.standard_normal((20, 5))
    M = np.eye(5)
    M[2] = 0.0
    with pytest.raises(DegenerateVarianceError, match="degenerate variance"):
        debias_estimate(np.zeros(5), M, X, rng.standard_normal(20))


def test_bias_bound_examples(rng):
    n, p = 30, 8
    X = rng.standard_normal((n, p))
    S = empirical_covariance(X)
    th0 = rng.standard_normal(p)
    assert bias_bound_diagnostic(np.eye(p), S, th0, th0, n) == 0.0
    assert bias_bound_diagnostic(np.linalg.inv(S), S, rng.standard_normal(p), th0, n) <= 1e-10


def test_lambda_approaches_omega_with_n():
    p = 300
    spec = CovarianceSpec("circulant", p, eta=0.1)
    Sigma, Omega = build_covariance(spec), precision_matrix(spec)
    L = np.linalg.cholesky(Sigma)
    errs = []
    for n in (500, 1000, 2000):
        X = np.random.default_rng(n).standard_normal((n, p)) @ L.T
        S = empirical_covariance(X)
        dec = compute_decorrelator(S, default_mu(n, p, 1.0))
        assert not dec.fallback_identity
        Lam = dec.M @ S @ dec.M.T
        errs.append(np.abs(Lam - Omega).max())
    assert errs[0] > errs[1] > errs[2]
