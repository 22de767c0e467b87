import math

import numpy as np
import pytest

from fcd.exceptions import DomainError, NumericalError
from fcd.simulate import (
    CovarianceSpec,
    SimConfig,
    bh_baseline,
    build_covariance,
    equicorrelated_precision_coefficients,
    generate_instance,
    precision_matrix,
    run_replicate,
    run_sweep,
    write_sweep_csv,
)

SMALL = SimConfig(n=80, p=60, s0=5, amplitude=8.0, reps=3, seed=7)


def test_covariance_examples():
    np.testing.assert_array_equal(build_covariance(CovarianceSpec("identity", 4)), np.eye(4))
    np.testing.assert_allclose(build_covariance(CovarianceSpec("circulant", 3, eta=0.5)),
                               [[1, 0.5, 0.25], [0.5, 1, 0.5], [0.25, 0.5, 1]])
    S = build_covariance(CovarianceSpec("equicorrelated", 3, r=0.5))
    assert np.all(S[~np.eye(3, dtype=bool)] == 0.5) and np.all(np.diag(S) == 1)
    B = build_covariance(CovarianceSpec("block_diagonal", 5, block_size=2, within_corr=0.3))
    assert B[0, 1] == 0.3 and B[1, 2] == 0.0 and B[4, 4] == 1.0 and B[3, 4] == 0.0


@pytest.mark.parametrize("spec", [
    CovarianceSpec("circulant", 3, eta=1.0),
    CovarianceSpec("equicorrelated", 3, r=0.0),
    CovarianceSpec("block_diagonal", 3, block_size=0),
    CovarianceSpec("toeplitz", 3),
])
def test_covariance_validation(spec):
    with pytest.raises(DomainError):
        build_covariance(spec)


@pytest.mark.parametrize("p,r", [(3, 0.5), (10, 0.2), (50, 0.8)])
def test_equicorrelated_closed_form(p, r):
    spec = CovarianceSpec("equicorrelated", p, r=r)
    Omega = precision_matrix(spec)
    Sigma = build_covariance(spec)
    np.testing.assert_allclose(Omega, np.linalg.inv(Sigma), atol=1e-10, rtol=0)
    np.testing.assert_allclose(Omega @ Sigma, np.eye(p), atol=1e-10, rtol=0)


def test_equicorrelated_coefficients_example():
    a, b = equicorrelated_precision_coefficients(3, 0.5)
    assert a == pytest.approx(1.5) and b == pytest.approx(-0.5)


@pytest.mark.parametrize("spec", [
    CovarianceSpec("identity", 20),
    CovarianceSpec("circulant", 500, eta=0.1),
    CovarianceSpec("circulant", 200, eta=0.8),
    CovarianceSpec("block_diagonal", 97, block_size=10, within_corr=0.6),
    CovarianceSpec("equicorrelated", 300, r=0.3),
])
def test_precision_certificate(spec):
    Omega, Sigma = precision_matrix(spec), build_covariance(spec)
    assert np.abs(Omega @ Sigma - np.eye(spec.p)).max() <= 1e-8


def test_near_singular_rejected():
    with pytest.raises(NumericalError):
        precision_matrix(CovarianceSpec("block_diagonal", 20, block_size=20, within_corr=1 - 1e-14))


def test_instance_properties():
    inst = generate_instance(SMALL, 0)
    np.testing.assert_allclose(np.linalg.norm(inst.X, axis=0), 1.0, atol=1e-12)
    assert inst.truth.s0 == 5
    assert set(np.abs(inst.truth.theta0[inst.truth.support])) == {8.0}
    np.testing.assert_allclose(inst.y, inst.X @ inst.truth.theta0 + inst.w, atol=1e-14)


def test_instance_determinism():
    a, b = generate_instance(SMALL, 2), generate_instance(SMALL, 2)
    assert np.array_equal(a.X, b.X) and np.array_equal(a.y, b.y)
    assert np.array_equal(a.truth.theta0, b.truth.theta0)
    c = generate_instance(SMALL, 3)
    assert not np.array_equal(a.X, c.X)


def test_design_shared_across_amplitudes():
    from dataclasses import replace
    a = generate_instance(SMALL, 1)
    b = generate_instance(replace(SMALL, amplitude=2.0), 1)
    assert np.array_equal(a.X, b.X)
    assert np.array_equal(a.truth.support, b.truth.support)


def test_zero_amplitude_has_empty_support():
    from dataclasses import replace
    inst = generate_instance(replace(SMALL, amplitude=0.0), 0)
    assert inst.truth.s0 == 0


def test_student_t_noise():
    from dataclasses import replace
    cfg = replace(SMALL, noise="student_t", df=5.0)
    assert cfg.noise_sd == pytest.approx(math.sqrt(5 / 3))
    assert cfg.row_cap_beta == pytest.approx(0.5 - 1 / 3 - 0.01)
    res = run_replicate(cfg, 0)
    assert res.ok or "Error" in res.error


def test_config_validation():
    from dataclasses import replace
    for bad in (dict(s0=100), dict(q=0.0), dict(reps=0), dict(noise="cauchy"), dict(p=2),
                dict(amplitude=-1.0), dict(seed=-1), dict(eta=1.5)):
        with pytest.raises(DomainError):
            replace(SMALL, **bad).validate()


def test_null_model_replicate():
    from dataclasses import replace
    res = run_replicate(replace(SMALL, s0=0), 0)
    assert res.ok
    assert res.metrics.power == 0.0
    if res.metrics.n_selected == 0:
        assert res.metrics.fdp_dir == 0.0
    assert math.isnan(res.power_bound)


def test_replicate_determinism_and_diagnostics():
    a, b = run_replicate(SMALL, 1), run_replicate(SMALL, 1)
    assert a.metrics == b.metrics
    assert a.selection.selected.tolist() == b.selection.selected.tolist()
    for key in ("sigma_ratio", "bias_bound", "t0", "threshold_found", "fallback_identity"):
        assert key in a.diagnostics
    assert math.isfinite(a.diagnostics["bias_bound"])


def test_strong_signal_full_power():
    cfg = SimConfig(n=200, p=100, s0=5, amplitude=20.0, reps=5, seed=3)
    res = run_sweep(cfg, "amplitude", [20.0])
    assert res.rows[0].power_mean >= 0.95


def test_single_value_sweep():
    from dataclasses import replace
    cfg = replace(SMALL, reps=1)
    res = run_sweep(cfg, "amplitude", [8.0], keep_replicates=True)
    assert len(res.rows) == 1
    row, rep = res.rows[0], res.replicates[0][0]
    assert row.fdr_dir_mean == rep.metrics.fdp_dir
    assert row.power_mean == rep.metrics.power
    assert row.reps == 1 and row.fdr_dir_se == 0.0


def test_sweep_rejects_invalid_values_before_running(monkeypatch):
    import fcd.simulate as sim
    called = []
    monkeypatch.setattr(sim, "_run_rep", lambda args: called.append(args))
    with pytest.raises(DomainError):
        run_sweep(SMALL, "sparsity", [3, 1000])
    with pytest.raises(DomainError):
        run_sweep(SMALL, "correlation", [0.2, 1.2])
    with pytest.raises(DomainError):
        run_sweep(SMALL, "noise", [1])
    with pytest.raises(DomainError):
        run_sweep(SMALL, "amplitude", [])
    assert not called


def test_sweep_rows_and_determinism(tmp_path):
    res = run_sweep(SMALL, "correlation", [0.1, 0.5])
    for row in res.rows:
        assert row.fdr_dir_mean >= row.fdr_classical_mean
        assert 0 <= row.power_mean <= 1 and row.power_se >= 0
    write_sweep_csv(res, tmp_path / "a.csv")
    write_sweep_csv(run_sweep(SMALL, "correlation", [0.1, 0.5]), tmp_path / "b.csv")
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    header = (tmp_path / "a.csv").read_text().splitlines()[0]
    assert header == "swept_value,fdr_dir_mean,fdr_dir_se,power_mean,power_se,power_bound_mean,reps"


def test_parallel_matches_serial(tmp_path):
    a = run_sweep(SMALL, "sparsity", [2, 5], n_jobs=2)
    b = run_sweep(SMALL, "sparsity", [2, 5], n_jobs=1)
    write_sweep_csv(a, tmp_path / "a.csv")
    write_sweep_csv(b, tmp_path / "b.csv")
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()


def test_bh_examples():
    assert bh_baseline(np.ones(5), 0.1).tolist() == []
    assert bh_baseline(np.zeros(4), 0.1).tolist() == [0, 1, 2, 3]
    assert bh_baseline(np.array([0.01, 0.02, 0.9, 0.95]), 0.1).tolist() == [0, 1]
    assert bh_baseline(np.array([]), 0.1).tolist() == []


def test_bh_matches_brute_force():
    r = np.random.default_rng(5)
    for _ in range(200):
        m = int(r.integers(1, 30))
        pv = np.where(r.random(m) < 0.3, r.random(m) * 0.01, r.random(m))
        q = 0.1
        best = 0
        for k in range(1, m + 1):
            if np.sum(pv <= q * k / m) >= k:
                best = k
        expected = sorted(np.argsort(pv, kind="stable")[:best].tolist())
        assert bh_baseline(pv, q).tolist() == expected
