import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.special import erfc

from fcd.debias import DebiasedEstimate
from fcd.exceptions import DomainError
from fcd.gauss import std_normal_isf
from fcd.selection import (
    compute_pvalues,
    fallback_threshold,
    fcd_threshold,
    search_ceiling,
    test_statistics as make_stats,
)

GRID_POINTS = 1_000_000


def grid_oracle(T, q, p):
    """First point of a uniform 10^6 grid on [0, max(t_p, sqrt(2 log p))] that
    satisfies the ratio condition, searched only up to t_p; scipy's erfc supplies G."""
    tp = math.sqrt(2 * math.log(p) - 2 * math.log(math.log(p)))
    hi = max(tp, math.sqrt(2 * math.log(p)))
    grid = np.linspace(0.0, hi, GRID_POINTS)
    grid = grid[grid <= tp]
    absT = np.sort(np.abs(T))
    R = absT.size - np.searchsorted(absT, grid, side="left")
    ratio = p * erfc(grid / math.sqrt(2)) / np.maximum(R, 1)
    ok = np.flatnonzero(ratio <= q)
    step = hi / (GRID_POINTS - 1)
    if ok.size == 0:
        return math.sqrt(2 * math.log(p)), False, step
    return float(grid[ok[0]]), True, step


def test_statistics_examples():
    st_ = make_stats((np.zeros(3), np.ones(3)), 1.0, 10)
    assert np.all(st_.T == 0)
    a = make_stats((np.array([1.0, -2.0]), np.array([1.0, 2.0])), 1.0, 9).T
    b = make_stats((np.array([1.0, -2.0]), np.array([1.0, 2.0])), 2.0, 9).T
    np.testing.assert_allclose(b, a / 2)
    assert make_stats((np.array([1.0]), np.array([4.0])), 1.0, 4).T[0] == 1.0


def test_statistics_from_debiased_estimate():
    est = DebiasedEstimate(np.array([0.5, 1.0]), np.diag([0.25, 1.0]), np.eye(2))
    np.testing.assert_allclose(make_stats(est, 1.0, 16).T, [4.0, 4.0])


def test_statistics_domain():
    with pytest.raises(DomainError):
        make_stats((np.zeros(2), np.ones(2)), 0.0, 5)
    with pytest.raises(DomainError):
        make_stats((np.zeros(2), np.array([1.0, 0.0])), 1.0, 5)


def test_q_one_rejects_everything():
    T = np.array([0.0, 0.3, -2.0, 5.0, 0.01])
    r = fcd_threshold(T, 1.0)
    assert r.t0 == 0.0
    assert r.threshold_found
    assert r.selected.tolist() == [0, 1, 2, 3, 4]


def test_fallback_example():
    r = fcd_threshold(np.array([5.0, 4.0, 0.2, 0.1]), 0.2)
    assert not r.threshold_found
    assert search_ceiling(4) == pytest.approx(1.4557885156, abs=1e-10)  # mpmath
    assert r.t0 == pytest.approx(math.sqrt(2 * math.log(4)))
    assert r.t0 == pytest.approx(1.6651, abs=1e-4)
    assert r.selected.tolist() == [0, 1]
    assert r.signs.tolist() == [1, 1, 0, 0]


def test_domain_errors():
    with pytest.raises(DomainError):
        fcd_threshold(np.ones(5), 0.0)
    with pytest.raises(DomainError):
        fcd_threshold(np.ones(2), 0.1)
    with pytest.raises(DomainError):
        fcd_threshold(np.array([1.0, np.nan, 2.0]), 0.1)


def _instance(seed):
    r = np.random.default_rng(seed)
    p = int(r.integers(5, 201))
    k = int(r.integers(0, p // 2 + 1))
    T = r.standard_normal(p)
    T[:k] += r.choice([-1, 1], k) * r.uniform(1.0, 6.0, k)
    q = float(r.choice([0.05, 0.1, 0.2, 0.3]))
    return T, q, p


@pytest.mark.parametrize("chunk", range(4))
def test_grid_oracle_equivalence(chunk):
    for seed in range(chunk * 50, chunk * 50 + 50):
        T, q, p = _instance(seed)
        res = fcd_threshold(T, q)
        t_or, found, step = grid_oracle(T, q, p)
        assert res.threshold_found == found, seed
        assert abs(res.t0 - t_or) <= step, (seed, res.t0, t_or)


def test_boundary_value_is_rejected():
    # |T_i| sitting exactly on the closed-form root z_k is selected (Step 2 uses >=)
    p = 1000
    for k in (50, 77, 200):
        z = std_normal_isf(0.1 * k / (2 * p))
        T = np.zeros(p)
        T[:k] = z
        T[k] = -z
        r = fcd_threshold(T, 0.1)
        assert r.t0 <= z
        assert r.n_selected >= k


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**31))
def test_selection_invariants(seed):
    T, q, p = _instance(seed)
    r = fcd_threshold(T, q)
    absT = np.abs(T)
    assert r.selected.tolist() == np.flatnonzero(absT >= r.t0).tolist()
    # monotone rejection
    if r.selected.size:
        assert absT[r.selected].min() >= absT[np.setdiff1d(np.arange(p), r.selected)].max(initial=-1)
    # signs live exactly on the selection
    assert np.all(r.signs[r.selected] == np.sign(T[r.selected]))
    assert np.all(r.signs[np.setdiff1d(np.arange(p), r.selected)] == 0)
    if r.threshold_found:
        assert r.t0 <= search_ceiling(p)
        ratio = p * erfc(r.t0 / math.sqrt(2)) / max(r.n_selected, 1)
        assert ratio <= q + 1e-12
    else:
        assert r.t0 == fallback_threshold(p)


def test_appending_small_coordinate_keeps_threshold():
    r = np.random.default_rng(3)
    T = np.concatenate([0.5 * r.standard_normal(300), 6.0 * np.ones(30), [0.0]])
    p = T.size
    base = fcd_threshold(T, 0.1)
    assert base.threshold_found
    # every candidate below t0 sits where R is already far larger than 30, so
    # raising the last |T| from 0 to 1 < t0 cannot make one of them feasible
    T2 = T.copy()
    T2[-1] = 1.0
    grown = fcd_threshold(T2, 0.1)
    assert grown.t0 == base.t0
    t_or, _, step = grid_oracle(T2, 0.1, p)
    assert abs(grown.t0 - t_or) <= step
    assert grown.selected.tolist() == base.selected.tolist()


def test_pvalues():
    pv = compute_pvalues(np.array([0.0, 1.96, -1.96, 3.0]))
    assert pv[0] == 1.0
    assert pv[1] == pytest.approx(0.05, abs=1e-4)
    assert pv[1] == pv[2]
    assert pv[3] == pytest.approx(erfc(3 / math.sqrt(2)), rel=1e-14)
