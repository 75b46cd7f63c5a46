import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from apricot.dists import Market, TriangularAgent
from apricot.orderstats import (
    approx_order_stat_cdf,
    approx_order_stat_cdf_from_rate,
    count_pmf_head,
    exact_order_stat_cdf,
    order_profile,
    order_stat_cdfs,
    verify_sandwich,
)

from conftest import enumerate_counts

probs_st = st.lists(st.floats(0.0, 1.0), min_size=0, max_size=10)


def test_exact_examples():
    assert exact_order_stat_cdf([0.5, 0.5], 1) == 0.25
    assert exact_order_stat_cdf([0.5, 0.5], 2) == 0.75
    assert exact_order_stat_cdf([], 3) == 1.0
    assert exact_order_stat_cdf([1.0, 1.0], 2) == 0.0


@settings(max_examples=200)
@given(probs_st, st.integers(1, 12))
def test_exact_matches_enumeration(probs, j):
    pmf = enumerate_counts(probs)
    assert exact_order_stat_cdf(probs, j) == pytest.approx(pmf[:j].sum(), abs=1e-12)


def test_bad_inputs():
    with pytest.raises(ValueError):
        exact_order_stat_cdf([0.5, 1.5], 1)
    with pytest.raises(ValueError):
        exact_order_stat_cdf([0.5], 0)
    with pytest.raises(ValueError):
        approx_order_stat_cdf(1.5, 1)


def test_approx_examples():
    assert approx_order_stat_cdf(math.exp(-1), 1) == pytest.approx(math.exp(-1), rel=1e-15)
    assert approx_order_stat_cdf(math.exp(-2), 2) == pytest.approx(3 * math.exp(-2), rel=1e-14)
    assert approx_order_stat_cdf(0.0, 5) == 0.0
    assert approx_order_stat_cdf(1.0, 3) == 1.0


@given(st.floats(1e-300, 1.0), st.integers(1, 40))
def test_approx_is_poisson_cdf(d1, j):
    lam = -math.log(d1)
    expected = stats.poisson.cdf(j - 1, lam)
    assert approx_order_stat_cdf(d1, j) == pytest.approx(expected, rel=1e-9, abs=1e-300)
    assert approx_order_stat_cdf_from_rate(lam, j) == pytest.approx(expected, rel=1e-9,
                                                                    abs=1e-300)


def test_rate_form_survives_underflow():
    # D1 = exp(-800) underflows but D_j with j large is still representable
    val = approx_order_stat_cdf_from_rate(800.0, 900)
    assert val == pytest.approx(stats.poisson.cdf(899, 800.0), rel=1e-9)


@given(st.floats(0.0, 1.0), st.floats(0.0, 1.0), st.integers(1, 10))
def test_approx_monotone_in_first_order(a, b, j):
    lo, hi = sorted((a, b))
    assert approx_order_stat_cdf(lo, j) <= approx_order_stat_cdf(hi, j) + 1e-15


def test_sandwich_examples():
    assert verify_sandwich([1e-4] * 1000, 3, 1e-3)
    assert verify_sandwich([0.01, 0.02, 0.005], 1, 0.02)
    assert verify_sandwich([0.0] * 5, 4, 0.05)


def test_sandwich_preconditions_raise():
    with pytest.raises(ValueError):
        verify_sandwich([0.01], 2, 0.2)  # delta > 1/(4j)
    with pytest.raises(ValueError):
        verify_sandwich([0.1], 1, 0.05)  # accept prob above delta


def test_first_order_equality():
    probs = np.random.default_rng(1).uniform(0, 0.2, 30)
    exact = exact_order_stat_cdf(probs, 1)
    assert exact == pytest.approx(np.prod(1 - probs), rel=1e-12)
    assert approx_order_stat_cdf(exact, 1) == exact


@pytest.mark.parametrize("j", [1, 2, 3, 4, 5])
def test_poisson_limit(j):
    n, c = 100_000, 2.0
    exact = order_stat_cdfs([c / n], [n], j)[-1]
    approx = approx_order_stat_cdf_from_rate(-n * math.log1p(-c / n), j)
    assert abs(exact - approx) < 1e-3


def test_count_head_matches_binomial_for_huge_counts():
    n, a = 10**12, 3e-12
    head = count_pmf_head([a], [n], 6)
    np.testing.assert_allclose(head, stats.binom.pmf(np.arange(6), n, a), rtol=1e-9)


def test_count_head_deterministic_shift():
    head = count_pmf_head([1.0, 0.5], [2, 2], 5)
    np.testing.assert_allclose(head, [0, 0, 0.25, 0.5, 0.25], atol=1e-15)
    assert count_pmf_head([1.0], [3], 3).sum() == 0.0


@settings(max_examples=100)
@given(st.lists(st.tuples(st.floats(0.0, 1.0), st.integers(1, 4)), min_size=1, max_size=5),
       st.integers(1, 8))
def test_multiplicity_matches_expansion(pairs, k):
    probs = [p for p, _ in pairs]
    counts = [c for _, c in pairs]
    flat = [p for p, c in pairs for _ in range(c)]
    got = order_stat_cdfs(probs, counts, k)
    want = [exact_order_stat_cdf(flat, j) for j in range(1, k + 1)]
    np.testing.assert_allclose(got, want, atol=1e-12)


@settings(max_examples=100)
@given(st.lists(st.floats(0.0, 1.0), min_size=1, max_size=8), st.integers(0, 7),
       st.floats(0.0, 1.0))
def test_monotone_in_single_probability(probs, idx, bump):
    idx %= len(probs)
    raised = list(probs)
    raised[idx] = max(raised[idx], bump)
    for j in range(1, 5):
        assert exact_order_stat_cdf(raised, j) <= exact_order_stat_cdf(probs, j) + 1e-12


def test_profile_examples():
    m = Market(2, (TriangularAgent(1.0, 0.5), TriangularAgent(1.0, 0.5)))
    prof = order_profile(m, 2.0)
    assert prof.exact == pytest.approx((0.25, 0.75), abs=1e-15)
    assert prof.approx[0] == prof.first_order
    assert prof.first_order == pytest.approx(0.25, rel=1e-12)
    empty = order_profile(Market(3, (TriangularAgent(1.0, 0.5),)), 5.0)
    assert empty.exact == (1.0, 1.0, 1.0)
    assert empty.approx == (1.0, 1.0, 1.0)
    single = order_profile(Market(1, (TriangularAgent(1.0, 0.5),)), 1.0)
    assert len(single.exact) == 1


def test_profile_monotone_in_j_and_price():
    m = Market(4, tuple(TriangularAgent(0.2 + 0.1 * i, 0.1 + 0.05 * i, 3) for i in range(6)))
    prev = None
    for p in np.linspace(0.3, 4.0, 15):
        prof = order_profile(m, float(p))
        assert all(a <= b + 1e-15 for a, b in zip(prof.exact, prof.exact[1:]))
        assert all(a <= b + 1e-15 for a, b in zip(prof.approx, prof.approx[1:]))
        if prev is not None:
            assert all(a <= b + 1e-12 for a, b in zip(prev.exact, prof.exact))
        prev = prof
