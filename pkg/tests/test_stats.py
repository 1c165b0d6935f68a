"""Concentration bounds and entropy: frozen values, duality, coverage.

Frozen reference numbers were computed independently with mpmath at 50
significant digits from the closed-form expressions.
"""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from aqcka import stats


def test_binary_entropy_endpoints():
    assert stats.binary_entropy(0.0) == 0.0
    assert stats.binary_entropy(1.0) == 0.0
    assert stats.binary_entropy(0.5) == 1.0


def test_binary_entropy_value():
    assert stats.binary_entropy(0.11) == pytest.approx(0.499915958164528, rel=1e-12)


def test_binary_entropy_symmetric():
    for x in (0.01, 0.2, 0.37, 0.49):
        assert stats.binary_entropy(x) == pytest.approx(stats.binary_entropy(1 - x), rel=1e-12)


def test_binary_entropy_domain():
    with pytest.raises(stats.DomainError):
        stats.binary_entropy(-0.01)
    with pytest.raises(stats.DomainError):
        stats.binary_entropy(1.01)


def test_chernoff_observed_frozen_values():
    pair = stats.chernoff_observed(1e6, 1e-7)
    assert pair.lower == pytest.approx(994322.30757244489, rel=1e-12)
    assert pair.upper == pytest.approx(1005685.7571949771, rel=1e-12)


def test_chernoff_expected_frozen_values():
    pair = stats.chernoff_expected(1e6, 1e-7)
    assert pair.lower == pytest.approx(994314.24280502294, rel=1e-12)
    assert pair.upper == pytest.approx(1005693.8334015574, rel=1e-12)


def test_chernoff_observed_zero_expectation():
    pair = stats.chernoff_observed(0.0, 1e-7)
    assert pair.lower == 0.0
    assert pair.upper == pytest.approx(math.log(1e7), rel=1e-12)


def test_chernoff_expected_zero_count():
    pair = stats.chernoff_expected(0.0, 1e-7)
    assert pair.lower == 0.0
    assert pair.upper == pytest.approx(2.0 * math.log(1e7), rel=1e-12)


def test_chernoff_domain():
    with pytest.raises(stats.DomainError):
        stats.chernoff_observed(-1.0, 1e-7)
    with pytest.raises(stats.DomainError):
        stats.chernoff_observed(1e6, 0.0)
    with pytest.raises(stats.DomainError):
        stats.chernoff_expected(1e6, 1.5)


@given(
    x=st.floats(min_value=0.0, max_value=1e12, allow_nan=False),
    eps=st.floats(min_value=1e-12, max_value=0.4),
)
@settings(max_examples=200, deadline=None)
def test_chernoff_intervals_bracket_the_input(x, eps):
    for fn in (stats.chernoff_observed, stats.chernoff_expected):
        pair = fn(x, eps)
        assert 0.0 <= pair.lower <= x <= pair.upper


@given(
    x=st.floats(min_value=1.0, max_value=1e10),
    eps=st.floats(min_value=1e-10, max_value=0.1),
)
@settings(max_examples=200, deadline=None)
def test_smaller_epsilon_widens_the_interval(x, eps):
    tight = stats.chernoff_observed(x, eps)
    loose = stats.chernoff_observed(x, eps / 10.0)
    assert loose.lower <= tight.lower
    assert loose.upper >= tight.upper


def test_chernoff_duality_chain_never_inverts():
    # expected -> plausible observations -> re-derived expectation range:
    # the original expectation must stay inside the outer interval.
    eps = 1e-7
    for x in (1e2, 1e4, 1e6, 1e9):
        obs = stats.chernoff_observed(x, eps)
        for o in (obs.lower, obs.upper):
            back = stats.chernoff_expected(o, eps)
            assert back.lower <= x <= back.upper


def test_sampling_gamma_frozen_value():
    got = stats.sampling_gamma_upper(1e6, 1e6, 0.05, 1e-7)
    assert got == pytest.approx(0.0013986583905514876, rel=1e-10)


def test_sampling_gamma_positive_and_monotone_in_sizes():
    grid = [1e4, 1e5, 1e6, 1e7, 1e8]
    by_n = [stats.sampling_gamma_upper(n, 1e6, 0.05, 1e-7) for n in grid]
    by_k = [stats.sampling_gamma_upper(1e6, k, 0.05, 1e-7) for k in grid]
    assert all(g > 0 for g in by_n + by_k)
    assert all(a > b for a, b in zip(by_n, by_n[1:]))
    assert all(a > b for a, b in zip(by_k, by_k[1:]))


def test_sampling_gamma_domain():
    with pytest.raises(stats.DomainError):
        stats.sampling_gamma_upper(0.0, 1e6, 0.05, 1e-7)
    with pytest.raises(stats.DomainError):
        stats.sampling_gamma_upper(1e6, 1e6, 0.0, 1e-7)
    with pytest.raises(stats.DomainError):
        stats.sampling_gamma_upper(1e6, 1e6, 1.0, 1e-7)


def test_coverage_of_observed_bounds_on_poisson_draws():
    """Empirical violation frequency stays within twice the nominal eps."""
    eps = 1e-2
    x = 200.0
    rng = np.random.default_rng(42)
    draws = rng.poisson(x, size=100_000)
    pair = stats.chernoff_observed(x, eps)
    above = float(np.mean(draws > pair.upper))
    below = float(np.mean(draws < pair.lower))
    assert above <= 2 * eps
    assert below <= 2 * eps


def test_coverage_of_expected_bounds_on_poisson_draws():
    eps = 1e-2
    x = 200.0
    rng = np.random.default_rng(43)
    draws = rng.poisson(x, size=100_000)
    misses = 0
    for o in draws:
        pair = stats.chernoff_expected(float(o), eps)
        if not pair.lower <= x <= pair.upper:
            misses += 1
    assert misses / draws.size <= 4 * eps


def test_epsilon_ledger_bookkeeping():
    ledger = stats.EpsilonLedger()
    ledger.spend("counts", 1e-7, count=4)
    ledger.spend("errors", 1e-7)
    assert ledger.count("counts") == 4
    assert ledger.count("errors") == 1
    assert ledger.total() == pytest.approx(5e-7)
    assert ledger.total("counts") == pytest.approx(4e-7)
    assert ledger.labels() == {"counts": 4, "errors": 1}
    with pytest.raises(stats.DomainError):
        ledger.spend("bad", 1e-7, count=-1)
