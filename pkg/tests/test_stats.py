import math

import numpy as np
import pytest
import scipy.special
import scipy.stats
from hypothesis import given, settings
from hypothesis import strategies as st

from sgnet import stats


def test_table_anchor_ci():
    s = stats.summarize_moments(0.5578, 0.2413, 19)
    assert s.ci_low == pytest.approx(0.44150, abs=5e-5)
    assert s.ci_high == pytest.approx(0.67410, abs=5e-5)
    assert abs(s.ci_low - 0.45) <= 0.01 and abs(s.ci_high - 0.67) <= 0.01
    assert (round(s.ci_low, 2), round(s.ci_high, 2)) == (0.44, 0.67)


def test_constant_values_collapse_ci():
    s = stats.summarize([0.25] * 7)
    assert (s.mean, s.sd, s.ci_low, s.ci_high) == (0.25, 0.0, 0.25, 0.25)


def test_two_values():
    s = stats.summarize([0.0, 1.0])
    assert s.mean == 0.5
    assert s.sd == pytest.approx(math.sqrt(0.5), abs=1e-15)
    assert (s.ci_high - s.mean) == pytest.approx(12.706 * 0.5, abs=1e-3)


def test_summarize_needs_two():
    with pytest.raises(ValueError):
        stats.summarize([1.0])


@pytest.mark.parametrize("t,df", [(2.1009, 18), (12.706, 1)])
def test_critical_values(t, df):
    assert stats.t_sf_two_sided(t, df) == pytest.approx(0.05, abs=5e-4)


def test_identical_columns():
    r = stats.paired_t_test([0.1, 0.5, 0.9], [0.1, 0.5, 0.9])
    assert (r.t, r.p) == (0.0, 1.0)


def test_constant_shift_convention():
    a = np.arange(19) / 64.0
    r = stats.paired_t_test(a + 0.25, a)  # dyadic values, so the shift is exact
    assert r.p == 0.0 and r.t == math.inf and r.df == 18


def test_paired_t_matches_scipy(rng):
    a, b = rng.random(19), rng.random(19)
    ours = stats.paired_t_test(a, b)
    ref = scipy.stats.ttest_rel(a, b)
    assert ours.t == pytest.approx(ref.statistic, rel=1e-12)
    assert ours.p == pytest.approx(ref.pvalue, rel=1e-9, abs=1e-14)


def test_paired_t_errors():
    with pytest.raises(ValueError):
        stats.paired_t_test([1, 2], [1, 2, 3])
    with pytest.raises(ValueError):
        stats.paired_t_test([1], [2])


@pytest.mark.parametrize("p,k,out", [(0.02, 3, 0.06), (0.5, 3, 1.0), (0.3, 1, 0.3)])
def test_bonferroni(p, k, out):
    assert stats.bonferroni(p, k) == pytest.approx(out, abs=1e-15)


def test_bonferroni_bad_k():
    with pytest.raises(ValueError):
        stats.bonferroni(0.1, 0)


@settings(max_examples=60, deadline=None)
@given(st.floats(0.05, 50), st.floats(0.05, 50), st.floats(0.0, 1.0))
def test_betainc_matches_scipy(a, b, x):
    assert stats.betainc(a, b, x) == pytest.approx(scipy.special.betainc(a, b, x), abs=1e-12)


@settings(max_examples=80, deadline=None)
@given(st.floats(-60, 60), st.integers(1, 200))
def test_cdf_symmetry_and_oracle(t, df):
    assert stats.t_cdf(t, df) + stats.t_cdf(-t, df) == pytest.approx(1.0, abs=1e-12)
    assert stats.t_cdf(t, df) == pytest.approx(scipy.stats.t.cdf(t, df), abs=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.floats(-20, 20), st.floats(0.0, 5.0), st.integers(1, 60))
def test_cdf_monotone(t, dt, df):
    assert stats.t_cdf(t + dt, df) >= stats.t_cdf(t, df)


@settings(max_examples=40, deadline=None)
@given(st.floats(0.001, 0.999), st.integers(1, 100))
def test_quantile_round_trip(q, df):
    assert stats.t_cdf(stats.t_quantile(q, df), df) == pytest.approx(q, abs=1e-9)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31 - 1), st.integers(2, 30))
def test_antisymmetry(seed, n):
    rng = np.random.default_rng(seed)
    a, b = rng.random(n), rng.random(n)
    ab, ba = stats.paired_t_test(a, b), stats.paired_t_test(b, a)
    assert ab.t == -ba.t
    assert ab.p == pytest.approx(ba.p, abs=1e-15)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(0, 1), min_size=2, max_size=40))
def test_ci_brackets_mean(values):
    s = stats.summarize(values)
    assert s.ci_low <= s.mean + 1e-15 and s.mean <= s.ci_high + 1e-15
