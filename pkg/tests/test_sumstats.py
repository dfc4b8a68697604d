import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from gibbslab.errors import EmptyCondition, InvalidParameter, TargetUnreachable
from gibbslab.pmf import Family, moments, pmf_builtin, pmf_from_weights, tilt
from gibbslab.sumstats import (
    Interval,
    chernoff_log_bound,
    condition_check,
    condition_on_interval,
    cumulant_function,
    cumulants,
    log_convolve,
    r_star,
    snap,
    solve_tilt_for_mean,
    sum_law,
    sum_law_of,
)

from conftest import random_log_concave_family


@pytest.fixture
def geo():
    return Family.iid(pmf_builtin("geometric", p=0.5, lambda_cap=1.7))


def test_interval_constructors():
    assert Interval.above(3.0) == Interval(4, None)
    assert Interval.above(3.5) == Interval(4, None)
    assert Interval.below(3.0) == Interval(0, 2)
    assert Interval.below(3.5) == Interval(0, 3)
    assert Interval.point(7) == Interval(7, 7)
    assert 5 in Interval.above(4.9) and 4 not in Interval.above(4.0)


def test_snap_absorbs_rounding():
    assert snap(74.99999999999994) == 75.0
    assert Interval.above(74.99999999999994) == Interval(76, None)
    assert snap(74.9) == 74.9


def test_interval_shift_and_clip():
    iv = Interval(3, 10).shift(5)
    assert iv == Interval(-2, 5)
    assert iv.clip(4) == (0, 4)
    assert Interval(8, None).clip(4) is None


def test_log_convolve_matches_numpy():
    a, b = np.array([0.2, 0.8]), np.array([0.5, 0.3, 0.2])
    np.testing.assert_allclose(np.exp(log_convolve(np.log(a), np.log(b))), np.convolve(a, b), rtol=1e-14)


def test_geometric_sum_is_negative_binomial(geo):
    s = sum_law(geo, 1.0, 30)
    k = np.arange(200)
    np.testing.assert_allclose(s.probs[:200], stats.nbinom(30, 0.5).pmf(k), rtol=1e-10)


def test_tilted_geometric_sum_is_negative_binomial(geo):
    s = sum_law(geo, 1.5, 20)
    k = np.arange(150)
    np.testing.assert_allclose(s.probs[:150], stats.nbinom(20, 0.25).pmf(k), rtol=1e-9)


def test_poisson_sum():
    fam = Family.iid(pmf_builtin("poisson", mu=0.7))
    s = sum_law(fam, 2.0, 12)
    k = np.arange(40)
    np.testing.assert_allclose(s.probs[:40], stats.poisson(12 * 1.4).pmf(k), rtol=1e-9)
    assert s.tail_mass_bound <= 12 * 1e-13


def test_bernoulli_sum_is_binomial():
    fam = Family.iid(pmf_builtin("bernoulli", q=0.3))
    s = sum_law(fam, 1.0, 9)
    np.testing.assert_allclose(s.probs, stats.binom(9, 0.3).pmf(np.arange(10)), rtol=1e-12)


def test_empty_sum_is_point_mass():
    s = sum_law_of([])
    assert s.k_max == 0 and s.log_prob(0) == 0.0


def test_sum_law_rejects_bad_n(geo):
    with pytest.raises(InvalidParameter):
        sum_law(geo, 1.0, 0)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(2, 9))
def test_tree_and_sequential_agree(seed, n):
    fam = random_log_concave_family(np.random.default_rng(seed), n)
    a = sum_law(fam, 1.3, n).probs
    b = sum_law(fam, 1.3, n, order="tree").probs
    np.testing.assert_allclose(a, b, atol=1e-10)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 6), st.floats(0.3, 3.0))
def test_sum_law_mean_matches_member_means(seed, n, lam):
    fam = random_log_concave_family(np.random.default_rng(seed), n)
    s = sum_law(fam, lam, n)
    expected = sum(moments(tilt(m, lam))[0] for m in fam.take(n))
    assert s.mean() == pytest.approx(expected, rel=1e-10, abs=1e-12)


def test_tails(geo):
    s = sum_law(geo, 1.0, 5)
    up, down = np.exp(s.log_upper_tails()), np.exp(s.log_lower_tails())
    assert up[0] == pytest.approx(1.0) and down[-1] == pytest.approx(1.0)
    np.testing.assert_allclose(up[1:] + down[:-1], 1.0, atol=1e-12)


def test_condition_on_interval():
    fam = Family.iid(pmf_builtin("bernoulli", q=0.5))
    s = condition_on_interval(sum_law(fam, 1.0, 2), Interval(1, 2))
    np.testing.assert_allclose(s.probs, [0, 2 / 3, 1 / 3], atol=1e-15)
    with pytest.raises(EmptyCondition):
        condition_on_interval(sum_law(fam, 1.0, 2), Interval(5, None))


def test_cumulant_derivatives_by_finite_difference(geo):
    rep = cumulants(geo, 1.3, 7)
    h = 1e-4
    t = math.log(1.3)
    m = lambda s: cumulant_function(geo, s, 7)
    assert rep.M == pytest.approx(m(t), rel=1e-14)
    assert rep.M1 == pytest.approx((m(t + h) - m(t - h)) / (2 * h), rel=1e-7)
    assert rep.M2 == pytest.approx((m(t + h) - 2 * m(t) + m(t - h)) / h**2, rel=1e-5)


def test_geometric_cumulant_closed_form(geo):
    # M_n(t) = n log((1-p)/(1-e^t p))
    t = math.log(1.4)
    assert cumulant_function(geo, t, 9) == pytest.approx(9 * math.log(0.5 / (1 - 0.7)), rel=1e-13)


def test_r_star_geometric(geo):
    assert r_star(geo, 1.5, 10) == pytest.approx(30.0, rel=1e-12)


def test_gaps_reported(geo):
    rep = cumulants(geo, 1.5, 10, eps_list=[0.1])
    eps, lower, upper = rep.gaps[0]
    t = math.log(1.5)
    m = lambda s: cumulant_function(geo, s, 10)
    assert lower == pytest.approx(m(t - eps) - m(t) + eps * rep.M1, rel=1e-12)
    assert upper == pytest.approx(m(t + eps) - m(t) - eps * rep.M1, rel=1e-12)
    assert lower > 0 and upper > 0


def test_gap_beyond_cap_rejected(geo):
    with pytest.raises(InvalidParameter):
        cumulants(geo, 1.6, 10, eps_list=[0.1])


def test_poisson_gaps_linear_in_n():
    fam = Family.iid(pmf_builtin("poisson", mu=1.0))
    trend = condition_check(fam, 2.0, 0.1, [10, 100, 1000])
    # closed form per member: lam* mu (e^{-eps} - 1 + eps) and lam* mu (e^{eps} - 1 - eps)
    lo = 2 * (math.exp(-0.1) - 1 + 0.1)
    hi = 2 * (math.exp(0.1) - 1 - 0.1)
    np.testing.assert_allclose(trend.lower, [lo * n for n in (10, 100, 1000)], rtol=1e-10)
    np.testing.assert_allclose(trend.upper, [hi * n for n in (10, 100, 1000)], rtol=1e-10)
    assert trend.lower_slope == pytest.approx(1.0, abs=1e-9)
    # the lower gap is 9.675 < 10 at n = 1000, so the default threshold is not met
    assert trend.verdict == "not-diverging"
    assert condition_check(fam, 2.0, 0.1, [10, 100, 1000, 10000]).verdict == "diverging"


def test_degenerate_tail_members_not_diverging():
    members = tuple([pmf_builtin("poisson", mu=1.0)] * 5 + [pmf_from_weights([1.0])] * 995)
    fam = Family(members, cyclic=False)
    trend = condition_check(fam, 2.0, 0.1, [10, 100, 1000])
    assert trend.lower[0] == pytest.approx(trend.lower[-1], rel=1e-12)
    assert trend.verdict == "not-diverging"


def test_bernoulli_diverging():
    fam = Family.iid(pmf_builtin("bernoulli", q=0.5))
    trend = condition_check(fam, 1.2, 0.1, [100, 1000, 10000, 100000])
    assert trend.verdict == "diverging"
    assert trend.to_dict()["note"].startswith("finite-n heuristic")


def test_chernoff_poisson_closed_form():
    fam = Family.iid(pmf_builtin("poisson", mu=1.0))
    # mu (lam* - lam) + lam* log(lam/lam*) per member
    per_n = 1.5 - 2.0 + 1.5 * math.log(2.0 / 1.5)
    assert per_n == pytest.approx(-0.06848, abs=5e-6)
    assert chernoff_log_bound(fam, 2.0, 1.5, 40) == pytest.approx(40 * per_n, rel=1e-12)


@pytest.mark.parametrize("lam", [1.2, 2.0])
def test_chernoff_bounds_exact_tail(lam):
    fam = Family.iid(pmf_builtin("poisson", mu=1.0))
    for n in (10, 50):
        s = sum_law(fam, lam, n)
        rs = r_star(fam, 1.6, n)
        iv = Interval.at_most(rs) if lam > 1.6 else Interval(math.ceil(snap(rs)), None)
        assert s.log_mass(iv) <= chernoff_log_bound(fam, lam, 1.6, n) + 1e-12


def test_solve_tilt_for_mean(geo):
    assert solve_tilt_for_mean(geo, 10, 30.0) == pytest.approx(1.5, rel=1e-10)
    with pytest.raises(TargetUnreachable):
        solve_tilt_for_mean(geo, 10, 1e6)
    with pytest.raises(TargetUnreachable):
        solve_tilt_for_mean(geo, 10, 0.0)


@settings(max_examples=30, deadline=None)
@given(st.floats(0.2, 1.65))
def test_solve_tilt_round_trip(lam):
    fam = Family.iid(pmf_builtin("geometric", p=0.5, lambda_cap=1.7))
    target = r_star(fam, lam, 5)
    assert solve_tilt_for_mean(fam, 5, target) == pytest.approx(lam, rel=1e-8)
