import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gibbslab.canonical import (
    JointTable,
    canonical_joint,
    canonical_marginal,
    efron_check,
    mixture_conditional,
    proposition1_check,
    stochastic_dominance,
)
from gibbslab.errors import EmptyCondition, InstanceTooLarge, InvalidInput, InvalidParameter
from gibbslab.pmf import Family, pmf_builtin, pmf_from_weights, tilt
from gibbslab.sumstats import Interval

from conftest import load_fixture, random_log_concave_family


def table(probs) -> JointTable:
    with np.errstate(divide="ignore"):
        return JointTable(np.log(np.asarray(probs, dtype=float)))


def bern_pair():
    return Family.iid(pmf_builtin("bernoulli", q=0.5))


def brute_force_dominates(p: np.ndarray, q: np.ndarray, tol: float = 1e-9) -> bool:
    """Strassen: q dominates p iff p(U) <= q(U) for every up-set U."""
    cells = [tuple(c) for c in np.ndindex(p.shape)]
    for bits in itertools.product([False, True], repeat=len(cells)):
        chosen = {c for c, b in zip(cells, bits) if b}
        closed = all(
            tuple(min(v + (j == a), p.shape[a] - 1) if j == a else v for a, v in enumerate(c)) in chosen
            for c in chosen
            for j in range(p.ndim)
            if c[j] + 1 < p.shape[j]
        )
        if not closed:
            continue
        idx = tuple(np.array(list(chosen)).T) if chosen else None
        pu = p[idx].sum() if chosen else 0.0
        qu = q[idx].sum() if chosen else 0.0
        if pu > qu + tol:
            return False
    return True


def test_canonical_n1_is_point_mass():
    fam = Family.iid(pmf_builtin("binomial", m=4, q=0.3))
    np.testing.assert_allclose(canonical_marginal(fam, 0, 1, 3).probs, [0, 0, 0, 1, 0], atol=1e-15)


def test_geometric_pair_uniform(small_geometric):
    fam = Family.iid(small_geometric)
    for k in range(6):
        p = canonical_marginal(fam, 0, 2, k).probs
        np.testing.assert_allclose(p[: k + 1], 1 / (k + 1), rtol=1e-12)
        assert p[k + 1:].sum() < 1e-15


def test_bernoulli_examples():
    fam = bern_pair()
    assert canonical_marginal(fam, 0, 2, 1).prob(1) == pytest.approx(0.5)
    np.testing.assert_allclose(canonical_joint(fam, 2, 0).probs, [[1, 0], [0, 0]])
    np.testing.assert_allclose(canonical_joint(fam, 2, 1).probs, [[0, 0.5], [0.5, 0]])


def test_geometric_triple_uniform_compositions(small_geometric):
    p = canonical_joint(Family.iid(small_geometric), 3, 2).probs
    support = np.argwhere(p > 0)
    assert len(support) == 6
    np.testing.assert_allclose(p[p > 0], 1 / 6, rtol=1e-12)


def test_canonical_errors(small_geometric):
    with pytest.raises(EmptyCondition):
        canonical_joint(bern_pair(), 2, 5)
    with pytest.raises(InvalidParameter):
        canonical_marginal(bern_pair(), 2, 2, 1)
    big = Family.iid(pmf_builtin("geometric", p=0.5))
    with pytest.raises(InstanceTooLarge):
        canonical_joint(big, 3, 2)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(2, 3))
def test_marginal_consistency(seed, n):
    fam = random_log_concave_family(np.random.default_rng(seed), n, max_support=5)
    k = int(np.random.default_rng(seed + 1).integers(0, fam.support_total(n) + 1))
    joint = canonical_joint(fam, n, k)
    for i in range(n):
        np.testing.assert_allclose(canonical_marginal(fam, i, n, k).probs, joint.marginal(i), atol=1e-11)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from([0.3, 0.7, 1.5, 2.5]))
def test_tilt_invariance(seed, lam):
    fam = random_log_concave_family(np.random.default_rng(seed), 3, max_support=5)
    tilted = Family(tuple(tilt(m, lam) for m in fam.members), cyclic=False)
    for k in range(fam.support_total(3) + 1):
        np.testing.assert_allclose(canonical_joint(tilted, 3, k).probs, canonical_joint(fam, 3, k).probs, atol=1e-12)


def test_detailed_balance_db3(mixed_family):
    fam = mixed_family
    n = 3
    g = [np.r_[0.0, m.probs[:-1] / m.probs[1:]] for m in fam.take(n)]
    for k in range(fam.support_total(n) + 1):
        mu = canonical_joint(fam, n, k).probs
        for x in np.ndindex(mu.shape):
            if mu[x] == 0:
                continue
            for i, j in itertools.permutations(range(n), 2):
                if x[i] == 0 or x[j] + 1 >= mu.shape[j]:
                    continue
                y = list(x)
                y[i] -= 1
                y[j] += 1
                lhs = mu[x] * g[i][x[i]]
                rhs = mu[tuple(y)] * g[j][x[j] + 1]
                assert lhs == pytest.approx(rhs, rel=1e-12)


def test_mixture_examples():
    fam = bern_pair()
    np.testing.assert_allclose(mixture_conditional(fam, 2.0, 2, Interval(1, 2)).probs, [[0, 0.25], [0.25, 0.5]], atol=1e-15)
    np.testing.assert_allclose(mixture_conditional(fam, 1.0, 2, Interval.full()).probs, [[0.25, 0.25], [0.25, 0.25]], atol=1e-15)


def test_mixture_singleton_is_canonical(mixed_family):
    for k in range(7):
        a = mixture_conditional(mixed_family, 1.7, 3, Interval.point(k)).probs
        np.testing.assert_allclose(a, canonical_joint(mixed_family, 3, k).probs, atol=1e-12)


def test_dominance_examples():
    delta = table([[1, 0], [0, 0]])
    anti = table([[0, 0.5], [0.5, 0]])
    res = stochastic_dominance(delta, anti)
    assert res.holds and res.violation_certificate is None
    back = stochastic_dominance(anti, delta)
    assert not back.holds and back.witness_coupling is None
    cert = back.violation_certificate
    assert set(cert.generators) == {(0, 1), (1, 0)}
    assert cert.mass == pytest.approx(1.0) and cert.mass_prime == 0.0


def test_dominance_reflexive_with_identity_coupling():
    t = table([[0.1, 0.2], [0.3, 0.4]])
    res = stochastic_dominance(t, t)
    assert res.holds
    marg = {}
    for (x, y), m in res.witness_coupling.items():
        assert all(a <= b for a, b in zip(x, y))
        marg[x] = marg.get(x, 0) + m
    for x, m in marg.items():
        assert m == pytest.approx(t.probs[x], abs=1e-9)


def test_dominance_shape_mismatch():
    with pytest.raises(InvalidInput):
        stochastic_dominance(table([0.5, 0.5]), table([[1.0]]))


def random_table(rng, shape):
    p = rng.random(shape) * (rng.random(shape) < 0.7)
    if p.sum() == 0:
        p.flat[0] = 1.0
    return p / p.sum()


@settings(max_examples=150, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from([(2, 2), (2, 3), (3, 4), (2, 2, 3), (12,)]), st.booleans())
def test_max_flow_agrees_with_brute_force(seed, shape, shifted):
    rng = np.random.default_rng(seed)
    p = random_table(rng, shape)
    if shifted:
        # push mass upward so dominance holds more often
        q = np.zeros(shape)
        for x in np.ndindex(shape):
            y = tuple(min(v + int(rng.integers(0, 2)), s - 1) for v, s in zip(x, shape))
            q[y] += p[x]
    else:
        q = random_table(rng, shape)
    res = stochastic_dominance(table(p), table(q))
    assert res.holds == brute_force_dominates(p, q)
    if res.holds:
        first, second = np.zeros(shape), np.zeros(shape)
        for (x, y), m in res.witness_coupling.items():
            assert all(a <= b for a, b in zip(x, y))
            first[x] += m
            second[y] += m
        np.testing.assert_allclose(first, p, atol=1e-9)
        np.testing.assert_allclose(second, q, atol=1e-9)
    else:
        cert = res.violation_certificate
        members = set(cert.members)
        for c in members:
            for j in range(len(shape)):
                up = c[:j] + (c[j] + 1,) + c[j + 1:]
                if up[j] < shape[j]:
                    assert up in members
        assert cert.mass > cert.mass_prime


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_antisymmetry(seed):
    rng = np.random.default_rng(seed)
    p, q = random_table(rng, (2, 3)), random_table(rng, (2, 3))
    both = stochastic_dominance(table(p), table(q)).holds and stochastic_dominance(table(q), table(p)).holds
    if both:
        np.testing.assert_allclose(p, q, atol=1e-8)


def test_efron_examples(small_geometric):
    assert efron_check(bern_pair(), 2, 2).all_hold
    rep = efron_check(Family.iid(small_geometric), 3, 6)
    assert rep.all_hold and rep.method == "max-flow" and rep.precondition_ok


def test_efron_transitive_spot_check(mixed_family):
    for k in range(5):
        a, b = canonical_joint(mixed_family, 3, k), canonical_joint(mixed_family, 3, k + 2)
        assert stochastic_dominance(a, b).holds


def test_efron_counterexample_fixture():
    fx = load_fixture("counterexample.json")
    fam = Family(tuple(pmf_from_weights(w) for w in fx["weights"]), cyclic=False)
    rep = efron_check(fam, fx["n"], fx["failing_k"] + 1)
    assert not rep.precondition_ok
    assert not rep.holds[fx["failing_k"]]
    cert = rep.certificates[fx["failing_k"]]
    assert cert.mass > cert.mass_prime


def test_efron_degrades_beyond_cap(small_geometric):
    rep = efron_check(Family.iid(small_geometric), 3, 3, cap=10)
    assert rep.method == "marginal-cdf" and rep.all_hold


def test_proposition1_examples():
    fam = bern_pair()
    assert proposition1_check(fam, 1.0, 2.0, 2, 0.5, "both-above").holds
    assert proposition1_check(fam, 1.5, 1.5, 2, 0.5, "both-above").holds
    for lam, lam2 in [(0.5, 1.0), (1.0, 3.0), (0.7, 0.9)]:
        assert proposition1_check(fam, lam, lam2, 2, 1.0, "below-above").holds
    with pytest.raises(InvalidParameter):
        proposition1_check(fam, 2.0, 1.0, 2, 0.5, "both-above")
    with pytest.raises(InvalidParameter):
        proposition1_check(fam, 1.0, 2.0, 2, 0.5, "sideways")


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from(["both-above", "both-below", "below-above"]))
def test_proposition1_random_log_concave(seed, mode):
    rng = np.random.default_rng(seed)
    fam = random_log_concave_family(rng, 3, max_support=4)
    top = fam.support_total(3)
    if top < 2:
        return
    r = float(rng.uniform(0.5, top - 0.5))
    lam, lam2 = sorted(rng.uniform(0.3, 3.0, size=2))
    assert proposition1_check(fam, lam, lam2, 3, r, mode).holds
