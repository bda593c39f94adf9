"""
Tests for the distribution toolkit: builders, quantiles, trade probability,
virtual value transforms, ironing, quantile ladders, and the pair check.
"""
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gft_lab import distributions as dst


def test_discrete_builder_invariants():
    d = dst.discrete([0.0, 0.5, 1.0], [0.2, 0.3, 0.5])
    assert math.isclose(sum(d.probs), 1.0, abs_tol=1e-12)
    assert all(a < b for a, b in zip(d.values, d.values[1:]))
    assert d.kind == "discrete"
    with pytest.raises(ValueError):
        dst.discrete([0.0, 1.0], [0.6, 0.6])
    with pytest.raises(ValueError):
        dst.discrete([1.0, 1.0], [0.5, 0.5])


def test_discrete_builder_sorts_unsorted_input():
    d = dst.discrete([1.0, 0.0], [0.25, 0.75])
    assert tuple(d.values) == (0.0, 1.0)
    assert math.isclose(d.mass(0.0), 0.75, abs_tol=1e-12)


@given(st.floats(0.01, 0.99))
@settings(max_examples=40, deadline=None)
def test_continuous_quantile_cdf_roundtrip(q):
    for d in (dst.uniform(0.0, 1.0), dst.exponential_truncated(6.0), dst.lognormal(0.0, 0.5)):
        v = dst.quantile(d, q)
        assert math.isclose(d.cdf(v), q, abs_tol=1e-9)


def test_quantile_examples():
    u = dst.uniform(0.0, 1.0)
    assert math.isclose(dst.quantile(u, 0.75), 0.75, abs_tol=1e-12)
    assert math.isclose(dst.quantile(u, 0.0), 0.0, abs_tol=1e-12)
    two = dst.discrete([0.0, 1.0], [0.5, 0.5])
    assert math.isclose(dst.quantile(two, 0.5), 0.0, abs_tol=1e-12)
    assert math.isclose(dst.upper_quantile(two, 0.5), 1.0, abs_tol=1e-12)


def test_sampling_matches_cdf():
    rng = np.random.default_rng(42)
    for d in (dst.uniform(0.25, 1.5), dst.exponential_truncated(4.0),
              dst.discrete([0.0, 0.3, 0.9], [0.5, 0.2, 0.3])):
        x = np.sort(d.sample(rng, 20000))
        # one-sided KS style check at a handful of probe points
        for v in np.linspace(*d.support(), 9):
            emp = np.searchsorted(x, v, side="right") / len(x)
            assert abs(emp - d.cdf(v)) < 0.02


def test_trade_probability_examples():
    u = dst.uniform(0.0, 1.0)
    assert math.isclose(dst.trade_probability(u, u), 0.5, abs_tol=1e-9)
    assert math.isclose(
        dst.trade_probability(dst.point_mass(1.0), dst.point_mass(0.0)), 1.0, abs_tol=1e-12
    )


def test_trade_probability_exponential_pair_matches_closed_form():
    from gft_lab import instances

    t = 10.0
    inst = instances.example_a1(t)
    got = dst.trade_probability(inst.buyer_dists[0], inst.seller_dists[0])
    assert math.isclose(got, instances.a1_r(t), abs_tol=1e-9)


def test_trade_probability_discrete_matches_double_sum():
    b = dst.discrete([0.2, 0.7, 1.1], [0.3, 0.3, 0.4])
    s = dst.discrete([0.1, 0.7, 1.5], [0.25, 0.5, 0.25])
    brute = sum(
        pb * ps
        for vb, pb in zip(b.values, b.probs)
        for vs, ps in zip(s.values, s.probs)
        if vb >= vs
    )
    assert math.isclose(dst.trade_probability(b, s), brute, abs_tol=1e-12)


def test_buyer_virtual_uniform():
    u = dst.uniform(0.0, 1.0)
    assert math.isclose(dst.buyer_virtual(u, 0.5), 0.0, abs_tol=1e-9)
    assert math.isclose(dst.buyer_virtual(u, 1.0), 1.0, abs_tol=1e-9)


def test_seller_virtual_uniform():
    u = dst.uniform(0.0, 1.0)
    assert math.isclose(dst.seller_virtual(u, 0.5), 1.0, abs_tol=1e-9)
    assert math.isclose(dst.seller_virtual(u, 0.0), 0.0, abs_tol=1e-9)


def test_virtuals_on_geometric_supports():
    from gft_lab import instances

    inst = instances.example_a3(8)
    bd = inst.buyer_dists[0]
    sd = inst.seller_dists[0]
    # highest buyer type keeps its value
    assert math.isclose(dst.buyer_virtual(bd, 255.0), 255.0, abs_tol=1e-9)
    # the bottom cost keeps its value, every other cost jumps to 2^m
    assert math.isclose(dst.seller_virtual(sd, 0.0), 0.0, abs_tol=1e-9)
    for v in sd.values[1:]:
        assert math.isclose(dst.seller_virtual(sd, v), 256.0, abs_tol=1e-9)


def test_iron_uniform_buyer_is_2b_minus_1():
    iv = dst.iron(dst.uniform(0.0, 1.0), "buyer")
    for b in (0.0, 0.25, 0.5, 0.9, 1.0):
        assert math.isclose(iv(b), 2.0 * b - 1.0, abs_tol=1e-6)


def test_iron_uniform_seller_is_2s():
    iv = dst.iron(dst.uniform(0.0, 1.0), "seller")
    for s in (0.0, 0.25, 0.5, 1.0):
        assert math.isclose(iv(s), 2.0 * s, abs_tol=1e-6)


def test_iron_two_atom_buyer():
    iv = dst.iron(dst.discrete([1.0, 2.0], [0.5, 0.5]), "buyer")
    got = iv.at_atoms()
    assert math.isclose(got[0], 0.0, abs_tol=1e-12)
    assert math.isclose(got[1], 2.0, abs_tol=1e-12)


def test_iron_is_identity_when_raw_virtuals_monotone():
    from gft_lab import instances

    bd = instances.example_a3(6).buyer_dists[0]
    raw = [dst.buyer_virtual(bd, v) for v in bd.values]
    assert all(a <= b + 1e-12 for a, b in zip(raw, raw[1:]))
    ironed = dst.iron(bd, "buyer").at_atoms()
    assert np.allclose(ironed, raw, atol=1e-9)


def test_ironed_virtuals_nondecreasing():
    rng = np.random.default_rng(3)
    for _ in range(25):
        k = int(rng.integers(2, 7))
        vals = np.sort(rng.uniform(0.0, 3.0, size=k))
        vals += np.arange(k) * 1e-3
        probs = rng.dirichlet(np.ones(k))
        for side in ("buyer", "seller"):
            arr = dst.iron(dst.discrete(vals, probs), side).at_atoms()
            assert all(a <= b + 1e-9 for a, b in zip(arr, arr[1:]))


def test_payment_identity_continuous():
    # integral of phi over [p, top] equals p * (1 - F(p)) for regular dists
    from scipy import integrate

    for d in (dst.uniform(0.0, 1.0), dst.exponential_truncated(4.0)):
        iv = dst.iron(d, "buyer")
        top = d.support()[1]
        for p in (0.2, 0.5, 0.8):
            lhs, _ = integrate.quad(lambda v: iv(v) * d.pdf(v), p, top, limit=200)
            assert math.isclose(lhs, p * d.tail(p), abs_tol=1e-6)


def test_quantile_ladder_examples():
    u = dst.uniform(0.0, 1.0)
    assert np.allclose(dst.quantile_ladder(u, 0.5, "buyer"), [0.5, 0.75], atol=1e-12)
    assert np.allclose(dst.quantile_ladder(u, 0.5, "seller"), [0.5, 0.25], atol=1e-12)
    assert np.allclose(dst.quantile_ladder(u, 1.0, "buyer"), [0.5], atol=1e-12)


def test_quantile_ladder_depth_grows_as_r_shrinks():
    u = dst.uniform(0.0, 1.0)
    assert len(dst.quantile_ladder(u, 0.1, "buyer")) == math.ceil(math.log2(2.0 / 0.1))


def test_pair_check_examples():
    u = dst.uniform(0.0, 1.0)
    x, y, ok = dst.quantile_pair_check(u, u)
    assert ok
    assert math.isclose(x, 0.75, abs_tol=1e-9)
    assert math.isclose(y, 0.25, abs_tol=1e-9)
    x, y, ok = dst.quantile_pair_check(dst.point_mass(1.0), dst.point_mass(0.0))
    assert ok
    assert math.isclose(x, 1.0, abs_tol=1e-12)
    assert math.isclose(y, 0.0, abs_tol=1e-12)


def test_pair_check_holds_on_random_lognormal_pairs():
    rng = np.random.default_rng(11)
    for _ in range(100):
        b = dst.lognormal(float(rng.normal(0.0, 0.4)), float(rng.uniform(0.2, 0.8)))
        s = dst.lognormal(float(rng.normal(-0.3, 0.4)), float(rng.uniform(0.2, 0.8)))
        assert dst.quantile_pair_check(b, s)[2]


def test_point_mass_and_support():
    d = dst.point_mass(0.7)
    assert d.support() == (0.7, 0.7)
    assert math.isclose(d.mean(), 0.7, abs_tol=1e-12)
    assert math.isclose(d.cdf(0.7), 1.0, abs_tol=1e-12)
    assert math.isclose(d.cdf(0.6999), 0.0, abs_tol=1e-12)


def test_json_round_trip():
    for d in (
        dst.uniform(0.2, 1.4),
        dst.discrete([0.0, 0.5, 1.0], [0.2, 0.3, 0.5]),
        dst.point_mass(2.0),
        dst.exponential_truncated(8.0),
        dst.lognormal(0.1, 0.6),
    ):
        back = dst.dist_from_json(dst.dist_to_json(d))
        assert back.kind == d.kind
        for q in (0.1, 0.5, 0.9):
            assert math.isclose(dst.quantile(back, q), dst.quantile(d, q), abs_tol=1e-9)
