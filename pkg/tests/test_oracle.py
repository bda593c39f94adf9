"""
Tests for the LP oracle over fully discrete instances: the incentive-feasible
optimum, the seller-side relaxation, the partition check, and the verification
chain that ties mechanisms, LP values, and benchmarks together.
"""
import math

import numpy as np
import pytest

from gft_lab import audits
from gft_lab import distributions as dst
from gft_lab import feasibility as fea
from gft_lab import mechanisms as mech
from gft_lab import oracle

d = dst.discrete


def bilateral(bvals, bprobs, svals, sprobs):
    return mech.market([d(bvals, bprobs)], [d(svals, sprobs)], fea.additive([0]))


def grid_bilateral(k):
    atoms = [(j + 1) / k for j in range(k)]
    probs = [1.0 / k] * k
    return bilateral(atoms, probs, atoms, probs)


def test_second_best_sure_trade():
    inst = bilateral([1.0], [1.0], [0.0], [1.0])
    assert math.isclose(oracle.second_best_lp(oracle.DiscreteMarket(inst)), 1.0, abs_tol=1e-9)


def test_second_best_no_gains_possible():
    inst = bilateral([1.0], [1.0], [2.0], [1.0])
    m = oracle.DiscreteMarket(inst)
    assert math.isclose(oracle.second_best_lp(m), 0.0, abs_tol=1e-9)
    chain = oracle.verify_ub_chain(m)
    assert chain["sb_le_fb"]
    assert chain["sb_le_optb_plus_opts"]
    assert math.isclose(chain["fb"], 0.0, abs_tol=1e-9)


def test_second_best_strictly_below_first_best_on_uniform_grid():
    inst = grid_bilateral(8)
    m = oracle.DiscreteMarket(inst)
    sb = oracle.second_best_lp(m)
    fb = audits.first_best_gft(inst, "exact")
    assert math.isclose(sb, 0.153125, abs_tol=1e-9)
    assert math.isclose(fb, 0.1640625, abs_tol=1e-9)
    assert fb - sb > 1e-9


def test_second_best_two_atom_fixture():
    inst = bilateral([1.0, 2.0], [0.5, 0.5], [0.0, 0.5], [0.5, 0.5])
    assert math.isclose(oracle.second_best_lp(oracle.DiscreteMarket(inst)), 1.25, abs_tol=1e-9)


def test_second_best_scale_homogeneous():
    base = bilateral([1.0, 2.0], [0.5, 0.5], [0.0, 0.5], [0.5, 0.5])
    scaled = bilateral([2.0, 4.0], [0.5, 0.5], [0.0, 1.0], [0.5, 0.5])
    sb = oracle.second_best_lp(oracle.DiscreteMarket(base))
    sb2 = oracle.second_best_lp(oracle.DiscreteMarket(scaled))
    assert math.isclose(sb2, 2.0 * sb, abs_tol=1e-9)


def test_second_best_expost_budget_no_looser():
    inst = bilateral([1.0, 2.0], [0.5, 0.5], [0.0, 0.5], [0.5, 0.5])
    m = oracle.DiscreteMarket(inst)
    assert oracle.second_best_lp(m, budget="expost") <= oracle.second_best_lp(m) + 1e-9


def test_opt_s_examples():
    inst = bilateral([1.0], [1.0], [0.0], [1.0])
    assert math.isclose(oracle.opt_s_lp(oracle.DiscreteMarket(inst)), 1.0, abs_tol=1e-9)
    two = bilateral([1.0, 2.0], [0.5, 0.5], [0.0], [1.0])
    assert math.isclose(oracle.opt_s_lp(oracle.DiscreteMarket(two)), 1.0, abs_tol=1e-9)


def test_opt_s_partition_random_two_item():
    rng = np.random.default_rng(12)
    for _ in range(3):
        bd = [
            d(np.sort(rng.uniform(0.5, 2.0, 2)), [0.5, 0.5]),
            d(np.sort(rng.uniform(0.5, 2.0, 2)), [0.5, 0.5]),
        ]
        sd = [
            d(np.sort(rng.uniform(0.0, 1.0, 2)), [0.5, 0.5]),
            d(np.sort(rng.uniform(0.0, 1.0, 2)), [0.5, 0.5]),
        ]
        inst = mech.market(bd, sd, fea.unit_demand(range(2)))
        res = oracle.opt_s_partition_check(oracle.DiscreteMarket(inst))
        assert set(res) == {"keep0", "keep1"}
        for whole, split, ok in res.values():
            assert ok
            assert whole <= split + 1e-6


def test_verify_ub_chain_two_atom_fixture():
    inst = bilateral([1.0, 2.0], [0.5, 0.5], [0.0, 0.5], [0.5, 0.5])
    chain = oracle.verify_ub_chain(oracle.DiscreteMarket(inst))
    assert chain["sb_le_fb"]
    assert chain["sb_le_optb_plus_opts"]
    assert chain["mechanisms"]
    for name, (gft, ok) in chain["mechanisms"].items():
        assert ok, name
        assert gft <= chain["sb"] + 1e-6
    assert "buyer_offering" in chain["mechanisms"]
    assert chain["mechanisms"]["buyer_offering"][0] <= chain["sb"] + 1e-6


def test_verify_ub_chain_matches_components():
    from gft_lab import bounds

    inst = mech.market(
        [d([1.0, 2.0], [0.5, 0.5]), d([0.5, 1.5], [0.5, 0.5])],
        [d([0.0, 0.5], [0.5, 0.5]), d([0.2, 1.0], [0.5, 0.5])],
        fea.unit_demand(range(2)),
    )
    m = oracle.DiscreteMarket(inst)
    chain = oracle.verify_ub_chain(m)
    assert math.isclose(chain["sb"], 1.31875, abs_tol=1e-9)
    assert math.isclose(chain["fb"], audits.first_best_gft(inst, "exact"), abs_tol=1e-9)
    assert math.isclose(chain["opt_b"], bounds.opt_b(inst, "exact"), abs_tol=1e-9)
    assert math.isclose(chain["opt_s"], oracle.opt_s_lp(m), abs_tol=1e-9)


def test_lp_text_dump():
    inst = bilateral([1.0, 2.0], [0.5, 0.5], [0.0, 0.5], [0.5, 0.5])
    txt = oracle.lp_text(oracle.DiscreteMarket(inst))
    assert txt.startswith("maximize")
    assert "subject to" in txt
    assert "buyerIR" in txt


def test_discrete_market_guards():
    u = dst.uniform(0.0, 1.0)
    cont = mech.market([u], [u], fea.additive([0]))
    with pytest.raises(ValueError):
        oracle.DiscreteMarket(cont)
    many = mech.market(
        [d([0.0, 1.0], [0.5, 0.5])] * 9,
        [d([0.0, 1.0], [0.5, 0.5])] * 9,
        fea.additive(range(9)),
    )
    with pytest.raises(fea.CapacityError):
        oracle.DiscreteMarket(many)
