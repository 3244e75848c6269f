import numpy as np
import pytest

from fourier_auctions.core import ReportSet
from fourier_auctions.mechanisms import (
    HybridConfig,
    MlcaConfig,
    TABLE4_SPLITS,
    proportional_split,
    run_hybrid_ica,
    run_hybrid_variants,
    run_mlca,
    vcg_payments,
    wht_allocation_rule,
)
from fourier_auctions.surrogate import TrainConfig
from fourier_auctions.valuemodels import InstanceSpec, generate, true_optimum

from conftest import brute_vcg

FAST = TrainConfig(epochs=100)
ROSTER = [("national", 1), ("regional", 2)]


def small(family="global-synergy", m=4, seed=0, params=None):
    return generate(InstanceSpec(m, ROSTER, seed, family, params or {}))


def test_proportional_split():
    assert proportional_split(40) == (12, 8, 8, 12)
    assert proportional_split(100) == TABLE4_SPLITS["gsvm"]
    assert sum(proportional_split(37, TABLE4_SPLITS["lsvm"])) == 37
    assert proportional_split(10, (1, 1, 1, 1)) == (2, 2, 3, 3)


def test_config_validation():
    with pytest.raises(ValueError):
        MlcaConfig(q_init=5, q_max=4)
    with pytest.raises(ValueError):
        HybridConfig(l1=0)
    with pytest.raises(ValueError):
        HybridConfig(ablation="no-fa")
    assert HybridConfig(l1=3, l2=2, l3=1, l4=4).budget == 10


# ---------------------------------------------------------------- VCG

def test_vcg_examples():
    assert vcg_payments([ReportSet({1: 5.0})]) == [0.0]
    # one item, two bidders: the winner pays the loser's value
    assert vcg_payments([ReportSet({1: 5.0}), ReportSet({1: 3.0})]) == [3.0, 0.0]
    # complementary bidders each pay nothing when they do not compete
    assert vcg_payments([ReportSet({1: 2.0}), ReportSet({2: 4.0})]) == [0.0, 0.0]


def test_vcg_matches_brute_force():
    rng = np.random.default_rng(0)
    for _ in range(100):
        m, n = int(rng.integers(1, 5)), int(rng.integers(1, 4))
        reps = []
        for _ in range(n):
            count = int(rng.integers(0, (1 << m)))
            bundles = rng.choice(np.arange(1, 1 << m), size=count, replace=False)
            reps.append(ReportSet((int(b), float(rng.uniform(0, 10))) for b in bundles))  # continuous, so no ties
        want, _ = brute_vcg(reps, m)
        got = vcg_payments(reps)
        np.testing.assert_allclose(got, want, atol=1e-9)
        assert min(got) >= 0


# ---------------------------------------------------------------- auctions

def test_full_budget_reaches_optimum():
    inst = small(m=3)
    opt = true_optimum(inst)
    res = run_mlca(inst, MlcaConfig(q_init=7, q_max=7, train=FAST))
    assert res.info["efficiency"] == 1.0
    res = run_hybrid_ica(inst, HybridConfig(l1=7, l2=0, l3=0, l4=0, train=FAST, superset=8), optimum=opt)
    assert res.info["efficiency"] == 1.0


def test_mlca_query_accounting():
    inst = small(m=5, seed=1)
    res = run_mlca(inst, MlcaConfig(q_init=4, q_max=10, train=FAST))
    for r, short in zip(res.reports, res.info["shortfall"]):
        assert 0 not in r
        assert len(r) + short == 10
    assert [row["phase"] for row in res.trace] == ["init", "mlca"]
    assert 0 <= res.info["efficiency"] <= 1
    assert all(p >= 0 for p in res.payments)


def test_hybrid_deterministic_and_bounded():
    inst = small("sparse-synthetic", m=6, seed=2, params={"k": 4, "d": 2})
    cfg = HybridConfig(l1=5, l2=3, l3=3, l4=4, seed=3, train=FAST, superset=20)
    a = run_hybrid_ica(inst, cfg)
    b = run_hybrid_ica(inst, cfg)
    assert a.allocation == b.allocation and a.payments == b.payments
    assert [dict(r) for r in a.reports] == [dict(r) for r in b.reports]
    assert [row["phase"] for row in a.trace] == ["init", "mlca", "fr", "fa"]
    for r, short in zip(a.reports, a.info["shortfall"]):
        assert len(r) + short == cfg.budget and 0 not in r
    assert 0 <= a.info["efficiency"] <= 1
    assert a.info["revenue"] >= 0
    assert sum(a.info["type_shares"].values()) == pytest.approx(1.0)


def test_ablation_identity_without_reconstruction_queries():
    inst = small("sparse-synthetic", m=5, seed=4, params={"k": 3, "d": 2})
    cfg = HybridConfig(l1=4, l2=3, l3=0, l4=3, seed=1, train=FAST, superset=16)
    runs = run_hybrid_variants(inst, cfg, ["none", "no-fr"])
    a, b = runs["none"], runs["no-fr"]
    assert [dict(r) for r in a.reports] == [dict(r) for r in b.reports]
    assert [t["efficiency"] for t in a.trace] == [t["efficiency"] for t in b.trace]


def test_variants_share_the_mlca_prefix():
    inst = small(m=5, seed=5)
    cfg = HybridConfig(l1=4, l2=3, l3=2, l4=2, seed=2, train=FAST, superset=16)
    runs = run_hybrid_variants(inst, cfg)
    prefix = [t["efficiency"] for t in runs["none"].trace[:2]]
    for res in runs.values():
        assert [t["efficiency"] for t in res.trace[:2]] == prefix
    single = run_hybrid_ica(inst, cfg)
    assert single.allocation == runs["none"].allocation


def test_mlca_is_hybrid_prefix():
    inst = small(m=4, seed=6)
    hyb = run_hybrid_ica(inst, HybridConfig(l1=3, l2=3, l3=0, l4=0, seed=7, train=FAST))
    mlca = run_mlca(inst, MlcaConfig(q_init=3, q_max=6, seed=7, train=FAST))
    assert hyb.allocation == mlca.allocation


def test_milp_and_dense_wdp_agree():
    inst = small(m=3, seed=8)
    base = dict(l1=2, l2=3, l3=1, l4=2, seed=1, train=FAST, superset=8)
    a = run_hybrid_ica(inst, HybridConfig(**base, wdp="dense"))
    b = run_hybrid_ica(inst, HybridConfig(**base, wdp="milp"))
    assert a.info["efficiency"] == pytest.approx(b.info["efficiency"], abs=1e-9)


# ---------------------------------------------------------------- Procedure 2

def test_wht_allocation_rule_full_k():
    inst = small(m=6, seed=9)
    assert wht_allocation_rule(inst, 64)[1] == pytest.approx(1.0)
    alloc, eff = wht_allocation_rule(inst, 1)
    assert 0 <= eff <= 1


def test_wht_allocation_rule_from_queries():
    inst = small("sparse-synthetic", m=6, seed=10, params={"k": 4, "d": 2})
    _, eff = wht_allocation_rule(inst, 4, query_budget=64)
    assert eff == pytest.approx(1.0)
