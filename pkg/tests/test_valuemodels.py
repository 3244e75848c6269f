import numpy as np
import pytest

from fourier_auctions.core import CapacityError, InvalidInstanceError, popcount
from fourier_auctions.fourier import forward
from fourier_auctions.valuemodels import (
    InstanceSpec,
    SparseSyntheticParams,
    cluster_values,
    generate,
    generate_local_synergy,
    generate_sparse_synthetic,
    grid_shape,
    sparse_synthetic_spectrum,
    true_optimum,
    true_spectrum,
    type_shares,
)

from conftest import brute_force_wdp

GSVM_ROSTER = [("national", 1), ("regional", 3)]


def gs(m, seed, **kw):
    return generate(InstanceSpec(m, GSVM_ROSTER, seed, "global-synergy", kw))


def test_spec_validation():
    with pytest.raises(InvalidInstanceError):
        InstanceSpec(4, [("national", 0)])
    with pytest.raises(InvalidInstanceError):
        InstanceSpec(30)
    with pytest.raises(InvalidInstanceError):
        InstanceSpec(4, family="mrvm")
    with pytest.raises(InvalidInstanceError):
        InstanceSpec(4, [("alien", 1)])
    with pytest.raises(InvalidInstanceError):
        SparseSyntheticParams(k=40, d=1).check(6)
    spec = InstanceSpec(5, [("local", 2)], 3, "local-synergy", {"radius": 1})
    assert InstanceSpec.from_dict(spec.to_dict()) == spec


@pytest.mark.parametrize("family", ["global-synergy", "local-synergy", "sparse-synthetic"])
def test_nonnegative_normalized_deterministic(family):
    params = {"k": 5, "d": 2} if family == "sparse-synthetic" else {}
    spec = InstanceSpec(8, [("national", 1), ("regional", 2)], 7, family, params)
    a, b = generate(spec), generate(spec)
    for va, vb in zip(a.bidders, b.bidders):
        t = va.dense()
        assert t[0] == 0.0 and t.min() >= 0.0
        np.testing.assert_array_equal(t, vb.dense())
    other = generate(InstanceSpec(8, spec.roster, 8, family, params))
    assert not np.array_equal(a.bidders[0].dense(), other.bidders[0].dense())


# ---------------------------------------------------------------- global synergy

def test_global_synergy_degree_two():
    for seed in range(5):
        inst = gs(12, seed)
        card = popcount(np.arange(1 << 12))
        for b in inst.bidders:
            phi = forward(b.dense(), "ft3")
            assert np.abs(phi[card >= 3]).max() <= 1e-9


@pytest.mark.slow
def test_global_synergy_m18_wht_support():
    inst = generate(InstanceSpec(18, [("national", 1), ("regional", 6)], 0, "global-synergy"))
    for b in inst.bidders:
        assert np.count_nonzero(np.abs(forward(b.dense(), "wht")) > 1e-9) <= 172


def test_regional_bidder_ignores_outside_items():
    inst = gs(10, 4)
    for b, region, t in zip(inst.bidders, inst.regions, inst.types):
        x = np.arange(1 << 10)
        outside = x[(x & region) == 0]
        assert not b.dense()[outside].any()
        if t == "national":
            assert region == (1 << 10) - 1


def test_global_synergy_closed_form():
    inst = gs(6, 1, synergy=0.5)
    b = inst.bidders[0]
    single = np.array([b.value(1 << j) for j in range(6)])
    # v(x) = (1 + s (|x| - 1)) * sum of item values on the region
    for x in (0b11, 0b10101, 0b111111):
        items = [j for j in range(6) if x >> j & 1]
        want = (1 + 0.5 * (len(items) - 1)) * single[items].sum()
        assert b.value(x) == pytest.approx(want)


# ---------------------------------------------------------------- local synergy

def test_grid_shape():
    assert grid_shape(12) == (3, 4)
    assert grid_shape(7) == (1, 7)
    assert grid_shape(16) == (4, 4)


def test_cluster_values_examples():
    base = np.array([1.0, 2.0, 3.0, 4.0])  # 2x2 grid
    flat = lambda s: np.zeros_like(s, dtype=float)
    np.testing.assert_allclose(cluster_values(np.array([0b1001]), base, 2, 2, flat), [5.0])
    # items 0 and 3 are diagonal, so two clusters of size one
    bonus = lambda s: (s > 1) * 1.0
    np.testing.assert_allclose(cluster_values(np.array([0b1001, 0b0011, 0b1111]), base, 2, 2, bonus), [5.0, 6.0, 20.0])


def test_local_synergy_single_items_and_superadditivity():
    for seed in range(5):
        inst = generate_local_synergy(InstanceSpec(12, [("national", 1), ("regional", 2)], seed, "local-synergy"))
        rows, cols = inst.meta["grid"]
        for b, region in zip(inst.bidders, inst.regions):
            t = b.dense()
            for j in range(12):
                if region >> j & 1 and j % cols != cols - 1 and region >> (j + 1) & 1:
                    pair = (1 << j) | (1 << (j + 1))
                    assert t[pair] > t[1 << j] + t[1 << (j + 1)]


def test_local_synergy_has_high_degree_energy():
    inst = generate(InstanceSpec(12, [("national", 1), ("regional", 2)], 0, "local-synergy"))
    card = popcount(np.arange(1 << 12))
    for b in inst.bidders:
        phi = forward(b.dense(), "wht")
        assert np.sum(phi[card >= 3] ** 2) > 0


# ---------------------------------------------------------------- sparse synthetic

@pytest.mark.parametrize("kind", ["wht", "ft3", "ft4"])
def test_sparse_synthetic_roundtrip(kind):
    for seed in range(5):
        inst = generate_sparse_synthetic(InstanceSpec(8, [("local", 3)], seed, "sparse-synthetic", {"kind": kind, "k": 6, "d": 3}))
        for b in inst.bidders:
            s = true_spectrum(b, kind)
            phi = forward(b.dense(), kind)
            assert len(s) == 6
            np.testing.assert_allclose(phi, s.to_dense(), atol=1e-9)
            assert set(np.flatnonzero(np.abs(phi) > 1e-9)) == set(s.freqs.tolist())
            assert popcount(s.freqs).max() <= 3


def test_sparse_synthetic_constant():
    s = sparse_synthetic_spectrum(np.random.default_rng(0), 5, SparseSyntheticParams(k=1))
    assert list(s.freqs) == [0] and s.coeffs[0] > 0


def test_additive_instance_per_item_argmax():
    for seed in range(5):
        inst = generate(InstanceSpec(8, [("local", 3)], seed, "sparse-synthetic", {"kind": "ft3", "k": 5, "d": 1}))
        item_vals = np.array([[b.value(1 << j) for j in range(8)] for b in inst.bidders])
        _, w = true_optimum(inst)
        assert w == pytest.approx(item_vals.max(axis=0).sum())


# ---------------------------------------------------------------- optimum

def test_true_optimum_single_bidder():
    inst = gs(6, 2)
    inst1 = type(inst)(inst.spec, inst.bidders[:1], inst.types[:1], inst.regions[:1])
    alloc, w = true_optimum(inst1)
    assert w == inst.bidders[0].dense().max()


def test_true_optimum_dual_oracle():
    rng = np.random.default_rng(0)
    done = 0
    for t in range(150):
        m, n = int(rng.integers(2, 7)), int(rng.integers(1, 4))
        params = {"kind": ["wht", "ft3", "ft4"][t % 3], "k": int(rng.integers(1, 6)), "d": 2}
        try:
            SparseSyntheticParams(**params).check(m)
        except InvalidInstanceError:
            continue
        inst = generate(InstanceSpec(m, [("local", n)], t, "sparse-synthetic", params))
        _, w_ex = true_optimum(inst, "exhaustive")
        assert true_optimum(inst, "ft")[1] == pytest.approx(w_ex, abs=1e-9)
        assert true_optimum(inst, "dp")[1] == pytest.approx(w_ex, abs=1e-9)
        done += 1
    assert done >= 100


def test_ft3_capacity_excludes_empty_frequency():
    SparseSyntheticParams(kind="wht", k=4, d=2).check(2)
    with pytest.raises(InvalidInstanceError):
        SparseSyntheticParams(kind="ft3", k=4, d=2).check(2)


def test_true_optimum_matches_brute_force():
    inst = gs(5, 3)
    _, want = brute_force_wdp([b.value for b in inst.bidders], 5)
    assert true_optimum(inst)[1] == pytest.approx(want)
    with pytest.raises(ValueError):
        true_optimum(inst, "magic")


def test_true_optimum_capacity():
    inst = generate(InstanceSpec(23, [("local", 1)], 0, "sparse-synthetic", {"k": 2, "d": 1}))
    with pytest.raises(CapacityError):
        true_optimum(inst, "ft")


def test_type_shares():
    inst = gs(6, 5)
    alloc, w = true_optimum(inst)
    shares = type_shares(inst, alloc)
    assert set(shares) == {"national", "regional"}
    assert sum(shares.values()) == pytest.approx(1.0)
