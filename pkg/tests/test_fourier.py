import itertools

import numpy as np
import pytest

from fourier_auctions.core import CapacityError, bundle_from_str
from fourier_auctions.fourier import (
    SparseSpectrum,
    TransformKind,
    energy_by_cardinality,
    evaluate_sparse,
    forward,
    inverse,
    inverse_column_norm,
    rank_frequencies,
    select_best_k,
)

from conftest import TABLE1, TABLE2, from_paper, oracle_forward, oracle_inverse, to_paper

KINDS = ["wht", "ft3", "ft4"]


@pytest.mark.parametrize("kind", KINDS)
def test_table1_forward(table1, kind):
    np.testing.assert_allclose(to_paper(forward(table1, kind)), TABLE1[kind], atol=1e-12)


@pytest.mark.parametrize("kind", KINDS)
def test_table1_inverse(table1, kind):
    np.testing.assert_allclose(inverse(from_paper(TABLE1[kind]), kind), table1, atol=1e-12)


@pytest.mark.parametrize("kind", KINDS)
def test_zero_function(kind):
    assert not forward(np.zeros(16), kind).any()


def test_point_mass_at_empty_is_constant():
    phi = np.zeros(16)
    phi[0] = 2.5
    np.testing.assert_array_equal(inverse(phi, "ft3"), np.full(16, 2.5))


@pytest.mark.parametrize("kind", KINDS)
@pytest.mark.parametrize("m", [1, 2, 3, 5])
def test_matrix_oracle(kind, m):
    rng = np.random.default_rng(m)
    v = rng.normal(size=1 << m)
    F, G = oracle_forward(m, kind), oracle_inverse(m, kind)
    np.testing.assert_allclose(G @ F, np.eye(1 << m), atol=1e-12)
    np.testing.assert_allclose(forward(v, kind), F @ v, atol=1e-12)
    np.testing.assert_allclose(inverse(v, kind), G @ v, atol=1e-12)


@pytest.mark.parametrize("kind", KINDS)
def test_roundtrip_m10(kind):
    v = np.random.default_rng(10).uniform(0, 10, size=1 << 10)
    np.testing.assert_allclose(inverse(forward(v, kind), kind), v, atol=1e-9)


def test_kind_parse():
    assert TransformKind.parse("WHT") is TransformKind.WHT
    with pytest.raises(ValueError):
        TransformKind.parse("ft5")


def test_bad_length():
    with pytest.raises(ValueError):
        forward(np.zeros(6), "wht")


def test_capacity_error_is_raised_from_width_check(monkeypatch):
    import fourier_auctions.fourier as f

    monkeypatch.setattr(f, "MAX_ITEMS", 3)
    with pytest.raises(CapacityError):
        f.forward(np.zeros(16), "wht")


def test_evaluate_sparse_examples(table1):
    ft4 = SparseSpectrum.from_dense(forward(table1, "ft4"), "ft4")
    assert sorted(ft4.freqs) == sorted(bundle_from_str(s) for s in ["000", "100", "010", "001", "111"])
    assert evaluate_sparse(ft4, bundle_from_str("110")) == pytest.approx(3.0)
    wht = SparseSpectrum.from_dense(forward(table1, "wht"), "wht")
    assert wht(7) == pytest.approx(5.0)
    empty = SparseSpectrum("wht", 3, [], [])
    assert evaluate_sparse(empty, 5) == 0.0


@pytest.mark.parametrize("kind", KINDS)
def test_evaluate_sparse_matches_inverse_sum(kind):
    rng = np.random.default_rng(3)
    for m in (4, 7, 10):
        for k in (1, 5, 20):
            freqs = rng.choice(1 << m, size=min(k, 1 << m), replace=False)
            s = SparseSpectrum(kind, m, freqs, rng.normal(size=freqs.size))
            x = np.arange(1 << m)
            G = oracle_inverse(m, kind) if m <= 4 else None
            want = G[:, s.freqs] @ s.coeffs if G is not None else inverse(s.to_dense(), kind)
            np.testing.assert_allclose(evaluate_sparse(s, x), want, atol=1e-9)


def test_sparse_spectrum_validation():
    with pytest.raises(ValueError):
        SparseSpectrum("wht", 3, [1, 1], [1.0, 2.0])
    s = SparseSpectrum.from_dict({3: 1.0, 5: 0.0}, "ft3", 3).pruned()
    assert s.as_dict() == {3: 1.0}
    np.testing.assert_array_equal(s.support_matrix(), [[1, 1, 0]])


@pytest.mark.parametrize("kind", KINDS)
def test_energy_table2(table1, kind):
    got = energy_by_cardinality(forward(table1, kind)) * 100
    np.testing.assert_allclose(got, TABLE2[kind], atol=0.5)
    assert got.sum() == pytest.approx(100.0)


def test_energy_exact_fractions(table1):
    np.testing.assert_allclose(energy_by_cardinality(forward(table1, "ft3")), [0, 3 / 7, 3 / 7, 1 / 7])
    np.testing.assert_allclose(energy_by_cardinality(forward(table1, "ft4")), np.array([25, 12, 0, 1]) / 38)
    with pytest.raises(ValueError):
        energy_by_cardinality(np.zeros(8))


def test_column_norms_against_matrix():
    for kind in KINDS:
        G = oracle_inverse(4, kind)
        for y in range(16):
            assert inverse_column_norm(kind, y, 4) == pytest.approx(np.linalg.norm(G[:, y]))
    assert inverse_column_norm("ft3", 7, 3) == 1.0
    assert inverse_column_norm("ft4", 0, 3) == pytest.approx(np.sqrt(8))
    assert inverse_column_norm("wht", 5, 3) == pytest.approx(np.sqrt(8))


def test_select_best_k_examples(table1):
    s = select_best_k(forward(table1, "wht"), "wht", 1)
    assert s.as_dict() == {0: 17 / 8}
    f4 = select_best_k(forward(table1, "ft4"), "ft4", 5)
    assert len(f4) == 5
    np.testing.assert_allclose(inverse(f4.to_dense(), "ft4"), table1, atol=1e-12)
    for kind in KINDS:
        full = select_best_k(forward(table1, kind), kind, 8)
        np.testing.assert_allclose(inverse(full.to_dense(), kind), table1, atol=1e-12)


def test_ties_broken_by_ascending_bundle():
    phi = np.array([0.0, 1.0, 1.0, 0.0, 1.0, 0.0, 0.0, 0.0])
    assert list(rank_frequencies(phi, "wht")[:3]) == [1, 2, 4]


def test_wht_best_k_is_l2_optimal():
    rng = np.random.default_rng(5)
    m = 5
    for _ in range(5):
        v = rng.normal(size=1 << m)
        phi = forward(v, "wht")
        for k in (1, 2, 3):
            err = np.sum((inverse(select_best_k(phi, "wht", k).to_dense(), "wht") - v) ** 2)
            # dropped energy scaled by 2^m, as the columns have squared norm 2^m
            kept = select_best_k(phi, "wht", k).freqs
            assert err == pytest.approx((np.sum(phi**2) - np.sum(phi[kept] ** 2)) * 2**m)
            for supp in itertools.combinations(range(1 << m), k):
                trial = np.zeros_like(phi)
                trial[list(supp)] = phi[list(supp)]
                assert np.sum((inverse(trial, "wht") - v) ** 2) >= err - 1e-9
