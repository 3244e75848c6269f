"""Set-function Fourier transforms (WHT, FT3, FT4) and sparse spectra.

A dense set function over ``m`` items is a float array of length ``2**m``
indexed by bundle bitmask.  All fast transforms run ``m`` vectorized passes,
one per item, for ``O(m 2^m)`` work.

Conventions (``|.|`` is cardinality, ``&`` intersection)::

    FT3   F[y, x] = (-1)^(|y|-|x|) [x subset of y]     Finv[x, y] = [y subset of x]
    FT4   F[y, x] = (-1)^|x & y| [x | y = all]         Finv[x, y] = [x & y = 0]
    WHT   F[y, x] = 2^-m (-1)^|x & y|                  Finv[x, y] = (-1)^|x & y|
"""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .core import MAX_ITEMS, CapacityError, full_bundle, indicator_matrix, popcount

NONZERO_TOL = 1e-12


class TransformKind(str, enum.Enum):
    WHT = "wht"
    FT3 = "ft3"
    FT4 = "ft4"

    @classmethod
    def parse(cls, s) -> "TransformKind":
        if isinstance(s, cls):
            return s
        try:
            return cls(str(s).lower())
        except ValueError:
            raise ValueError(f"unknown transform kind {s!r}; expected wht, ft3 or ft4") from None


def _width(values: np.ndarray) -> int:
    n = values.shape[0]
    m = n.bit_length() - 1
    if values.ndim != 1 or n != 1 << m:
        raise ValueError(f"set function length {n} is not a power of two")
    if m > MAX_ITEMS:
        raise CapacityError(f"m={m} exceeds {MAX_ITEMS}")
    return m


def _zeta(a: np.ndarray, m: int) -> None:
    # a[x] <- sum over subsets y of x of a[y]
    for j in range(m):
        v = a.reshape(-1, 2, 1 << j)
        v[:, 1, :] += v[:, 0, :]


def _mobius(a: np.ndarray, m: int) -> None:
    for j in range(m):
        v = a.reshape(-1, 2, 1 << j)
        v[:, 1, :] -= v[:, 0, :]


def _butterfly(a: np.ndarray, m: int) -> None:
    for j in range(m):
        v = a.reshape(-1, 2, 1 << j)
        lo = v[:, 0, :].copy()
        v[:, 0, :] += v[:, 1, :]
        v[:, 1, :] = lo - v[:, 1, :]


def forward(values, kind) -> np.ndarray:
    """Fourier coefficients ``phi = F v`` of a dense set function."""
    kind = TransformKind.parse(kind)
    v = np.array(values, dtype=float)
    m = _width(v)
    if kind is TransformKind.FT3:
        _mobius(v, m)
        return v
    if kind is TransformKind.FT4:
        v = v[::-1].copy()  # index x -> complement of x
        _mobius(v, m)
        return v
    _butterfly(v, m)
    v /= float(1 << m)
    return v


def inverse(spectrum, kind) -> np.ndarray:
    """Set function ``v = Finv phi`` from a dense spectrum."""
    kind = TransformKind.parse(kind)
    a = np.array(spectrum, dtype=float)
    m = _width(a)
    if kind is TransformKind.FT3:
        _zeta(a, m)
        return a
    if kind is TransformKind.FT4:
        _zeta(a, m)
        return a[::-1].copy()
    _butterfly(a, m)
    return a


def transform_matrix(m: int, kind) -> np.ndarray:
    """Explicit ``2^m x 2^m`` forward matrix, for testing only."""
    kind = TransformKind.parse(kind)
    y = np.arange(1 << m).reshape(-1, 1)
    x = np.arange(1 << m).reshape(1, -1)
    inter = popcount(x & y)
    if kind is TransformKind.FT3:
        return np.where((x & y) == x, (-1.0) ** (popcount(y) - popcount(x)), 0.0)
    if kind is TransformKind.FT4:
        return np.where((x | y) == full_bundle(m), (-1.0) ** inter, 0.0)
    return (-1.0) ** inter / float(1 << m)


def inverse_matrix(m: int, kind) -> np.ndarray:
    """Explicit inverse matrix, rows indexed by bundle, columns by frequency."""
    kind = TransformKind.parse(kind)
    x = np.arange(1 << m).reshape(-1, 1)
    y = np.arange(1 << m).reshape(1, -1)
    return inverse_entries(x, y, kind)


def inverse_entries(x, y, kind) -> np.ndarray:
    """``Finv[x, y]`` for broadcastable integer arrays of bundles and frequencies."""
    kind = TransformKind.parse(kind)
    x = np.asarray(x, dtype=np.int64)
    y = np.asarray(y, dtype=np.int64)
    if kind is TransformKind.FT3:
        return ((x & y) == y).astype(float)
    if kind is TransformKind.FT4:
        return ((x & y) == 0).astype(float)
    return 1.0 - 2.0 * (popcount(x & y) & 1)


@dataclass
class SparseSpectrum:
    """Fourier coefficients on an explicit support.

    ``freqs[l]`` is the frequency bundle of coefficient ``coeffs[l]``.  Order
    is meaningful only as the row order of :meth:`support_matrix`.
    """

    kind: TransformKind
    m: int
    freqs: np.ndarray
    coeffs: np.ndarray

    def __post_init__(self):
        self.kind = TransformKind.parse(self.kind)
        self.freqs = np.asarray(self.freqs, dtype=np.int64).reshape(-1)
        self.coeffs = np.asarray(self.coeffs, dtype=float).reshape(-1)
        if self.freqs.shape != self.coeffs.shape:
            raise ValueError("freqs and coeffs differ in length")
        if len(np.unique(self.freqs)) != len(self.freqs):
            raise ValueError("duplicate frequency in sparse spectrum")
        if len(self.freqs) > (1 << self.m):
            raise ValueError("support larger than 2^m")

    @classmethod
    def from_dense(cls, phi, kind, tol: float = NONZERO_TOL) -> "SparseSpectrum":
        phi = np.asarray(phi, dtype=float)
        m = _width(phi)
        idx = np.flatnonzero(np.abs(phi) > tol)
        return cls(kind, m, idx, phi[idx])

    @classmethod
    def from_dict(cls, coeffs: dict, kind, m: int) -> "SparseSpectrum":
        keys = sorted(coeffs)
        return cls(kind, m, np.array(keys, dtype=np.int64), np.array([coeffs[k] for k in keys], dtype=float))

    def __len__(self) -> int:
        return len(self.freqs)

    def as_dict(self) -> dict[int, float]:
        return {int(y): float(c) for y, c in zip(self.freqs, self.coeffs)}

    def pruned(self, tol: float = NONZERO_TOL) -> "SparseSpectrum":
        keep = np.abs(self.coeffs) > tol
        return SparseSpectrum(self.kind, self.m, self.freqs[keep], self.coeffs[keep])

    def support_matrix(self) -> np.ndarray:
        """``W`` with ``W[l, j] = 1`` iff item ``j`` is in frequency ``l``."""
        return indicator_matrix(self.freqs, self.m)

    def to_dense(self) -> np.ndarray:
        phi = np.zeros(1 << self.m)
        phi[self.freqs] = self.coeffs
        return phi

    def __call__(self, x):
        return evaluate_sparse(self, x)


def evaluate_sparse(s: SparseSpectrum, x):
    """Value of the sparse approximation at bundle(s) ``x``.

    Uses the succinct inner-product forms: with ``W`` the support matrix,
    FT3 ``<phi, max(0, 1 - W(1-x))>``, FT4 ``<phi, max(0, 1 - W x)>`` and
    WHT ``<phi, (-1)^(W x)>``.  Row products ``W x`` are popcounts of
    ``y & x``.
    """
    scalar = np.ndim(x) == 0
    xs = np.asarray(x, dtype=np.int64).reshape(-1, 1)
    if len(s) == 0:
        out = np.zeros(xs.shape[0])
        return float(out[0]) if scalar else out
    y = s.freqs.reshape(1, -1)
    if s.kind is TransformKind.FT3:
        basis = np.maximum(0, 1 - popcount(y & (full_bundle(s.m) ^ xs)))
    elif s.kind is TransformKind.FT4:
        basis = np.maximum(0, 1 - popcount(y & xs))
    else:
        basis = 1 - 2 * (popcount(y & xs) & 1)
    out = basis @ s.coeffs
    return float(out[0]) if scalar else out


def energy_by_cardinality(spectrum) -> np.ndarray:
    """Share of squared coefficient mass at each frequency cardinality 0..m."""
    phi = np.asarray(spectrum, dtype=float)
    m = _width(phi)
    sq = phi * phi
    total = sq.sum()
    if not total > 0:
        raise ValueError("spectral energy undefined for an all-zero spectrum")
    card = popcount(np.arange(1 << m))
    return np.bincount(card, weights=sq, minlength=m + 1) / total


def inverse_column_norm(kind, y: int, m: int) -> float:
    """Euclidean norm of column ``y`` of the inverse transform matrix."""
    kind = TransformKind.parse(kind)
    if kind is TransformKind.WHT:
        return float(np.sqrt(2.0**m))
    # FT3 counts supersets of y, FT4 counts bundles disjoint from y: 2^(m-|y|) each
    return float(np.sqrt(2.0 ** (m - int(y).bit_count())))


def selection_scores(spectrum, kind) -> np.ndarray:
    """Ranking score per frequency: ``|phi(y)| * ||Finv[:, y]||``."""
    kind = TransformKind.parse(kind)
    phi = np.asarray(spectrum, dtype=float)
    m = _width(phi)
    if kind is TransformKind.WHT:
        return np.abs(phi)
    card = popcount(np.arange(1 << m))
    return np.abs(phi) * np.sqrt(2.0 ** (m - card))


def rank_frequencies(spectrum, kind) -> np.ndarray:
    """All frequencies by descending score, ties by ascending bundle."""
    score = selection_scores(spectrum, kind)
    return np.lexsort((np.arange(score.size), -score))


def select_best_k(spectrum, kind, k: int) -> SparseSpectrum:
    """Keep the ``k`` best coefficients of a dense spectrum.

    For the orthogonal WHT this is the L2-optimal k-sparse approximation;
    for FT3/FT4 it is the column-norm weighted heuristic.  Zero coefficients
    are dropped, so fewer than ``k`` may be returned.
    """
    kind = TransformKind.parse(kind)
    phi = np.asarray(spectrum, dtype=float)
    m = _width(phi)
    if k < 0 or k > phi.size:
        raise ValueError(f"k={k} outside [0, 2^m]")
    top = rank_frequencies(phi, kind)[:k]
    return SparseSpectrum(kind, m, top, phi[top]).pruned()
