"""Bundles, allocations, reports and welfare bookkeeping.

Bundles are plain Python ints used as bitmasks: item ``j`` (0-based) is in
bundle ``b`` iff bit ``j`` is set.  The text form puts item 0 leftmost, so
``"100"`` is the bundle holding only the first item.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Iterator, Mapping, Sequence

import numpy as np

MAX_ITEMS = 29


class CapacityError(ValueError):
    """Instance exceeds what an exact routine can handle."""


class InvalidInstanceError(ValueError):
    pass


def check_width(m: int) -> None:
    if not 0 <= m <= MAX_ITEMS:
        raise CapacityError(f"m={m} outside supported range [0, {MAX_ITEMS}]")


def cardinality(b: int) -> int:
    return int(b).bit_count()


def popcount(a) -> np.ndarray:
    """Vectorized population count for integer arrays."""
    return np.bitwise_count(np.asarray(a, dtype=np.int64)).astype(np.int64)


def full_bundle(m: int) -> int:
    return (1 << m) - 1


def complement(b: int, m: int) -> int:
    return full_bundle(m) ^ b


def items(b: int) -> list[int]:
    out = []
    j = 0
    while b:
        if b & 1:
            out.append(j)
        b >>= 1
        j += 1
    return out


def from_items(idx: Iterable[int]) -> int:
    b = 0
    for j in idx:
        b |= 1 << int(j)
    return b


def bundle_to_str(b: int, m: int) -> str:
    return "".join("1" if (b >> j) & 1 else "0" for j in range(m))


def bundle_from_str(s: str) -> int:
    s = s.strip()
    if not s or set(s) - {"0", "1"}:
        raise ValueError(f"not a binary bundle string: {s!r}")
    return sum(1 << j for j, c in enumerate(s) if c == "1")


def to_indicator(b: int, m: int) -> np.ndarray:
    return (int(b) >> np.arange(m)) & 1


def indicator_matrix(bundles: Sequence[int], m: int) -> np.ndarray:
    """Rows are 0/1 indicator vectors of ``bundles``."""
    arr = np.asarray(list(bundles), dtype=np.int64).reshape(-1, 1)
    return ((arr >> np.arange(m)) & 1).astype(np.int64)


@dataclass(frozen=True)
class Allocation:
    """One bundle per bidder, pairwise disjoint."""

    bundles: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "bundles", tuple(int(b) for b in self.bundles))
        seen = 0
        for b in self.bundles:
            if b < 0:
                raise ValueError("negative bundle")
            if seen & b:
                raise InvalidInstanceError(f"allocation {self.bundles} is not item-disjoint")
            seen |= b

    @classmethod
    def empty(cls, n: int) -> "Allocation":
        return cls((0,) * n)

    def __len__(self) -> int:
        return len(self.bundles)

    def __getitem__(self, i: int) -> int:
        return self.bundles[i]

    def __iter__(self) -> Iterator[int]:
        return iter(self.bundles)

    def to_strs(self, m: int) -> list[str]:
        return [bundle_to_str(b, m) for b in self.bundles]


class ReportSet(Mapping[int, float]):
    """Reported bundle-value pairs of one bidder.

    Keys are unique and values nonnegative.  Reports can be appended (an
    auction grows them round by round) but never overwritten.
    """

    def __init__(self, entries: Mapping[int, float] | Iterable[tuple[int, float]] = ()):
        self._d: dict[int, float] = {}
        pairs = entries.items() if isinstance(entries, Mapping) else entries
        for b, v in pairs:
            self.add(b, v)

    def add(self, b: int, v: float) -> None:
        b = int(b)
        v = float(v)
        if b in self._d:
            raise KeyError(f"bundle {b} already reported")
        if not v >= 0.0:
            raise ValueError(f"reported value must be nonnegative, got {v}")
        self._d[b] = v

    def __getitem__(self, b: int) -> float:
        return self._d[b]

    def __iter__(self):
        return iter(self._d)

    def __len__(self) -> int:
        return len(self._d)

    def __repr__(self) -> str:
        return f"ReportSet({self._d!r})"

    def copy(self) -> "ReportSet":
        return ReportSet(self._d)

    def bundles(self) -> np.ndarray:
        return np.fromiter(self._d.keys(), dtype=np.int64, count=len(self._d))

    def values_array(self) -> np.ndarray:
        return np.fromiter(self._d.values(), dtype=float, count=len(self._d))


class ValuationOracle:
    """Value-query interface of one bidder.

    Subclasses implement :meth:`values` for an integer array of bundles.
    ``spectra`` optionally holds exact ground-truth spectra keyed by transform
    name, for synthetic models that know them.
    """

    m: int
    spectra: dict

    def values(self, bundles: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def value(self, b: int) -> float:
        return float(self.values(np.array([b], dtype=np.int64))[0])

    def dense(self) -> np.ndarray:
        return self.values(np.arange(1 << self.m, dtype=np.int64))


class TableValuation(ValuationOracle):
    """Valuation backed by a full value table of length ``2**m``."""

    def __init__(self, table: np.ndarray, spectra: dict | None = None):
        table = np.array(table, dtype=float)
        m = int(table.size).bit_length() - 1
        if table.ndim != 1 or table.size != 1 << m:
            raise ValueError("value table length must be a power of two")
        check_width(m)
        self.m = m
        self.table = table
        self.table.setflags(write=False)
        self.spectra = dict(spectra or {})

    def values(self, bundles: np.ndarray) -> np.ndarray:
        return self.table[np.asarray(bundles, dtype=np.int64)]

    def value(self, b: int) -> float:
        return float(self.table[b])

    def dense(self) -> np.ndarray:
        return self.table


@dataclass
class AuctionResult:
    allocation: Allocation
    payments: list[float]
    reports: list[ReportSet]
    trace: list[tuple[str, float]] = field(default_factory=list)
    info: dict = field(default_factory=dict)


def efficiency(alloc: Allocation, truth: Sequence, optimum: float) -> float:
    """True welfare of ``alloc`` relative to the optimal welfare."""
    if not optimum > 0:
        raise InvalidInstanceError(f"optimal welfare must be positive, got {optimum}")
    welfare = sum(float(v.value(b)) for v, b in zip(truth, alloc.bundles))
    return welfare / optimum


def reported_welfare(alloc: Allocation, reports: Sequence[Mapping[int, float]]) -> float:
    # unreported bundles contribute nothing
    return float(sum(r[b] for r, b in zip(reports, alloc.bundles) if b in r))
