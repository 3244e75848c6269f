"""Seeded synthetic combinatorial-auction instances.

Three families:

``global-synergy``
    Item values plus pairwise synergies over each bidder's interest region,
    ``v(x) = sum_j b_j + s * sum_{j<k} (b_j + b_k)`` over ``x & region``.
    Degree 2 in every transform, so the WHT support of a bidder with a region
    of ``r`` items has at most ``1 + r + r(r-1)/2`` frequencies.
``local-synergy``
    Items on a grid; every connected cluster ``C`` of won in-region items is
    worth ``sum_{j in C} b_j * (1 + f(|C|))`` with a sigmoid bonus ``f``,
    ``f(1) = 0``.  Not low-degree.
``sparse-synthetic``
    Exactly ``k``-sparse in a chosen transform with frequencies of degree
    ``<= d``.  The ground-truth spectrum is stored with the bidder.
"""
from __future__ import annotations

import itertools
import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .core import MAX_ITEMS, CapacityError, InvalidInstanceError, TableValuation, popcount
from .fourier import SparseSpectrum, TransformKind, forward, inverse
from .milp import EXHAUSTIVE_LIMIT, build_ft_wdp, exhaustive_wdp, solve_wdp, subset_dp_wdp

log = logging.getLogger(__name__)

FAMILIES = ("global-synergy", "local-synergy", "sparse-synthetic")
BIDDER_TYPES = ("national", "regional", "local")

GLOBAL_DEFAULTS = {"synergy": 0.2, "arc_frac": 0.6, "national_value": 10.0, "regional_value": 20.0}
LOCAL_DEFAULTS = {"radius": 2, "national_value": (3.0, 9.0), "regional_value": (3.0, 20.0), "bonus": 1.0}


@dataclass
class SparseSyntheticParams:
    kind: TransformKind = TransformKind.WHT
    k: int = 10
    d: int = 3
    scale: float = 1.0

    def __post_init__(self):
        self.kind = TransformKind.parse(self.kind)
        if self.k < 1 or self.d < 0 or not self.scale > 0:
            raise InvalidInstanceError(f"invalid sparse-synthetic params {self}")

    def check(self, m: int) -> None:
        cap = sum(math.comb(m, c) for c in range(min(self.d, m) + 1))
        if self.kind is TransformKind.FT3 and self.k > 1:
            cap -= 1  # FT3 draws k nonempty frequencies
        if self.k > cap:
            raise InvalidInstanceError(f"k={self.k} exceeds the {cap} frequencies of degree <= {self.d}")


@dataclass
class InstanceSpec:
    m: int
    roster: list = field(default_factory=lambda: [("national", 1), ("regional", 3)])
    seed: int = 0
    family: str = "global-synergy"
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        self.roster = [(str(t), int(c)) for t, c in self.roster]
        if self.family not in FAMILIES:
            raise InvalidInstanceError(f"unknown family {self.family!r}")
        if not 1 <= self.m <= MAX_ITEMS:
            raise InvalidInstanceError(f"m={self.m} outside [1, {MAX_ITEMS}]")
        for t, c in self.roster:
            if t not in BIDDER_TYPES or c < 0:
                raise InvalidInstanceError(f"bad roster entry ({t}, {c})")
        if self.n < 1:
            raise InvalidInstanceError("roster has no bidders")

    @property
    def n(self) -> int:
        return sum(c for _, c in self.roster)

    @property
    def types(self) -> list[str]:
        return [t for t, c in self.roster for _ in range(c)]

    def to_dict(self) -> dict:
        d = asdict(self)
        d["roster"] = [list(r) for r in self.roster]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "InstanceSpec":
        return cls(**d)


@dataclass
class Instance:
    spec: InstanceSpec
    bidders: list  # TableValuation per bidder
    types: list[str]
    regions: list[int]  # interest region bitmask per bidder
    meta: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return len(self.bidders)

    @property
    def m(self) -> int:
        return self.spec.m


def _bidder_rngs(spec: InstanceSpec) -> list[np.random.Generator]:
    return [np.random.default_rng(s) for s in np.random.SeedSequence(spec.seed).spawn(spec.n)]


def _bits(m: int) -> np.ndarray:
    return (np.arange(1 << m, dtype=np.int64)[:, None] >> np.arange(m)) & 1


def _clip(v: np.ndarray) -> np.ndarray:
    # roundoff from exact integer constructions can leave -1e-16
    v = np.where(np.abs(v) < 1e-12, 0.0, v)
    if v.min() < 0:
        raise InvalidInstanceError(f"negative value {v.min()} generated")
    return v


def generate_global_synergy(spec: InstanceSpec) -> Instance:
    p = {**GLOBAL_DEFAULTS, **spec.params}
    m = spec.m
    bits = _bits(m).astype(float)
    arc = max(1, min(m, int(round(p["arc_frac"] * m))))
    bidders, regions = [], []
    for t, rng in zip(spec.types, _bidder_rngs(spec)):
        if t == "national":
            region = (1 << m) - 1
            b = rng.uniform(0.0, p["national_value"], size=m)
        else:
            start = int(rng.integers(m))
            region = sum(1 << ((start + s) % m) for s in range(arc))
            b = rng.uniform(0.0, p["regional_value"], size=m)
        b = b * ((region >> np.arange(m)) & 1)
        xb = bits @ b
        size = bits @ ((region >> np.arange(m)) & 1)
        # sum_{j<k in x&R} (b_j + b_k) = (|x&R| - 1) * sum_{j in x&R} b_j
        v = xb + p["synergy"] * np.maximum(size - 1, 0) * xb
        bidders.append(TableValuation(_clip(v)))
        regions.append(region)
    return Instance(spec, bidders, spec.types, regions, {"arc": arc, **{k: p[k] for k in GLOBAL_DEFAULTS}})


def grid_shape(m: int) -> tuple[int, int]:
    rows = max(d for d in range(1, int(math.isqrt(m)) + 1) if m % d == 0)
    return rows, m // rows


def _neighbours(comp: np.ndarray, rows: int, cols: int) -> np.ndarray:
    # item j sits at (j // cols, j % cols)
    col = np.arange(rows * cols) % cols
    not_first = sum(1 << j for j in range(rows * cols) if col[j] != 0)
    not_last = sum(1 << j for j in range(rows * cols) if col[j] != cols - 1)
    full = (1 << (rows * cols)) - 1
    return (((comp & not_last) << 1) | ((comp & not_first) >> 1) | (comp << cols) | (comp >> cols)) & full


def cluster_values(x: np.ndarray, base: np.ndarray, rows: int, cols: int, bonus) -> np.ndarray:
    """``sum over connected clusters C of x of sum_{j in C} base_j * (1 + bonus(|C|))``."""
    m = rows * cols
    x = np.asarray(x, dtype=np.int64)
    out = np.zeros(x.shape)
    for j in range(m):
        comp = x & (1 << j)
        while True:
            grown = comp | (_neighbours(comp, rows, cols) & x)
            if np.array_equal(grown, comp):
                break
            comp = grown
        # count each cluster once, at its lowest item
        lead = (comp != 0) & ((comp & ((1 << j) - 1)) == 0)
        weight = ((comp[:, None] >> np.arange(m)) & 1) @ base
        out += np.where(lead, weight * (1.0 + bonus(popcount(comp))), 0.0)
    return out


def generate_local_synergy(spec: InstanceSpec) -> Instance:
    p = {**LOCAL_DEFAULTS, **spec.params}
    m = spec.m
    rows, cols = grid_shape(m)
    all_x = np.arange(1 << m, dtype=np.int64)
    bidders, regions = [], []
    for t, rng in zip(spec.types, _bidder_rngs(spec)):
        if t == "national":
            region = (1 << m) - 1
            lo, hi = p["national_value"]
        else:
            c = int(rng.integers(m))
            r0, c0 = divmod(c, cols)
            region = sum(1 << j for j in range(m) if abs(j // cols - r0) + abs(j % cols - c0) <= p["radius"])
            lo, hi = p["regional_value"]
        base = rng.uniform(lo, hi, size=m) * ((region >> np.arange(m)) & 1)
        mid = popcount(region) / 2.0

        def bonus(s, mid=mid):
            sig = lambda z: 1.0 / (1.0 + np.exp(mid - z))
            return p["bonus"] * (sig(s) - sig(1.0))

        v = cluster_values(all_x & region, base, rows, cols, bonus)
        bidders.append(TableValuation(_clip(v)))
        regions.append(region)
    return Instance(spec, bidders, spec.types, regions, {"grid": [rows, cols], "radius": p["radius"]})


def _draw_frequencies(rng, m: int, count: int, d: int) -> np.ndarray:
    """``count`` distinct nonempty frequencies of degree ``<= d``, uniformly."""
    pool_size = sum(math.comb(m, c) for c in range(1, min(d, m) + 1))
    if count > pool_size:
        raise InvalidInstanceError("not enough low-degree frequencies")
    if pool_size <= 200_000:
        card = popcount(np.arange(1 << m))
        pool = np.flatnonzero((card >= 1) & (card <= d))
        return np.sort(rng.choice(pool, size=count, replace=False))
    out: set[int] = set()
    while len(out) < count:
        c = int(rng.integers(1, d + 1))
        out.add(int(sum(1 << int(j) for j in rng.choice(m, size=c, replace=False))))
    return np.array(sorted(out), dtype=np.int64)


def sparse_synthetic_spectrum(rng, m: int, params: SparseSyntheticParams) -> SparseSpectrum:
    """Random exactly-``k``-sparse spectrum whose set function is ``>= 0`` with ``v(0) = 0``.

    WHT/FT4: ``k - 1`` negative coefficients plus ``phi(0) = sum |c|``.
    FT3: ``k`` positive coefficients on nonempty frequencies.
    ``k = 1`` gives the positive constant function (frequency 0 alone).
    """
    params.check(m)
    kind, k = params.kind, params.k
    if k == 1:
        return SparseSpectrum(kind, m, [0], [params.scale * rng.uniform(0.5, 1.5)])
    n_rest = k if kind is TransformKind.FT3 else k - 1
    freqs = _draw_frequencies(rng, m, n_rest, params.d)
    mags = params.scale * rng.uniform(0.5, 1.5, size=n_rest)
    if kind is TransformKind.FT3:
        return SparseSpectrum(kind, m, freqs, mags)
    return SparseSpectrum(kind, m, np.r_[0, freqs], np.r_[mags.sum(), -mags])


def generate_sparse_synthetic(spec: InstanceSpec, params: SparseSyntheticParams | None = None) -> Instance:
    if params is None:
        params = SparseSyntheticParams(**spec.params)
    m = spec.m
    bidders = []
    for rng in _bidder_rngs(spec):
        s = sparse_synthetic_spectrum(rng, m, params)
        v = _clip(inverse(s.to_dense(), s.kind))
        bidders.append(TableValuation(v, spectra={s.kind.value: s}))
    full = (1 << m) - 1
    return Instance(spec, bidders, spec.types, [full] * spec.n, {"sparse": {**asdict(params), "kind": params.kind.value}})


def generate(spec: InstanceSpec) -> Instance:
    if spec.family == "global-synergy":
        return generate_global_synergy(spec)
    if spec.family == "local-synergy":
        return generate_local_synergy(spec)
    return generate_sparse_synthetic(spec)


def true_spectrum(bidder, kind) -> SparseSpectrum:
    """Exact sparse spectrum of a bidder (stored one if known, else full transform)."""
    kind = TransformKind.parse(kind)
    stored = getattr(bidder, "spectra", {}).get(kind.value)
    if stored is not None:
        return stored
    return SparseSpectrum.from_dense(forward(bidder.dense(), kind), kind, tol=1e-9)


def true_optimum(instance: Instance, method: str = "auto"):
    """Efficient allocation and its welfare.

    ``auto`` picks exhaustive enumeration when ``(n+1)^m <= 1e7``, the
    subset DP when ``m <= 15``, otherwise an FT-WDP on the exact WHT spectra.
    """
    n, m = instance.n, instance.m
    if method == "auto":
        if (n + 1) ** m <= EXHAUSTIVE_LIMIT:
            method = "exhaustive"
        elif m <= 15:
            method = "dp"
        else:
            method = "ft"
    if method == "exhaustive":
        return exhaustive_wdp(instance.bidders, m)
    if method == "dp":
        return subset_dp_wdp(instance.bidders, m)
    if method == "ft":
        if m > 22:
            raise CapacityError(f"exact optimum for m={m} not supported")
        kinds = [next(iter(b.spectra)) if b.spectra else "wht" for b in instance.bidders]
        kind = kinds[0] if len(set(kinds)) == 1 else "wht"
        specs = [true_spectrum(b, kind) for b in instance.bidders]
        alloc, _, _ = solve_wdp(build_ft_wdp(specs), backend="highs")
        return alloc, float(sum(b.value(x) for b, x in zip(instance.bidders, alloc)))
    raise ValueError(f"unknown method {method!r}")


def type_shares(instance: Instance, alloc) -> dict[str, float]:
    """True welfare won by each bidder type as a share of the allocation's welfare."""
    vals = [b.value(x) for b, x in zip(instance.bidders, alloc)]
    total = sum(vals)
    out = {t: 0.0 for t in dict.fromkeys(instance.types)}
    for t, v in zip(instance.types, vals):
        out[t] += v / total if total > 0 else 0.0
    return out
