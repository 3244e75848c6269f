"""Iterative auctions: MLCA, Hybrid ICA (with ablations) and VCG payments.

Bidders are truthful: every value query is answered by the bidder's true
valuation.  The empty bundle is never queried (its value is 0 by
convention), neither at random nor by the query modules.
"""
from __future__ import annotations

import copy
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .core import Allocation, AuctionResult, ReportSet, efficiency, reported_welfare
from .fourier import SparseSpectrum, TransformKind, forward, select_best_k
from .milp import DP_LIMIT, build_ft_wdp, build_nn_wdp, build_reported_wdp, dense_tables_wdp, solve_wdp
from .recovery import (
    DEFAULT_SUPERSET,
    FitConfig,
    SupportSuperset,
    discover_support,
    fit_sparse,
    fit_wht_lasso,
    reconstruction_queries,
)
from .surrogate import TrainConfig, fit_mlp
from .valuemodels import Instance, true_optimum, type_shares

log = logging.getLogger(__name__)

DENSE_WDP_LIMIT = 14
DEFAULT_ARCH = {"national": [10, 10], "regional": [32, 32], "local": [16, 16]}
TABLE4_SPLITS = {"gsvm": (30, 21, 20, 29), "lsvm": (30, 30, 10, 30), "mrvm": (30, 220, 0, 250)}
ABLATIONS = ("none", "no-fr", "no-fr-fa")


def proportional_split(total: int, split=TABLE4_SPLITS["gsvm"]) -> tuple[int, ...]:
    """Scale a query split to ``total`` by largest-remainder rounding."""
    raw = np.asarray(split, dtype=float) * total / float(sum(split))
    out = np.floor(raw).astype(int)
    short = total - int(out.sum())
    # ties go to the later phase
    order = sorted(range(len(raw)), key=lambda t: (-(raw[t] - out[t]), -t))
    for t in order[:short]:
        out[t] += 1
    return tuple(int(v) for v in out)


@dataclass
class MlcaConfig:
    q_init: int = 12
    q_max: int = 20
    seed: int = 0
    arch: dict = field(default_factory=lambda: dict(DEFAULT_ARCH))
    train: TrainConfig = field(default_factory=TrainConfig)
    solver: str = "highs"
    time_limit: float | None = 60.0
    wdp: str = "auto"

    def __post_init__(self):
        if not 1 <= self.q_init <= self.q_max:
            raise ValueError(f"need 1 <= q_init <= q_max, got {self.q_init}, {self.q_max}")


@dataclass
class HybridConfig:
    kind: TransformKind = TransformKind.WHT
    l1: int = 12
    l2: int = 8
    l3: int = 8
    l4: int = 12
    seed: int = 0
    fit: FitConfig = field(default_factory=FitConfig)
    superset: int = DEFAULT_SUPERSET
    arch: dict = field(default_factory=lambda: dict(DEFAULT_ARCH))
    train: TrainConfig = field(default_factory=TrainConfig)
    solver: str = "highs"
    time_limit: float | None = 60.0
    wdp: str = "auto"
    ablation: str = "none"

    def __post_init__(self):
        self.kind = TransformKind.parse(self.kind)
        if min(self.l1, self.l2, self.l3, self.l4) < 0 or self.l1 < 1:
            raise ValueError("query counts must be >= 0 with l1 >= 1")
        if self.ablation not in ABLATIONS:
            raise ValueError(f"unknown ablation {self.ablation!r}")

    @property
    def budget(self) -> int:
        return self.l1 + self.l2 + self.l3 + self.l4

    def mlca(self) -> MlcaConfig:
        return MlcaConfig(self.l1, self.l1 + self.l2, self.seed, self.arch, self.train, self.solver, self.time_limit, self.wdp)


def vcg_payments(reports, solver: str = "highs", return_allocation: bool = False):
    """VCG payments from reports: welfare the others lose because bidder ``i`` is present."""
    n = len(reports)
    alloc, _, _ = solve_wdp(build_reported_wdp(reports), backend=solver)
    pay = []
    for i in range(n):
        without = [r if j != i else ReportSet() for j, r in enumerate(reports)]
        a_i, _, _ = solve_wdp(build_reported_wdp(without), backend=solver)
        others = [j for j in range(n) if j != i]
        p = sum(_rv(reports[j], a_i[j]) for j in others) - sum(_rv(reports[j], alloc[j]) for j in others)
        if p < 0:
            if p < -1e-9:
                log.warning("negative VCG payment %g for bidder %d", p, i)
            else:
                p = 0.0
        pay.append(float(p))
    return (pay, alloc) if return_allocation else pay


def _rv(r, b: int) -> float:
    return float(r.get(b, 0.0))


class Auction:
    """Shared state of one auction run: reports, caches, RNG streams and trace."""

    def __init__(self, instance: Instance, seed: int, arch: dict, train: TrainConfig,
                 solver: str = "highs", time_limit: float | None = 60.0, optimum=None, wdp: str = "auto"):
        self.instance = instance
        self.n, self.m = instance.n, instance.m
        self.seed = seed
        self.arch = arch
        self.train = train
        self.solver = solver
        self.time_limit = time_limit
        if wdp == "auto":
            wdp = "dense" if self.m <= DENSE_WDP_LIMIT else "milp"
        if wdp not in ("dense", "milp"):
            raise ValueError(f"unknown WDP method {wdp!r}")
        self.wdp = wdp
        ss = np.random.SeedSequence(seed)
        init_ss, extra_ss = ss.spawn(2)
        self.init_rngs = [np.random.default_rng(s) for s in init_ss.spawn(self.n)]
        # separate streams for ablation queries, so sharing a prefix is exact
        self.extra_rngs = [np.random.default_rng(s) for s in extra_ss.spawn(self.n)]
        self.reports = [ReportSet() for _ in range(self.n)]
        self.trace: list[dict] = []
        self.shortfall = [0] * self.n
        self.nn_solves = 0
        self._nets: dict = {}
        self.optimum = optimum if optimum is not None else true_optimum(instance)

    def _solve(self, model):
        limits = {"time_limit": self.time_limit} if self.time_limit else {}
        return solve_wdp(model, backend=self.solver, **limits)[:2]

    def model_wdp(self, models, exclusions=None, builder=None) -> Allocation:
        """Allocation maximizing summed model values (networks or sparse spectra).

        ``dense`` evaluates every model on all bundles and runs the exact
        subset DP; ``milp`` builds and solves the MILP encoding.
        """
        if self.wdp == "dense":
            return dense_tables_wdp(models, self.m, exclusions)[0]
        return self._solve(builder(models, exclusions))[0]

    def ask(self, i: int, b: int) -> float:
        v = self.instance.bidders[i].value(b)
        self.reports[i].add(b, max(v, 0.0))
        return v

    def random_queries(self, i: int, count: int, rng) -> list[int]:
        # uniform without replacement over nonempty unreported bundles
        pool = np.setdiff1d(np.arange(1, 1 << self.m), self.reports[i].bundles())
        if count > pool.size:
            self.shortfall[i] += count - pool.size
            count = pool.size
        return [int(b) for b in rng.choice(pool, size=count, replace=False)]

    def initial(self, q_init: int) -> None:
        for i in range(self.n):
            for b in self.random_queries(i, q_init, self.init_rngs[i]):
                self.ask(i, b)

    def net(self, i: int):
        key = (i, len(self.reports[i]))
        if key not in self._nets:
            state = np.random.SeedSequence([self.seed, i, len(self.reports[i])]).generate_state(1)[0]
            cfg = _with_seed(self.train, int(state))
            arch = self.arch.get(self.instance.types[i], DEFAULT_ARCH["local"])
            # drop networks trained on report sets that have since grown
            self._nets = {k: v for k, v in self._nets.items() if k[1] == len(self.reports[k[0]])}
            self._nets[key] = fit_mlp(self.reports[i], arch, cfg, m=self.m)
        return self._nets[key]

    def next_queries(self, active: list[int], pending=None) -> dict[int, int]:
        """NN query module: surrogate-optimal bundles for ``active`` bidders, all new.

        ``pending[i]`` holds bundles already chosen for bidder ``i`` earlier in
        the same round; they count as queried.
        """
        pending = pending or [set() for _ in range(self.n)]
        nets = [self.net(i) if i in active else None for i in range(self.n)]
        alloc = self.model_wdp(nets, None, build_nn_wdp)
        self.nn_solves += 1
        out = {}
        for i in active:
            taken = set(self.reports[i].keys()) | pending[i] | {0}
            q = alloc[i]
            if q in taken:
                if len(taken) >= 1 << self.m:
                    log.warning("bidder %d has reported every bundle; dropped from the profile", i)
                    continue
                excl = [sorted(taken) if j == i else None for j in range(self.n)]
                alloc_i = self.model_wdp(nets, excl, build_nn_wdp)
                self.nn_solves += 1
                q = alloc_i[i]
            out[i] = q
        return out

    def mlca_rounds(self, q_init: int, q_max: int) -> None:
        rounds = (q_max - q_init) // self.n
        everyone = list(range(self.n))
        for _ in range(rounds):
            pending = [set() for _ in range(self.n)]
            marginals = [[j for j in everyone if j != i] for i in everyone] if self.n > 1 else []
            for economy in [everyone] + marginals:
                for i, q in self.next_queries(economy, pending).items():
                    pending[i].add(q)
            for i in everyone:
                for q in sorted(pending[i]):
                    self.ask(i, q)
            # a bidder may get fewer than n new bundles if economies agreed on one
            for i in everyone:
                self.shortfall[i] += self.n - len(pending[i])

    def record(self, phase: str) -> dict:
        alloc, _ = self._solve(build_reported_wdp(self.reports))
        row = {
            "phase": phase,
            "reported_welfare": reported_welfare(alloc, self.reports),
            "efficiency": efficiency(alloc, self.instance.bidders, self.optimum[1]),
            "queries": [len(r) for r in self.reports],
        }
        self.trace.append(row)
        return row

    def finish(self, **info) -> AuctionResult:
        pay, alloc = vcg_payments(self.reports, self.solver, return_allocation=True)
        opt = self.optimum[1]
        eff = efficiency(alloc, self.instance.bidders, opt)
        info = {
            "efficiency": eff,
            "revenue": sum(pay) / opt,
            "optimal_welfare": opt,
            "queries": [len(r) for r in self.reports],
            "shortfall": list(self.shortfall),
            "nn_solves": self.nn_solves,
            "type_shares": type_shares(self.instance, alloc),
            **info,
        }
        return AuctionResult(alloc, pay, self.reports, self.trace, info)


def _with_seed(cfg: TrainConfig, seed: int) -> TrainConfig:
    return TrainConfig(cfg.epochs, cfg.batch_size, cfg.lr, cfg.l2, seed)


def run_mlca(instance: Instance, cfg: MlcaConfig, optimum=None) -> AuctionResult:
    auc = Auction(instance, cfg.seed, cfg.arch, cfg.train, cfg.solver, cfg.time_limit, optimum, cfg.wdp)
    auc.initial(cfg.q_init)
    auc.record("init")
    auc.mlca_rounds(cfg.q_init, cfg.q_max)
    auc.record("mlca")
    return auc.finish(mechanism="mlca")


class HybridRun:
    """Hybrid ICA split into phases so ablations can share the MLCA prefix."""

    def __init__(self, instance: Instance, cfg: HybridConfig, optimum=None):
        self.cfg = cfg
        self.auc = Auction(instance, cfg.seed, cfg.arch, cfg.train, cfg.solver, cfg.time_limit, optimum, cfg.wdp)
        self.models: list[SparseSpectrum | None] = [None] * instance.n
        self.supersets: list[SupportSuperset | None] = [None] * instance.n

    def mlca_phase(self) -> None:
        c = self.cfg
        self.auc.initial(c.l1)
        self.auc.record("init")
        self.auc.mlca_rounds(c.l1, c.l1 + c.l2)
        self.auc.record("mlca")

    def branch(self, ablation: str) -> "HybridRun":
        other = copy.deepcopy(self)
        other.cfg = copy.copy(self.cfg)
        other.cfg.ablation = ablation
        return other

    def _superset(self, i: int) -> SupportSuperset:
        c, auc = self.cfg, self.auc
        if c.kind is TransformKind.WHT:
            size = c.superset
        else:
            # one coefficient per equation once the reconstruction reports are in
            size = min(c.superset, len(auc.reports[i]) + c.l3)
        return discover_support(auc.net(i), c.kind, size)

    def _fit(self, i: int) -> None:
        s1 = self.supersets[i]
        self.models[i] = fit_sparse(self.auc.reports[i], s1, self.cfg.fit)

    def fr_phase(self) -> None:
        c, auc = self.cfg, self.auc
        if c.l3 == 0 and c.l4 == 0:
            return
        for i in range(auc.n):
            if c.ablation in ("no-fr", "no-fr-fa"):
                qs = auc.random_queries(i, c.l3, auc.extra_rngs[i])
            else:
                self.supersets[i] = self._superset(i)
                qs = reconstruction_queries(self.supersets[i], c.l3, exclude=set(auc.reports[i]) | {0})
                auc.shortfall[i] += c.l3 - len(qs)
            for q in qs:
                auc.ask(i, q)
            if c.ablation != "no-fr-fa":
                if self.supersets[i] is None:
                    self.supersets[i] = self._superset(i)
                self._fit(i)
        auc.record("fr")

    def fa_phase(self) -> None:
        c, auc = self.cfg, self.auc
        if c.l4 == 0:
            return
        n = auc.n
        for _ in range(c.l4):
            if c.ablation == "no-fr-fa":
                for i in range(n):
                    for q in auc.random_queries(i, 1, auc.extra_rngs[i]):
                        auc.ask(i, q)
                continue
            q = auc.model_wdp(self.models, None, build_ft_wdp)
            for i in range(n):
                taken = set(auc.reports[i].keys()) | {0}
                qi = q[i]
                if qi in taken:
                    if len(taken) >= 1 << auc.m:
                        auc.shortfall[i] += 1
                        continue
                    excl = [sorted(taken) if j == i else None for j in range(n)]
                    try:
                        alt = auc.model_wdp(self.models, excl, build_ft_wdp)
                    except (RuntimeError, ValueError):
                        log.warning("restricted FT-WDP unsolved for bidder %d; skipped", i)
                        auc.shortfall[i] += 1
                        continue
                    qi = alt[i]
                auc.ask(i, qi)
                self._fit(i)
        auc.record("fa")

    def finish(self) -> AuctionResult:
        c = self.cfg
        name = "hybrid" if c.ablation == "none" else f"hybrid-{c.ablation}"
        return self.auc.finish(mechanism=name, split=[c.l1, c.l2, c.l3, c.l4], kind=c.kind.value)


def run_hybrid_ica(instance: Instance, cfg: HybridConfig, optimum=None) -> AuctionResult:
    run = HybridRun(instance, cfg, optimum)
    run.mlca_phase()
    run.fr_phase()
    run.fa_phase()
    return run.finish()


def run_hybrid_variants(instance: Instance, cfg: HybridConfig, ablations=ABLATIONS, optimum=None) -> dict:
    """Hybrid ICA and its ablations on one instance, sharing the MLCA phase."""
    base = HybridRun(instance, cfg, optimum)
    base.mlca_phase()
    out = {}
    for ab in ablations:
        run = base.branch(ab)
        run.fr_phase()
        run.fa_phase()
        out[ab] = run.finish()
    return out


def wht_allocation_rule(instance: Instance, k: int, query_budget: int | None = None, optimum=None,
                        solver: str = "highs", seed: int = 0, degree: int = 2):
    """Allocate by solving the WDP on k-sparse WHT approximations of the bidders.

    With ``query_budget=None`` each approximation keeps the ``k`` largest
    coefficients of the exact transform.  Otherwise it is fitted by the
    L1 path to ``query_budget`` random value queries, over all frequencies
    of degree ``<= degree``.
    """
    m = instance.m
    specs = []
    for i, b in enumerate(instance.bidders):
        if query_budget is None:
            specs.append(select_best_k(forward(b.dense(), "wht"), "wht", min(k, 1 << m)))
        else:
            rng = np.random.default_rng([seed, i])
            xs = rng.choice(1 << m, size=min(query_budget, 1 << m), replace=False)
            reports = ReportSet((int(x), b.value(int(x))) for x in xs)
            card = np.bitwise_count(np.arange(1 << m))
            s1 = SupportSuperset("wht", m, np.flatnonzero(card <= degree))
            specs.append(fit_wht_lasso(reports, s1, FitConfig(support_size=k)))
    if all(len(s) == 0 for s in specs):
        alloc = Allocation.empty(instance.n)
    else:
        alloc, _, _ = solve_wdp(build_ft_wdp(specs), backend=solver)
    opt = optimum if optimum is not None else true_optimum(instance)
    return alloc, efficiency(alloc, instance.bidders, opt[1])
