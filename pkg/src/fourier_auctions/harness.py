"""Desk-scale experiments writing CSV tables and a JSON manifest.

Every experiment maps a list of seeds to per-seed rows (optionally on a
process pool), merges them in seed order and summarizes.  Apart from the
``wall_time`` columns the output bytes depend only on the spec.
"""
from __future__ import annotations

import csv
import json
import logging
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from functools import partial

import numpy as np

from .core import ReportSet
from .fourier import TransformKind, energy_by_cardinality, forward, inverse, select_best_k
from .mechanisms import HybridConfig, MlcaConfig, proportional_split, run_hybrid_variants, run_mlca, wht_allocation_rule
from .recovery import FitConfig, discover_support, energy_ratio
from .surrogate import TrainConfig, fit_mlp
from .valuemodels import InstanceSpec, generate, true_optimum

log = logging.getLogger(__name__)

EXPERIMENTS = ("spectral-energy", "reconstruction-error", "procedure2-sweep", "energy-ratio", "mechanism-compare")
KINDS = ("wht", "ft3", "ft4")
TIMING_COLUMNS = ("wall_time",)

# mechanism-compare defaults at desk scale (m=12, 40 queries per bidder)
DESK_SUPERSET = 100
DESK_FIT = {"support_size": 10}
DESK_TRAIN = {"l2": 1e-3}


@dataclass
class ExperimentSpec:
    id: str
    instance: InstanceSpec
    seeds: list[int]
    out: str = "results"
    options: dict = field(default_factory=dict)
    workers: int = 1

    def __post_init__(self):
        if self.id not in EXPERIMENTS:
            raise ValueError(f"unknown experiment {self.id!r}; expected one of {', '.join(EXPERIMENTS)}")
        if not self.seeds:
            raise ValueError("seeds must be nonempty")
        if isinstance(self.instance, dict):
            self.instance = InstanceSpec.from_dict(self.instance)

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentSpec":
        d = dict(d)
        seeds = d.pop("seeds")
        if isinstance(seeds, int):
            seeds = list(range(seeds))
        return cls(seeds=[int(s) for s in seeds], **d)

    def to_dict(self) -> dict:
        return {"id": self.id, "instance": self.instance.to_dict(), "seeds": list(self.seeds),
                "out": self.out, "options": self.options, "workers": self.workers}


def mean_ci(x) -> tuple[float, float]:
    """Mean and 95% normal-approximation half-width, ``1.96 * stderr``."""
    x = np.asarray(x, dtype=float)
    if x.size == 0:
        return float("nan"), float("nan")
    if x.size == 1:
        return float(x[0]), 0.0
    return float(x.mean()), float(1.96 * x.std(ddof=1) / math.sqrt(x.size))


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.12g}"
    return v


def write_csv(path: str, rows: list[dict], columns: list[str] | None = None) -> str:
    columns = columns or (list(rows[0]) if rows else [])
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([_fmt(r.get(c, "")) for c in columns])
    return path


def _map(fn, seeds, workers: int):
    if workers > 1 and len(seeds) > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            return list(ex.map(fn, seeds))
    return [fn(s) for s in seeds]


def _instance(spec: ExperimentSpec, seed: int):
    return generate(replace(spec.instance, seed=seed))


# --------------------------------------------------------------------------
# spectral energy

def spectral_energy_rows(functions, kinds=KINDS, groups=None) -> list[dict]:
    """Mean energy share per (kind, cardinality) over dense set functions.

    With ``groups`` (one label per function, e.g. bidder type) shares are
    averaged within each group first, then across groups.
    """
    groups = list(groups) if groups is not None else [0] * len(functions)
    rows = []
    for kind in kinds:
        per = [energy_by_cardinality(forward(v, kind)) for v in functions]
        means = [np.mean([e for e, g in zip(per, groups) if g == lab], axis=0) for lab in dict.fromkeys(groups)]
        shares = np.mean(means, axis=0)
        rows += [{"kind": kind, "cardinality": d, "energy_share": float(s)} for d, s in enumerate(shares)]
    return rows


def _energy_seed(spec, seed):
    inst = _instance(spec, seed)
    return [(t, b.dense()) for t, b in zip(inst.types, inst.bidders) if np.any(b.dense() != 0)]


def exp_spectral_energy(spec: ExperimentSpec) -> dict:
    pairs = [p for part in _map(partial(_energy_seed, spec), spec.seeds, spec.workers) for p in part]
    rows = spectral_energy_rows([v for _, v in pairs], spec.options.get("kinds", KINDS), [t for t, _ in pairs])
    return {"spectral_energy.csv": (rows, ["kind", "cardinality", "energy_share"])}


# --------------------------------------------------------------------------
# reconstruction error of best-k approximations

def rmse(a, b) -> float:
    d = np.asarray(a, dtype=float) - np.asarray(b, dtype=float)
    return float(np.sqrt(np.mean(d * d)))


def _recon_seed(spec, ks, seed):
    inst = _instance(spec, seed)
    rows = []
    for i, b in enumerate(inst.bidders):
        v = b.dense()
        for kind in spec.options.get("kinds", KINDS):
            phi = forward(v, kind)
            for k in ks:
                approx = inverse(select_best_k(phi, kind, min(k, v.size)).to_dense(), kind)
                rows.append({"seed": seed, "bidder": i, "type": inst.types[i], "model": kind, "k": k,
                             "rmse": rmse(approx, v)})
        if spec.options.get("surrogate"):
            rng = np.random.default_rng([seed, i])
            arch = spec.options.get("arch", [32, 32])
            for k in ks:
                xs = rng.choice(v.size, size=min(k, v.size), replace=False)
                net = fit_mlp(ReportSet((int(x), v[x]) for x in xs), arch, TrainConfig(seed=seed), m=inst.m)
                rows.append({"seed": seed, "bidder": i, "type": inst.types[i], "model": "nn", "k": k,
                             "rmse": rmse(net.dense(), v)})
    return rows


def exp_reconstruction_error(spec: ExperimentSpec, ks=None) -> dict:
    ks = [int(k) for k in (ks or spec.options.get("ks", [10, 50, 100]))]
    per = [r for part in _map(partial(_recon_seed, spec, ks), spec.seeds, spec.workers) for r in part]
    summary = []
    keys = list(dict.fromkeys((r["model"], r["k"], r["type"]) for r in per))
    for model, k, t in keys:
        # average over a seed's bidders of one type first, then CI across seeds
        by_seed = {}
        for r in per:
            if (r["model"], r["k"], r["type"]) == (model, k, t):
                by_seed.setdefault(r["seed"], []).append(r["rmse"])
        mu, ci = mean_ci([np.mean(v) for v in by_seed.values()])
        summary.append({"model": model, "k": k, "type": t, "rmse": mu, "ci95": ci})
    return {
        "reconstruction_error.csv": (summary, ["model", "k", "type", "rmse", "ci95"]),
        "reconstruction_error_per_seed.csv": (per, ["seed", "bidder", "type", "model", "k", "rmse"]),
    }


# --------------------------------------------------------------------------
# allocation rule sweep over k

def _p2_seed(spec, ks, seed):
    inst = _instance(spec, seed)
    opt = true_optimum(inst)
    sparsity = max(int(np.count_nonzero(np.abs(forward(b.dense(), "wht")) > 1e-9)) for b in inst.bidders)
    rows = []
    for k in ks:
        _, eff = wht_allocation_rule(inst, k, optimum=opt)
        rows.append({"seed": seed, "k": k, "efficiency": eff, "sparsity": sparsity})
    return rows


def exp_procedure2_sweep(spec: ExperimentSpec, ks=None) -> dict:
    ks = [int(k) for k in (ks or spec.options.get("ks", [10, 20, 30, 50, 70, 90, 110, 150]))]
    per = [r for part in _map(partial(_p2_seed, spec, ks), spec.seeds, spec.workers) for r in part]
    summary = []
    for k in ks:
        e = [r["efficiency"] for r in per if r["k"] == k]
        mu, ci = mean_ci(e)
        summary.append({"k": k, "median": float(np.median(e)), "mean": mu, "ci95": ci, "n": len(e)})
    return {
        "procedure2.csv": (summary, ["k", "median", "mean", "ci95", "n"]),
        "procedure2_per_seed.csv": (per, ["seed", "k", "efficiency", "sparsity"]),
    }


# --------------------------------------------------------------------------
# energy ratio of surrogate-selected frequencies

def _ratio_seed(spec, ks, seed):
    inst = _instance(spec, seed)
    n_train = int(spec.options.get("train_reports", 50))
    arch = spec.options.get("arch", [32, 32])
    rows = []
    for i, b in enumerate(inst.bidders):
        v = b.dense()
        rng = np.random.default_rng([seed, i])
        xs = rng.choice(v.size, size=min(n_train, v.size), replace=False)
        net = fit_mlp(ReportSet((int(x), v[x]) for x in xs), arch, TrainConfig(seed=seed), m=inst.m)
        for kind in spec.options.get("kinds", KINDS):
            phi = forward(v, kind)
            for k in ks:
                best = select_best_k(phi, kind, k).freqs
                if len(best) == 0:
                    continue
                sel = discover_support(net, kind, len(best)).frequencies
                if len(sel) < len(best):
                    continue
                rows.append({"seed": seed, "bidder": i, "type": inst.types[i], "kind": kind, "k": k,
                             "ratio": energy_ratio(sel, best, phi)})
    return rows


def exp_energy_ratio(spec: ExperimentSpec, ks=None) -> dict:
    ks = [int(k) for k in (ks or spec.options.get("ks", [10, 50]))]
    per = [r for part in _map(partial(_ratio_seed, spec, ks), spec.seeds, spec.workers) for r in part]
    summary = []
    for kind, k, t in dict.fromkeys((r["kind"], r["k"], r["type"]) for r in per):
        mu, ci = mean_ci([r["ratio"] for r in per if (r["kind"], r["k"], r["type"]) == (kind, k, t)])
        summary.append({"kind": kind, "k": k, "type": t, "ratio": mu, "ci95": ci})
    return {
        "energy_ratio.csv": (summary, ["kind", "k", "type", "ratio", "ci95"]),
        "energy_ratio_per_seed.csv": (per, ["seed", "bidder", "type", "kind", "k", "ratio"]),
    }


# --------------------------------------------------------------------------
# mechanism comparison

MECHANISMS = ("hybrid", "hybrid-no-fr", "hybrid-no-fr-fa", "mlca")


def mechanism_configs(options: dict, seed: int) -> tuple[HybridConfig, MlcaConfig]:
    budget = int(options.get("budget", 40))
    split = options.get("split") or proportional_split(budget, options.get("table4_split", (30, 21, 20, 29)))
    l1, l2, l3, l4 = (int(x) for x in split)
    fit = FitConfig(**{**DESK_FIT, **options.get("fit", {})})
    train = TrainConfig(**{**DESK_TRAIN, **options.get("train", {})})
    arch = options.get("arch")
    extra = {"arch": arch} if arch else {}
    hyb = HybridConfig(kind=options.get("kind", "wht"), l1=l1, l2=l2, l3=l3, l4=l4, seed=seed, fit=fit,
                       superset=int(options.get("superset", DESK_SUPERSET)), train=train,
                       solver=options.get("solver", "highs"), wdp=options.get("wdp", "auto"), **extra)
    mlca = MlcaConfig(q_init=l1, q_max=l1 + l2 + l3 + l4, seed=seed, train=train,
                      solver=hyb.solver, wdp=hyb.wdp, **extra)
    return hyb, mlca


def _mech_seed(spec, seed):
    inst = _instance(spec, seed)
    opt = true_optimum(inst)
    hyb, mlca = mechanism_configs(spec.options, seed)
    mechs = spec.options.get("mechanisms", MECHANISMS)
    rows = []
    t0 = time.perf_counter()
    ab = [a for a, name in (("none", "hybrid"), ("no-fr", "hybrid-no-fr"), ("no-fr-fa", "hybrid-no-fr-fa")) if name in mechs]
    results = dict(run_hybrid_variants(inst, hyb, ab, optimum=opt)) if ab else {}
    t_h = (time.perf_counter() - t0) / max(len(ab), 1)
    named = {("hybrid" if a == "none" else f"hybrid-{a}"): r for a, r in results.items()}
    if "mlca" in mechs:
        t0 = time.perf_counter()
        named["mlca"] = run_mlca(inst, mlca, optimum=opt)
        t_m = time.perf_counter() - t0
    for name in mechs:
        res = named[name]
        row = {"seed": seed, "mechanism": name, "efficiency": res.info["efficiency"],
               "revenue": res.info["revenue"], "queries": max(res.info["queries"]),
               "wall_time": t_m if name == "mlca" else t_h}
        for t, s in res.info["type_shares"].items():
            row[f"share_{t}"] = s
        for ph in res.trace:
            row[f"eff_{ph['phase']}"] = ph["efficiency"]
        rows.append(row)
    return rows


def exp_mechanism_compare(spec: ExperimentSpec) -> dict:
    per = [r for part in _map(partial(_mech_seed, spec), spec.seeds, spec.workers) for r in part]
    types = list(dict.fromkeys(k[6:] for r in per for k in r if k.startswith("share_")))
    phases = list(dict.fromkeys(k[4:] for r in per for k in r if k.startswith("eff_")))
    summary = []
    for name in dict.fromkeys(r["mechanism"] for r in per):
        rs = [r for r in per if r["mechanism"] == name]
        mu, ci = mean_ci([r["efficiency"] for r in rs])
        row = {"mechanism": name, "efficiency": mu, "ci95": ci, "revenue": float(np.mean([r["revenue"] for r in rs])),
               "n": len(rs), "wall_time": float(np.mean([r["wall_time"] for r in rs]))}
        for t in types:
            row[f"share_{t}"] = float(np.mean([r.get(f"share_{t}", 0.0) for r in rs]))
        summary.append(row)
    share_cols = [f"share_{t}" for t in types]
    return {
        "mechanism_compare.csv": (summary, ["mechanism", "efficiency", "ci95", "revenue", *share_cols, "n", "wall_time"]),
        "mechanism_compare_per_seed.csv": (
            per, ["seed", "mechanism", "efficiency", "revenue", "queries", *share_cols, *[f"eff_{p}" for p in phases], "wall_time"]),
    }


def paired_one_sided(a, b) -> tuple[float, float, bool]:
    """Mean of ``a - b``, its one-sided 95% lower bound, and whether the bound is above 0."""
    d = np.asarray(a, dtype=float) - np.asarray(b, dtype=float)
    mu = float(d.mean())
    se = float(d.std(ddof=1) / math.sqrt(d.size)) if d.size > 1 else 0.0
    lower = mu - 1.645 * se
    return mu, lower, lower > 0


RUNNERS = {
    "spectral-energy": exp_spectral_energy,
    "reconstruction-error": exp_reconstruction_error,
    "procedure2-sweep": exp_procedure2_sweep,
    "energy-ratio": exp_energy_ratio,
    "mechanism-compare": exp_mechanism_compare,
}


def run_experiment(spec: ExperimentSpec, write: bool = True) -> dict:
    """Run one experiment; write its CSVs and ``manifest.json`` under ``spec.out``."""
    t0 = time.perf_counter()
    tables = RUNNERS[spec.id](spec)
    if write:
        files = {}
        for name, (rows, cols) in tables.items():
            files[name] = write_csv(os.path.join(spec.out, name), rows, cols)
        manifest = {"experiment": spec.to_dict(), "files": sorted(files), "wall_time": time.perf_counter() - t0}
        with open(os.path.join(spec.out, "manifest.json"), "w") as fh:
            json.dump(manifest, fh, indent=2, sort_keys=True)
    return {name: rows for name, (rows, _) in tables.items()}


def strip_timing(path: str) -> str:
    """CSV text with timing columns removed, for determinism checks."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        return ""
    keep = [j for j, c in enumerate(rows[0]) if c not in TIMING_COLUMNS]
    return "\n".join(",".join(r[j] for j in keep) for r in rows) + "\n"
