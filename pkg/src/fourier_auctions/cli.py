"""Command line entry point: ``fourier-auctions <subcommand> ...``.

Exit status is 0 on success, 2 for a bad config or input, 3 when the
request exceeds what the library can hold in memory.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
import time
from dataclasses import replace

import numpy as np

from . import __version__
from .core import CapacityError, MAX_ITEMS, ReportSet, bundle_from_str, bundle_to_str
from .fourier import SparseSpectrum, TransformKind, forward, inverse
from .harness import ExperimentSpec, mechanism_configs, run_experiment, write_csv
from .mechanisms import run_hybrid_ica, run_mlca
from .milp import build_ft_wdp, solve_wdp
from .recovery import FitConfig, SupportSuperset, fit_sparse
from .valuemodels import InstanceSpec, generate, true_optimum

log = logging.getLogger("fourier_auctions")

EXIT_OK, EXIT_CONFIG, EXIT_CAPACITY = 0, 2, 3
DENSE_EXPORT_LIMIT = 16


class ConfigError(ValueError):
    pass


# --------------------------------------------------------------------------
# file formats

def read_table(path: str) -> tuple[list[int], list[float], int]:
    """Rows ``bundle-string,value``; an optional header row is skipped."""
    bundles, values, widths = [], [], set()
    with open(path, newline="") as fh:
        for row in csv.reader(fh):
            if not row or row[0].startswith("#"):
                continue
            s = row[0].strip()
            if not s or set(s) - {"0", "1"}:
                if not bundles:
                    continue  # header
                raise ConfigError(f"{path}: bad bundle string {s!r}")
            widths.add(len(s))
            bundles.append(bundle_from_str(s))
            values.append(float(row[1]) if len(row) > 1 and row[1].strip() else 0.0)
    if not bundles:
        raise ConfigError(f"{path}: no rows")
    if len(widths) != 1:
        raise ConfigError(f"{path}: bundle strings of mixed length")
    m = widths.pop()
    if m > MAX_ITEMS:
        raise CapacityError(f"{path}: m={m} exceeds {MAX_ITEMS}")
    return bundles, values, m


def read_dense(path: str) -> np.ndarray:
    bundles, values, m = read_table(path)
    if m > 24:
        raise CapacityError(f"dense table for m={m} is too large")
    if len(bundles) != 1 << m or len(set(bundles)) != len(bundles):
        raise ConfigError(f"{path}: need each of the {1 << m} bundles exactly once")
    out = np.zeros(1 << m)
    out[bundles] = values
    return out


def write_table(path: str | None, bundles, values, m: int, header=("bundle", "value")) -> None:
    fh = open(path, "w", newline="") if path else sys.stdout
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for b, v in zip(bundles, values):
            w.writerow([bundle_to_str(int(b), m), f"{float(v):.17g}"])
    finally:
        if path:
            fh.close()


def read_spectrum(path: str, kind) -> SparseSpectrum:
    freqs, coeffs, m = read_table(path)
    return SparseSpectrum(kind, m, np.array(freqs), np.array(coeffs))


def load_config(path: str | None) -> dict:
    if not path:
        return {}
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: {e}") from e
    if not isinstance(cfg, dict):
        raise ConfigError(f"{path}: top level must be an object")
    return cfg


def _instance_spec(cfg: dict, args) -> InstanceSpec:
    d = dict(cfg.get("instance", {}))
    for key in ("m", "family"):
        if getattr(args, key, None) is not None:
            d[key] = getattr(args, key)
    if args.seed is not None:
        d["seed"] = args.seed
    d.setdefault("m", 12)
    if d["m"] > MAX_ITEMS:
        raise CapacityError(f"m={d['m']} exceeds {MAX_ITEMS}")
    return InstanceSpec.from_dict(d)


def _seeds(cfg: dict, args) -> list[int]:
    if args.seed is not None:
        return [args.seed]
    s = cfg.get("seeds", [cfg.get("instance", {}).get("seed", 0)])
    return list(range(s)) if isinstance(s, int) else [int(x) for x in s]


def _out_dir(args, default: str) -> str:
    out = args.out or default
    os.makedirs(out, exist_ok=True)
    return out


# --------------------------------------------------------------------------
# subcommands

def cmd_gen(args) -> int:
    spec = _instance_spec(load_config(args.config), args)
    inst = generate(spec)
    out = _out_dir(args, "instance")
    manifest = {"instance": spec.to_dict(), "types": inst.types, "meta": inst.meta, "files": []}
    for i, b in enumerate(inst.bidders):
        if spec.m <= DENSE_EXPORT_LIMIT:
            name = f"bidder_{i}.csv"
            write_table(os.path.join(out, name), range(1 << spec.m), b.dense(), spec.m)
            manifest["files"].append(name)
        for kind, s in getattr(b, "spectra", {}).items():
            name = f"bidder_{i}_{kind}_spectrum.csv"
            write_table(os.path.join(out, name), s.freqs, s.coeffs, spec.m, ("frequency", "coefficient"))
            manifest["files"].append(name)
    with open(os.path.join(out, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True, default=str)
    print(os.path.join(out, "manifest.json"))
    return EXIT_OK


def cmd_transform(args) -> int:
    kind = TransformKind.parse(args.kind)
    v = read_dense(args.input)
    m = v.size.bit_length() - 1
    res = forward(v, kind) if args.direction == "fwd" else inverse(v, kind)
    header = ("frequency", "coefficient") if args.direction == "fwd" else ("bundle", "value")
    write_table(args.out, range(v.size), res, m, header)
    return EXIT_OK


def cmd_fit(args) -> int:
    cfg = load_config(args.config)
    kind = TransformKind.parse(args.kind or cfg.get("kind", "wht"))
    bundles, values, m = read_table(args.reports)
    freqs, _, m2 = read_table(args.support)
    if m2 != m:
        raise ConfigError(f"support width {m2} differs from report width {m}")
    fit = FitConfig(**cfg.get("fit", {}))
    if args.support_size is not None:
        fit = replace(fit, support_size=args.support_size)
    if args.path_points is not None:
        fit = replace(fit, path_points=args.path_points)
    s1 = SupportSuperset(kind, m, np.array(freqs))
    model = fit_sparse(ReportSet(zip(bundles, values)), s1, fit)
    write_table(args.out, model.freqs, model.coeffs, m, ("frequency", "coefficient"))
    return EXIT_OK


def cmd_wdp(args) -> int:
    kind = TransformKind.parse(args.kind)
    specs = [read_spectrum(p, kind) for p in args.spectra]
    model = build_ft_wdp(specs)
    if args.lp:
        with open(args.lp, "w") as fh:
            fh.write(model.to_lp())
    alloc, obj, sol = solve_wdp(model, backend=args.backend)
    m = specs[0].m
    for i, b in enumerate(alloc):
        print(f"bidder {i}: {bundle_to_str(b, m)}")
    print(f"objective: {obj:.12g}")
    return EXIT_OK


def _trace_rows(seed: int, res, types) -> list[dict]:
    rows = []
    for ph in res.trace:
        rows.append({"seed": seed, "phase": ph["phase"], "efficiency": ph["efficiency"],
                     "reported_welfare": ph["reported_welfare"], "queries": sum(ph["queries"])})
    final = {"seed": seed, "phase": "final", "efficiency": res.info["efficiency"],
             "revenue": res.info["revenue"], "queries": sum(res.info["queries"])}
    for t, s in res.info["type_shares"].items():
        final[f"share_{t}"] = s
    rows.append(final)
    return rows


def _run_mechanism(args, which: str) -> int:
    cfg = load_config(args.config)
    base = _instance_spec(cfg, args)
    opts = dict(cfg.get("mechanism", {}))
    out = _out_dir(args, f"run-{which}")
    rows, summary = [], []
    t0 = time.perf_counter()
    for seed in _seeds(cfg, args):
        inst = generate(replace(base, seed=seed))
        opt = true_optimum(inst)
        hyb, mlca = mechanism_configs(opts, seed)
        if which == "hybrid":
            hyb.ablation = opts.get("ablation", "none")
            res = run_hybrid_ica(inst, hyb, optimum=opt)
        else:
            if "q_init" in opts:
                mlca = replace(mlca, q_init=int(opts["q_init"]), q_max=int(opts.get("q_max", mlca.q_max)))
            res = run_mlca(inst, mlca, optimum=opt)
        rows += _trace_rows(seed, res, inst.types)
        summary.append({"seed": seed, "efficiency": res.info["efficiency"], "revenue": res.info["revenue"],
                        "allocation": [bundle_to_str(b, inst.m) for b in res.allocation],
                        "payments": res.payments, "shortfall": res.info["shortfall"]})
    shares = sorted({k for r in rows for k in r if k.startswith("share_")})
    write_csv(os.path.join(out, "trace.csv"), rows,
              ["seed", "phase", "efficiency", "reported_welfare", "revenue", "queries", *shares])
    manifest = {"mechanism": which, "instance": base.to_dict(), "options": opts, "runs": summary,
                "wall_time": time.perf_counter() - t0}
    with open(os.path.join(out, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
    for s in summary:
        print(f"seed {s['seed']}: efficiency {s['efficiency']:.4f} revenue {s['revenue']:.4f}")
    return EXIT_OK


def cmd_experiment(args) -> int:
    cfg = load_config(args.config)
    if args.id:
        cfg["id"] = args.id
    if "id" not in cfg:
        raise ConfigError("experiment id missing (config 'id' or --id)")
    if args.seed is not None:
        cfg["seeds"] = [args.seed]
    cfg.setdefault("seeds", 1)
    if args.out:
        cfg["out"] = args.out
    if args.workers is not None:
        cfg["workers"] = args.workers
    inst = dict(cfg.get("instance", {}))
    inst.setdefault("m", 12)
    if inst["m"] > MAX_ITEMS:
        raise CapacityError(f"m={inst['m']} exceeds {MAX_ITEMS}")
    cfg["instance"] = InstanceSpec.from_dict(inst)
    spec = ExperimentSpec.from_dict(cfg)
    run_experiment(spec)
    print(os.path.join(spec.out, "manifest.json"))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fourier-auctions", description="Fourier-based combinatorial auction simulator.")
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, config=True, seed=True, out=True):
        if config:
            sp.add_argument("--config", help="JSON config file")
        if seed:
            sp.add_argument("--seed", type=int)
        if out:
            sp.add_argument("--out", help="output path")
        return sp

    g = common(sub.add_parser("gen", help="generate an instance"))
    g.add_argument("--m", type=int)
    g.add_argument("--family")
    g.set_defaults(func=cmd_gen)

    t = common(sub.add_parser("transform", help="transform a dense set function CSV"), config=False, seed=False)
    t.add_argument("input")
    t.add_argument("--kind", required=True, choices=[k.value for k in TransformKind])
    t.add_argument("--direction", default="fwd", choices=["fwd", "inv"])
    t.set_defaults(func=cmd_transform)

    f = common(sub.add_parser("fit", help="fit a sparse spectrum to reports"), seed=False)
    f.add_argument("--reports", required=True)
    f.add_argument("--support", required=True, help="CSV of candidate frequencies")
    f.add_argument("--kind", choices=[k.value for k in TransformKind])
    f.add_argument("--support-size", type=int)
    f.add_argument("--path-points", type=int)
    f.set_defaults(func=cmd_fit)

    w = sub.add_parser("wdp", help="solve a winner determination problem over spectrum files")
    w.add_argument("spectra", nargs="+")
    w.add_argument("--kind", required=True, choices=[k.value for k in TransformKind])
    w.add_argument("--backend", default="bnb", choices=["bnb", "highs"])
    w.add_argument("--lp", help="also write the model in LP text form")
    w.set_defaults(func=cmd_wdp)

    for name, which in (("run-mlca", "mlca"), ("run-hybrid", "hybrid")):
        r = common(sub.add_parser(name, help=f"run {which} on generated instances"))
        r.add_argument("--m", type=int)
        r.add_argument("--family")
        r.set_defaults(func=lambda a, which=which: _run_mechanism(a, which))

    e = common(sub.add_parser("experiment", help="run an experiment from the harness"))
    e.add_argument("--id")
    e.add_argument("--workers", type=int)
    e.set_defaults(func=cmd_experiment)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * args.verbose, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except CapacityError as e:
        print(f"capacity error: {e}", file=sys.stderr)
        return EXIT_CAPACITY
    except (ValueError, KeyError, TypeError, FileNotFoundError) as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
