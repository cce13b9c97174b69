"""Command-line entry point: ``mixid <subcommand> ...``.

Exit codes: 0 success, 1 domain error, 2 usage error.
"""
import argparse
import itertools
from pathlib import Path
import sys

import numpy as np

try:
    import tomllib
except ImportError:  # Python 3.10
    import tomli as tomllib

from . import io
from .datasets import (RADIAL_STD, TANGENTIAL_STD, WARP_RATE, DatasetSpec, gen_pinwheel,
                       generate)
from .errors import MixIdError
from .likelihood import GridSpec, grid_search, grid_slice, params_model
from .metrics import cca_align, dist_aff_l2, ingest_latents, ingest_pair, mcc
from .pwa import architecture_check, classify_injectivity, compile_network
from .suite import run_case, theorem_sweep


def _out_dir(path):
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _emit(obj, out=None, name=None):
    text = io.dumps(obj)
    sys.stdout.write(text)
    if out is not None:
        (_out_dir(out) / name).write_text(text, encoding="utf-8")


# --------------------------------------------------------------------------- subcommands

def cmd_gen(args):
    spec = DatasetSpec(args.kind, args.n, args.clusters, args.noise, args.ambient_dim, args.seed)
    meta = dict(spec.__dict__)
    if spec.kind == "pinwheel":
        shape = dict(radial_std=args.radial_std, tangential_std=args.tangential_std, rate=args.warp_rate)
        X, labels = gen_pinwheel(spec, **shape)
        meta.update(shape)
    else:
        X, labels = generate(spec)
    out = _out_dir(args.out)
    io.write_matrix_csv(out / "data.csv", X, prefix="x")
    io.write_csv(out / "labels.csv", ["label"], [[int(l)] for l in labels])
    io.write_json(out / "spec.json", meta)
    print(f"wrote {len(X)} samples to {out}")


def cmd_align(args):
    a, b = ingest_pair(args.a, args.b)
    rep = cca_align(a, b, args.cca_dim or min(a.m, b.m))
    _emit({"pair": [a.run_id, b.run_id], **rep.to_dict()}, args.out, "alignment.json")


def cmd_mcc(args):
    a, b = ingest_pair(args.a, args.b)
    val = mcc(a, b, args.mode, args.cca_dim, args.correlation)
    print(repr(val))
    _emit({"pair": [a.run_id, b.run_id], "mode": args.mode, "cca_dim": args.cca_dim,
           "correlation": args.correlation, "mcc": val}, args.out, "mcc.json")


def cmd_distaff(args):
    p, q = io.read_gmm(args.p), io.read_gmm(args.q)
    val, rep = dist_aff_l2(p, q)
    _emit({"dist_aff_l2": val, "report": rep.to_dict()}, args.out, "distaff.json")


def _load_config(path):
    try:
        with open(path, "rb") as fh:
            cfg = tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ValueError(f"{path}: {exc}") from None
    gt = cfg.get("ground_truth", {})
    g = cfg.get("grid", {})
    grid = GridSpec(
        J_choices=tuple(g.get("J", (2, 3))),
        lambda_step=float(g.get("lambda_step", 0.1)),
        mu=tuple(g.get("mu", (-4.0, 4.0, 0.5))),
        alpha=tuple(g.get("alpha", (-2.0, 2.0, 0.5))),
        beta=tuple(g.get("beta", (-2.0, 2.0, 0.5))),
        pi=tuple(g.get("pi", (-2.0, 2.0, 0.5))),
        prior_var=float(gt.get("prior_var", 1.0)),
        noise_sigma=float(gt.get("noise_sigma", 0.5)),
    )
    params = {k: [float(v) for v in gt[k]] for k in ("lambda", "mu", "alpha", "beta", "pi")}
    model = params_model(params, grid.prior_var, grid.noise_sigma)
    return cfg, grid, model


def _write_landscape(path, land):
    io.write_csv(path, ["mode", *land.header()], ([land.mode, *row] for row in land.table()))


def cmd_nll_scan(args):
    cfg, grid, gt = _load_config(args.config)
    mode = args.mode or cfg.get("grid", {}).get("mode", "full")
    out = _out_dir(args.out)
    if mode == "full":
        minimizers, land, ref = grid_search(gt, grid)
        _write_landscape(out / "landscape.csv", land)
        io.write_json(out / "minimizers.json", {
            "mode": "full", "cells": len(land), "ground_truth_nll": ref,
            "min_nll": float(land.nll.min()),
            "gibbs_violations": int(np.sum(land.nll < ref - 1e-9)),
            "minimizers": [m.params for m in minimizers]})
    elif mode == "slice":
        names = args.param or cfg.get("grid", {}).get("slice", ["alpha1"])
        summary = []
        rows = []
        for name in names:
            land = grid_slice(gt, grid, name)
            rows.extend([land.mode, *r] for r in land.table())
            best = int(np.argmin(land.nll))
            summary.append({"param": name, "argmin": land.params(best), "min_nll": float(land.nll[best])})
        io.write_csv(out / "landscape.csv", ["mode", *land.header()], rows)
        io.write_json(out / "minimizers.json", {"mode": "slice", "slices": summary})
    else:
        raise ValueError(f"unknown scan mode {mode!r}")
    print(f"wrote landscape.csv and minimizers.json to {out}")


def cmd_inj_check(args):
    if args.network:
        net = io.read_network(args.network)
        f = compile_network(net, region_cap=args.region_cap)
        report = {"pieces": len(f), "architecture": architecture_check(net).to_dict()}
    else:
        f = io.read_pwa(args.pwa)
        report = {"pieces": len(f)}
    report["verdict"] = classify_injectivity(f, args.samples, args.seed).to_dict()
    _emit(report, args.out, "injectivity.json")


def cmd_suite(args):
    if args.action == "run":
        rep = run_case(args.case, args.trials, args.seed)
        _emit(rep, args.out, f"{args.case}.json")
        if not rep["passed"]:
            return 1
    else:
        rows = theorem_sweep(args.trials, args.seed)
        header = list(rows[0].keys())
        text = io.csv_text(header, ([r[k] for k in header] for r in rows))
        sys.stdout.write(text)
        if args.out:
            (_out_dir(args.out) / "sweep.csv").write_text(text, encoding="utf-8")
    return 0


def cmd_report(args):
    runs = [ingest_latents(p) for p in args.runs]
    if len(runs) < 2:
        raise ValueError("report needs at least two runs")
    gmms = [io.read_gmm(p) for p in args.gmms] if args.gmms else None
    if gmms is not None and len(gmms) != len(runs):
        raise ValueError("one mixture file per run is required")
    pairs = []
    for i, j in itertools.combinations(range(len(runs)), 2):
        a, b = runs[i], runs[j]
        if a.n != b.n:
            raise MixIdError(f"{a.run_id} and {b.run_id} are not paired")
        row = {"pair": [a.run_id, b.run_id], "strong_mcc": mcc(a, b, "strong"),
               "weak_mcc": mcc(a, b, "weak", args.cca_dim), "dist_aff_l2": None}
        if gmms is not None:
            row["dist_aff_l2"] = dist_aff_l2(gmms[i], gmms[j])[0]
        pairs.append(row)
    out = _out_dir(args.out)
    io.write_json(out / "pairs.json", pairs)
    cells = [args.dataset]
    for key in ("strong_mcc", "weak_mcc", "dist_aff_l2"):
        vals = [p[key] for p in pairs if p[key] is not None]
        cells.append(f"{np.mean(vals):.4f} ({np.std(vals):.4f})" if vals else "")
    io.write_csv(out / "table.csv", ["dataset", "strong_mcc", "weak_mcc", "dist_aff_l2"], [cells])
    sys.stdout.write(io.dumps(pairs))


# --------------------------------------------------------------------------- parser

def build_parser():
    ap = argparse.ArgumentParser(prog="mixid", description="Identifiability toolkit for "
                                 "Gaussian-mixture latent models with piecewise-affine decoders.")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a synthetic dataset")
    p.add_argument("--kind", choices=["pinwheel", "parallelograms"], default="pinwheel")
    p.add_argument("--n", type=int, default=5000)
    p.add_argument("--clusters", type=int, default=3)
    p.add_argument("--noise", type=float, default=0.05)
    p.add_argument("--ambient-dim", type=int, default=2)
    p.add_argument("--radial-std", type=float, default=RADIAL_STD)
    p.add_argument("--tangential-std", type=float, default=TANGENTIAL_STD)
    p.add_argument("--warp-rate", type=float, default=WARP_RATE)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("align", help="CCA alignment between paired latent CSVs")
    p.add_argument("--a", required=True)
    p.add_argument("--b", required=True)
    p.add_argument("--cca-dim", type=int)
    p.add_argument("--out")
    p.set_defaults(func=cmd_align)

    p = sub.add_parser("mcc", help="strong or weak mean correlation coefficient")
    p.add_argument("--a", required=True)
    p.add_argument("--b", required=True)
    p.add_argument("--mode", choices=["strong", "weak"], default="strong")
    p.add_argument("--cca-dim", type=int)
    p.add_argument("--correlation", choices=["pearson", "spearman"], default="pearson")
    p.add_argument("--out")
    p.set_defaults(func=cmd_mcc)

    p = sub.add_parser("distaff", help="affine-invariant L2 distance between two mixtures")
    p.add_argument("--p", required=True)
    p.add_argument("--q", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_distaff)

    p = sub.add_parser("nll-scan", help="population NLL grid scan")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--mode", choices=["full", "slice"])
    p.add_argument("--param", action="append", help="slice parameter (repeatable)")
    p.set_defaults(func=cmd_nll_scan)

    p = sub.add_parser("inj-check", help="classify injectivity of a network or PWA function")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--network")
    src.add_argument("--pwa")
    p.add_argument("--samples", type=int, default=2000)
    p.add_argument("--region-cap", type=int, default=2 ** 20)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_inj_check)

    p = sub.add_parser("suite", help="counterexample catalog and theorem sweep")
    p.add_argument("action", choices=["run", "sweep"])
    p.add_argument("--case", choices=["folded-priors", "fold-pair", "half-abs", "sweep"])
    p.add_argument("--trials", type=int, default=50)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_suite)

    p = sub.add_parser("report", help="pairwise metrics table over several runs")
    p.add_argument("--runs", nargs="+", required=True)
    p.add_argument("--gmms", nargs="+")
    p.add_argument("--cca-dim", type=int)
    p.add_argument("--dataset", default="dataset")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_report)
    return ap


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "suite" and args.action == "run" and not args.case:
        parser.error("suite run needs --case")
    try:
        code = args.func(args)
    except (MixIdError, OSError, ValueError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    return code or 0


if __name__ == "__main__":
    sys.exit(main())
