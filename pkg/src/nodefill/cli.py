"""Command-line interface: ``nodefill {generate,analyze,bench,solve-poisson,spectrum}``.

Exit codes: 0 success, 2 usage or constraint error, 3 numerical failure.
Relative output paths are resolved against ``$NODEFILL_OUTDIR`` when set.
"""
from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import time
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .bench import ALGORITHMS, fit_slope, h_for_count, shrinking_domain, sweep, write_records
from .ff import ff_fill_domain
from .geometry import Domain, discretize_boundary, make_box, parse_domain
from .nodefile import read_nodes, write_nodes
from .pnp import CandidateStrategy, FillResult, pnp_fill
from .quality import (distance_histogram, hole_sizes_2d, min_pairwise_distance, neighbor_stats,
                      verify_empty_disk)
from .rbffd import (NumericalError, PhsConfig, assemble_poisson, laplacian_spectrum,
                    run_poisson)
from .skf import skf_fill
from .spacing import SpacingField, analytic_spacing, constant_spacing, image_spacing, read_pgm

OUTDIR_ENV = "NODEFILL_OUTDIR"


class UsageError(Exception):
    """Bad arguments or an unsupported combination (exit code 2)."""


def _out_path(path: str) -> Path:
    p = Path(path)
    if not p.is_absolute():
        p = Path(os.environ.get(OUTDIR_ENV, ".")) / p
    p.parent.mkdir(parents=True, exist_ok=True)
    return p


def _emit(obj) -> None:
    print(json.dumps(obj, indent=2, sort_keys=True, default=_json_default))


def _json_default(o):
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


def _seed(args) -> int:
    if args.seed is not None:
        return int(args.seed)
    seed = int(np.random.SeedSequence().entropy % (2 ** 32))
    print(f"seed: {seed}", file=sys.stderr)
    return seed


def _domain(args) -> Domain:
    if args.domain:
        dom = parse_domain(args.domain)
        if args.dim is not None and args.dim != dom.dim:
            raise UsageError(f"--dim {args.dim} contradicts the {dom.dim}-D domain")
        return dom
    d = args.dim or 2
    return make_box(np.zeros(d), np.ones(d))


def _spacing(args) -> tuple[SpacingField, dict]:
    if args.h_image:
        if args.h0 is None:
            raise UsageError("--h-image needs --h0")
        return image_spacing(read_pgm(args.h_image), args.h0), {"h_image": args.h_image,
                                                                 "h0": args.h0}
    if args.h_expr:
        return analytic_spacing(args.h_expr), {"h_expr": args.h_expr}
    if args.h is None:
        raise UsageError("give one of --h, --h-expr or --h-image")
    return constant_spacing(args.h), {"h": args.h}


def _spacing_from_header(header: dict) -> Optional[SpacingField]:
    if "h" in header:
        return constant_spacing(header["h"])
    if "h_expr" in header:
        return analytic_spacing(header["h_expr"])
    if "h_image" in header and Path(header["h_image"]).exists():
        return image_spacing(read_pgm(header["h_image"]), header["h0"])
    return None


def fill(alg: str, domain: Domain, h: SpacingField, seed: int, n: Optional[int] = None,
         strategy: CandidateStrategy = CandidateStrategy(), max_nodes: int = 10_000_000) -> FillResult:
    """Dispatch to one of the fill algorithms with a discretized boundary as seeds."""
    if alg in ("pnp", "pnp-grid"):
        bnd = discretize_boundary(domain, h)
        return pnp_fill(domain, h, bnd.points, strategy=strategy, max_nodes=max_nodes, seed=seed,
                        index="grid" if alg == "pnp-grid" else "kdtree")
    if alg == "ff":
        if domain.dim != 2:
            raise UsageError("FF supports 2-D only")
        return ff_fill_domain(domain, h, n=n or 5)
    if alg == "skf":
        if not h.is_constant:
            raise UsageError("SKF supports constant spacing only")
        return skf_fill(domain, h, n=n or 15, seed=seed)
    raise UsageError(f"unknown algorithm {alg!r}")


# -- commands ---------------------------------------------------------------------

def cmd_generate(args) -> int:
    domain = _domain(args)
    h, hspec = _spacing(args)
    seed = _seed(args)
    strategy = CandidateStrategy(args.candidates, n=args.n_cand, k=args.k)
    t0 = time.perf_counter()
    res = fill(args.alg, domain, h, seed, n=args.n, strategy=strategy, max_nodes=args.max_nodes)
    elapsed = time.perf_counter() - t0
    header = {"algorithm": args.alg, "domain": domain.describe(), "seed": seed,
              "seed_count": res.seed_count, "truncated": bool(res.truncated), **hspec}
    if res.beta is not None:
        header["terminal"] = [int(t) for t in res.terminal]
    out = _out_path(args.output)
    write_nodes(out, res.nodes, header, beta=res.beta)
    dmin = min_pairwise_distance(res.nodes)[0] if res.n >= 2 else None
    _emit({"N": res.n, "seed_count": res.seed_count, "time": elapsed, "min_spacing": dmin,
           "truncated": bool(res.truncated), "seed": seed, "output": str(out)})
    if res.truncated:
        print(f"warning: node limit {args.max_nodes} reached; result truncated", file=sys.stderr)
    return 0


def _margin(text: str, header: dict) -> float:
    text = text.strip()
    if text.endswith("h"):
        if "h" not in header:
            raise UsageError("a margin in units of h needs a constant-spacing node file")
        factor = float(text[:-1] or 1)
        return factor * float(header["h"])
    return float(text)


def cmd_analyze(args) -> int:
    nf = read_nodes(args.nodes)
    header = nf.header
    margin = _margin(args.margin, header)
    domain = parse_domain(args.domain or header["domain"]) if (args.domain or "domain" in header) else None
    boundary = nf.nodes[: nf.seed_count] if nf.seed_count else None
    if boundary is None and margin > 0 and domain is None:
        raise UsageError("no boundary nodes or domain to measure the margin against")
    st = neighbor_stats(nf.nodes, args.c, margin, boundary=boundary, domain=domain)
    report = {"N": int(len(nf.nodes)), "margin": margin, "stats": st.summary()}
    report["min_spacing"] = min_pairwise_distance(nf.nodes)[0]
    if nf.nodes.shape[1] == 2 and domain is not None:
        report["holes"] = hole_sizes_2d(nf.nodes, domain).summary()
    h = _spacing_from_header(header)
    if nf.beta is not None and h is not None:
        rep = verify_empty_disk(FillResult(nodes=nf.nodes, seed_count=nf.seed_count, beta=nf.beta), h)
        report["empty_disk"] = {"ok": rep.ok, "worst_ratio": rep.worst_ratio,
                                "worst_pair": rep.worst_pair}
    counts, edges = distance_histogram(nf.nodes, args.c, args.bins, margin, boundary, domain)
    hist = _out_path(args.hist or Path(args.nodes).stem + "_hist.csv")
    with open(hist, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["lo", "hi", "count"])
        for k, cnt in enumerate(counts):
            w.writerow(["%.17g" % edges[k], "%.17g" % edges[k + 1], int(cnt)])
    report["histogram"] = str(hist)
    if args.output:
        _out_path(args.output).write_text(json.dumps(report, indent=2, default=_json_default))
    _emit(report)
    return 0


def cmd_bench(args) -> int:
    algs = [a.strip() for a in args.alg.split(",") if a.strip()]
    for a in algs:
        if a not in ALGORITHMS:
            raise UsageError(f"unknown algorithm {a!r}; choose from {', '.join(ALGORITHMS)}")
    if args.dim != 2 and "ff" in algs:
        raise UsageError("FF supports 2-D only")
    seed = _seed(args)
    if args.shrinking:
        alphas = [float(a) for a in args.alphas.split(",")]
        records = shrinking_domain(algs, alphas, h=args.h, repeats=args.repeats, seed=seed)
        summary = {}
        for a in algs:
            ts = [r.median for r in records if r.algorithm == a]
            summary[a] = {"t_first": ts[0], "t_last": ts[-1], "max_over_min": max(ts) / min(ts)}
    else:
        domain = make_box(np.zeros(args.dim), np.ones(args.dim))
        targets = np.geomspace(args.target_n / 10, args.target_n, args.points)
        hs = [h_for_count(domain, n) for n in targets]
        records, summary = [], {}
        for a in algs:
            rec = sweep(a, domain, hs, repeats=args.repeats, seed=seed)
            records += rec
            try:
                summary[a] = {"slope": fit_slope(rec, n_min=min(1e4, args.target_n / 20))}
            except ValueError as exc:
                summary[a] = {"slope": None, "note": str(exc)}
    out = _out_path(args.output)
    write_records(out, records)
    _emit({"output": str(out), "seed": seed, "summary": summary})
    return 0


def cmd_solve(args) -> int:
    if args.alg == "ff" and args.dim != 2:
        raise UsageError("FF supports 2-D only")
    seed = _seed(args)
    domain = make_box(np.zeros(args.dim), np.ones(args.dim))
    h = constant_spacing(args.h)
    res = fill(args.alg, domain, h, seed)
    out = run_poisson(res, domain, args.h, PhsConfig(k=args.phs, m=args.order, nn=args.nn),
                      tol=args.tol, method=args.solver)
    out.update({"alg": args.alg, "dim": args.dim, "h": args.h, "seed": seed})
    _emit(out)
    return 0


def cmd_spectrum(args) -> int:
    if args.nodes:
        nf = read_nodes(args.nodes)
        nodes, seed_count, seed = nf.nodes, nf.seed_count, nf.header.get("seed")
        if seed_count == 0:
            raise UsageError("node file has no boundary nodes (seed_count = 0)")
    else:
        if args.h is None:
            raise UsageError("give --nodes or --h")
        seed = _seed(args)
        domain = make_box(np.zeros(args.dim), np.ones(args.dim))
        res = fill(args.alg, domain, constant_spacing(args.h), seed)
        nodes, seed_count = res.nodes, res.seed_count
    mask = np.zeros(len(nodes), bool)
    mask[:seed_count] = True
    system = assemble_poisson(nodes, mask, PhsConfig(k=args.phs, m=args.order, nn=args.nn))
    ev = laplacian_spectrum(system, limit=args.limit)
    out = _out_path(args.output)
    with open(out, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["re", "im"])
        for z in ev:
            w.writerow(["%.17g" % z.real, "%.17g" % z.imag])
    top = [[float(z.real), float(z.imag)] for z in ev[:5]]
    _emit({"N": int(len(nodes)), "interior": int((~mask).sum()), "max_real": float(ev.real.max()),
           "top5": top, "seed": seed, "output": str(out)})
    return 0


# -- parser -------------------------------------------------------------------------

def _add_spacing(p):
    g = p.add_mutually_exclusive_group()
    g.add_argument("--h", type=float, help="constant spacing")
    g.add_argument("--h-expr", help="spacing expression in x, y, z, e.g. '0.015*(1+x+y)'")
    g.add_argument("--h-image", help="greyscale PGM image mapped onto the unit square")
    p.add_argument("--h0", type=float, help="scale factor for --h-image")


def _add_phs(p):
    p.add_argument("--nn", type=int, default=None, help="stencil size (default 15 in 2-D, 42 in 3-D)")
    p.add_argument("--phs", type=int, default=3, help="PHS exponent k")
    p.add_argument("--order", type=int, default=2, help="monomial augmentation order")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="nodefill", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="fill a domain with nodes")
    g.add_argument("--alg", choices=ALGORITHMS, default="pnp")
    g.add_argument("--domain", help="e.g. 'box 0 0 1 1', 'ball 0 0 1', 'omega 0.25', "
                                    "'diff (box 0 0 1 1) (openball 0.5 0.5 0.2)'")
    g.add_argument("--dim", type=int, choices=(1, 2, 3), help="unit box dimension if no --domain")
    _add_spacing(g)
    g.add_argument("--seed", type=int)
    g.add_argument("--candidates", default="randomized-pattern",
                   choices=("random", "fixed-pattern", "randomized-pattern"))
    g.add_argument("--k", type=int, help="pattern parameter for pattern candidates")
    g.add_argument("--n-cand", type=int, help="candidate count for random candidates")
    g.add_argument("--n", type=int, help="FF arc points (default 5) or SKF tries (default 15)")
    g.add_argument("--max-nodes", type=int, default=10_000_000)
    g.add_argument("-o", "--output", default="nodes.csv")
    g.set_defaults(func=cmd_generate)

    a = sub.add_parser("analyze", help="quality report for a node file")
    a.add_argument("nodes")
    a.add_argument("--c", type=int, default=3, help="neighbours per node")
    a.add_argument("--margin", default="0", help="boundary margin, a number or e.g. '2h'")
    a.add_argument("--bins", type=int, default=50)
    a.add_argument("--domain", help="override the domain stored in the header")
    a.add_argument("--hist", help="histogram CSV path (default <nodes>_hist.csv)")
    a.add_argument("-o", "--output", help="also write the JSON report here")
    a.set_defaults(func=cmd_analyze)

    b = sub.add_parser("bench", help="timing sweeps")
    b.add_argument("--alg", default=",".join(ALGORITHMS), help="comma-separated algorithm ids")
    b.add_argument("--target-n", type=float, default=1e5, help="largest node count of the sweep")
    b.add_argument("--points", type=int, default=4, help="sizes per decade sweep")
    b.add_argument("--dim", type=int, choices=(2, 3), default=2)
    b.add_argument("--repeats", type=int, default=3)
    b.add_argument("--shrinking", action="store_true", help="fill the square with a growing hole")
    b.add_argument("--alphas", default="0.05,0.15,0.25,0.35,0.45")
    b.add_argument("--h", type=float, default=0.005, help="spacing for --shrinking")
    b.add_argument("--seed", type=int)
    b.add_argument("-o", "--output", default="bench.csv")
    b.set_defaults(func=cmd_bench)

    s = sub.add_parser("solve-poisson", help="RBF-FD Poisson test problem on generated nodes")
    s.add_argument("--alg", choices=("pnp", "pnp-grid", "ff", "skf"), default="pnp")
    s.add_argument("--dim", type=int, choices=(2, 3), default=2)
    s.add_argument("--h", type=float, required=True)
    s.add_argument("--seed", type=int)
    s.add_argument("--solver", choices=("direct", "bicgstab"), default="direct")
    s.add_argument("--tol", type=float, default=1e-10)
    _add_phs(s)
    s.set_defaults(func=cmd_solve)

    e = sub.add_parser("spectrum", help="eigenvalues of the interior Laplacian block")
    e.add_argument("--nodes", help="node file (default: generate one)")
    e.add_argument("--alg", choices=("pnp", "pnp-grid", "ff", "skf"), default="pnp")
    e.add_argument("--dim", type=int, choices=(2, 3), default=2)
    e.add_argument("--h", type=float)
    e.add_argument("--seed", type=int)
    e.add_argument("--limit", type=int, default=5000, help="largest N for the dense eigensolve")
    e.add_argument("-o", "--output", default="spectrum.csv")
    _add_phs(e)
    e.set_defaults(func=cmd_spectrum)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    except (UsageError, ValueError, TypeError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
