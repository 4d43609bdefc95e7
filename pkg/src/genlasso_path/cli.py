"""Command line interface.

    genlasso-path path  --problem {fl1d,flgraph,sfl,tf,custom} --y FILE [...] --out DIR
    genlasso-path coef  --path DIR (--lambda L | --df K) [--out FILE]
    genlasso-path bench --problem {fl1d,tf,fl2d-grid} [--sizes N,N,...] [--out FILE]

Exit codes: 0 success, 2 bad input, 3 numerical abort (partial output
written), 4 requested lambda/df outside the computed path.
"""
from __future__ import annotations

import argparse
import logging
import sys
import time
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import fileio
from .backend_base import ConditioningWarning
from .fileio import ParseError
from .general_x import DesignMatrix, RankDeficientDesign, run_path_general_x
from .operators import Custom, FusedGraph, SparseFusedGraph, TrendFilter, grid_edges
from .path_core import PathAborted, PathRangeError, SolutionPath, run_path
from .tf_backend import TrendFilterBackend

log = logging.getLogger("genlasso_path")

EXIT_INPUT, EXIT_NUMERICAL, EXIT_RANGE = 2, 3, 4

# flags each problem requires beyond --y; --X is optional everywhere
REQUIRED = {
    "fl1d": set(),
    "flgraph": {"edges"},
    "sfl": {"edges", "alpha"},
    "tf": {"order"},
    "custom": {"D"},
}
OPTIONAL_SPECIFIC = {"edges", "alpha", "order", "D"}


class UsageError(Exception):
    pass


@dataclass
class RunConfig:
    problem: str
    y: str
    order: int | None = None
    alpha: float | None = None
    X: str | None = None
    edges: str | None = None
    D: str | None = None
    max_steps: int = 2000
    min_lambda: float = 0.0
    max_df: int | None = None
    format: str = "csv"
    seed: int | None = None

    def validate(self):
        need = REQUIRED[self.problem]
        given = {f for f in OPTIONAL_SPECIFIC if getattr(self, f) is not None}
        missing = need - given
        extra = given - need
        if missing:
            raise UsageError(f"--problem {self.problem} requires " + ", ".join(f"--{f}" for f in sorted(missing)))
        if extra:
            raise UsageError(f"--problem {self.problem} does not take " + ", ".join(f"--{f}" for f in sorted(extra)))
        if self.order is not None and self.order < 0:
            raise UsageError("--order must be nonnegative")
        if self.alpha is not None and not self.alpha > 0:
            raise UsageError("--alpha must be positive")
        if self.max_steps < 1:
            raise UsageError("--max-steps must be at least 1")
        if self.min_lambda < 0:
            raise UsageError("--min-lambda must be nonnegative")


def build_problem(cfg: RunConfig):
    """Read inputs; return (y, X or None, spec, problem metadata for the artifact)."""
    y = fileio.read_vector(cfg.y)
    p = y.size
    X = None
    if cfg.X is not None:
        X = fileio.read_matrix(cfg.X)
        if X.shape[0] != y.size:
            raise ParseError(cfg.X, 0, f"X has {X.shape[0]} rows but y has {y.size} entries")
        p = X.shape[1]
    meta = {"problem": cfg.problem, "p": p, "y": y.tolist(), "X": None if X is None else X.tolist()}
    if cfg.problem in ("fl1d", "tf"):
        k = 0 if cfg.problem == "fl1d" else cfg.order
        spec = TrendFilter(k, p)
        meta["order"] = k
    elif cfg.problem in ("flgraph", "sfl"):
        edges = fileio.read_edges(cfg.edges, p)
        meta["edges"] = (edges + 1).tolist()
        if cfg.problem == "flgraph":
            spec = FusedGraph(p, edges)
        else:
            spec = SparseFusedGraph(p, edges, cfg.alpha)
            meta["alpha"] = cfg.alpha
    else:
        m, r, c, v = fileio.read_triplets(cfg.D, p)
        spec = Custom(m, p, r, c, v)
        meta["D"] = {"m": m, "rows": (r + 1).tolist(), "cols": (c + 1).tolist(), "vals": v.tolist()}
    return y, X, spec, meta


def spec_from_meta(meta: dict):
    p = meta["p"]
    kind = meta["problem"]
    if kind in ("fl1d", "tf"):
        return TrendFilter(meta["order"], p)
    if kind == "flgraph":
        return FusedGraph(p, np.array(meta["edges"], np.int64).reshape(-1, 2) - 1)
    if kind == "sfl":
        return SparseFusedGraph(p, np.array(meta["edges"], np.int64).reshape(-1, 2) - 1, meta["alpha"])
    D = meta["D"]
    return Custom(D["m"], p, np.array(D["rows"], np.int64) - 1, np.array(D["cols"], np.int64) - 1, D["vals"])


def compute_path(cfg: RunConfig, y, X, spec) -> SolutionPath:
    stop = dict(max_steps=cfg.max_steps, min_lambda=cfg.min_lambda, max_df=cfg.max_df)
    if X is None:
        return run_path(y, spec, **stop)
    route = "generic" if isinstance(spec, Custom) else "specialized"
    return run_path_general_x(y, X, spec, route=route, **stop)


def cmd_path(args) -> int:
    cfg = RunConfig(
        problem=args.problem, y=args.y, order=args.order, alpha=args.alpha, X=args.X,
        edges=args.edges, D=args.D, max_steps=args.max_steps, min_lambda=args.min_lambda,
        max_df=args.max_df, format=args.format,
    )
    cfg.validate()
    y, X, spec, meta = build_problem(cfg)
    meta["stop"] = {"max_steps": cfg.max_steps, "min_lambda": cfg.min_lambda, "max_df": cfg.max_df}
    try:
        path = compute_path(cfg, y, X, spec)
    except PathAborted as exc:
        fileio.write_path(exc.path, args.out, cfg.format, meta)
        print(f"error: numerical failure at step {exc.step}: {exc.cause}; partial path written to {args.out}",
              file=sys.stderr)
        return EXIT_NUMERICAL
    fileio.write_path(path, args.out, cfg.format, meta)
    log.info("%d knots, termination %s", len(path.knots), path.termination)
    return 0


def load_path(out_dir) -> SolutionPath:
    meta = fileio.read_problem(out_dir)
    kind = meta.get("output_format", "csv")
    spec = spec_from_meta(meta)
    y = np.array(meta["y"], float)
    design = None
    if meta.get("X") is not None:
        design = DesignMatrix(np.array(meta["X"], float))
    path = SolutionPath(y=y, D=spec.matrix, spec=spec, design=design)
    path.knots = fileio.read_knots(out_dir, kind)
    path.segments = fileio.read_segments(out_dir, kind)
    path.termination = meta.get("termination", "")
    path.df0 = meta.get("df0", 0)
    return path


def lambda_for_df(path: SolutionPath, df: int) -> float:
    """Lower end of the first (highest) segment whose df equals ``df``."""
    for idx, seg in enumerate(path.segments):
        if path.nullity_of_segment(idx) == df:
            return seg.lam_lo
    raise LookupError


def cmd_coef(args) -> int:
    path = load_path(args.path)
    if args.df is not None:
        try:
            lam = lambda_for_df(path, args.df)
        except LookupError:
            dfs = sorted({path.nullity_of_segment(i) for i in range(len(path.segments))})
            print(f"error: df {args.df} is not attained on the computed path; available: "
                  + ",".join(map(str, dfs)), file=sys.stderr)
            return EXIT_RANGE
    else:
        lam = args.lam
        if lam < 0:
            print("error: lambda must be nonnegative", file=sys.stderr)
            return EXIT_RANGE
    try:
        beta = path.primal_at(lam)
    except PathRangeError as exc:
        print(f"error: {exc}; computed range is [{fileio.fmt(exc.lam_min)}, inf)", file=sys.stderr)
        return EXIT_RANGE
    lines = ["# genlasso-path format_version=%d lambda=%s" % (fileio.FORMAT_VERSION, fileio.fmt(lam)), "beta"]
    lines += [fileio.fmt(b) for b in beta]
    text = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return 0


# -- benchmark ----------------------------------------------------------------

def bench_problem(kind: str, n: int, rng: np.random.Generator, order: int = 3):
    """Seeded synthetic instance of size about n.

    fl1d / tf: two periods of a sine on an even grid plus N(0, 0.5^2) noise.
    fl2d-grid: a side x side grid (side = round(sqrt(n))) with the bottom-left
    quadrant raised by 2, plus N(0, 0.5^2) noise.
    """
    if kind in ("fl1d", "tf"):
        x = np.arange(n) / n
        y = np.sin(4 * np.pi * x) + 0.5 * rng.standard_normal(n)
        spec = TrendFilter(0 if kind == "fl1d" else order, n)
        backend = TrendFilterBackend(spec, fallback="lu")
        return y, spec, backend
    if kind == "fl2d-grid":
        side = int(round(np.sqrt(n)))
        r, c = np.divmod(np.arange(side * side), side)
        y = 2.0 * ((r >= side // 2) & (c < side // 2)) + 0.5 * rng.standard_normal(side * side)
        spec = FusedGraph(side * side, grid_edges(side, side))
        return y, spec, "graph"
    raise ValueError(f"unknown benchmark problem {kind!r}")


def run_bench(kind: str, sizes, steps: int = 100, seed: int = 0, order: int = 3, repeats: int = 3):
    """Returns (rows of (n, seconds, steps), fitted log-log slope).

    Each size reports the best of ``repeats`` runs, after one untimed run
    at the smallest size so that first-call costs are not counted.
    """
    rng = np.random.default_rng(seed)
    y, spec, backend = bench_problem(kind, min(sizes), np.random.default_rng(seed), order)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ConditioningWarning)
        run_path(y, spec, backend, max_steps=steps, store=False)
    rows = []
    for n in sizes:
        y, spec, backend = bench_problem(kind, n, rng, order)
        best = np.inf
        for _ in range(repeats):
            be = TrendFilterBackend(spec, fallback="lu") if isinstance(backend, TrendFilterBackend) else backend
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", ConditioningWarning)
                t0 = time.perf_counter()
                path = run_path(y, spec, be, max_steps=steps, store=False)
                best = min(best, time.perf_counter() - t0)
        rows.append((spec.p, best, len(path.knots)))
    slope = np.nan
    if len(rows) >= 2:
        slope = float(np.polyfit(np.log([r[0] for r in rows]), np.log([r[1] for r in rows]), 1)[0])
    return rows, slope


def cmd_bench(args) -> int:
    sizes = [int(float(s)) for s in args.sizes.split(",")]
    rows, slope = run_bench(args.problem, sizes, args.steps, args.seed, args.order, args.repeats)
    lines = ["n,seconds,steps"] + [f"{n},{fileio.fmt(t)},{k}" for n, t, k in rows]
    lines.append(f"# loglog_slope={slope:.4f}")
    text = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    sys.stdout.write(text)
    return 0


# -- argument parsing ---------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="genlasso-path", description="Generalized lasso solution paths.")
    ap.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("path", help="compute a solution path and write knots and segments")
    p.add_argument("--problem", required=True, choices=sorted(REQUIRED))
    p.add_argument("--y", required=True, help="response CSV (header line, one value per line)")
    p.add_argument("--X", help="design matrix CSV (header line, n rows of p values)")
    p.add_argument("--order", type=int, help="trend filtering order k (tf)")
    p.add_argument("--alpha", type=float, help="sparsity weight (sfl)")
    p.add_argument("--edges", help="edge list CSV with header i,j (flgraph, sfl)")
    p.add_argument("--D", help="penalty triplets CSV with header row,col,value (custom)")
    p.add_argument("--max-steps", type=int, default=2000)
    p.add_argument("--min-lambda", type=float, default=0.0)
    p.add_argument("--max-df", type=int)
    p.add_argument("--format", choices=["csv", "json"], default="csv")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_path)

    c = sub.add_parser("coef", help="primal coefficients from a stored path")
    c.add_argument("--path", required=True, help="directory written by the path command")
    at = c.add_mutually_exclusive_group(required=True)
    at.add_argument("--lambda", dest="lam", type=float)
    at.add_argument("--df", type=int)
    c.add_argument("--out", help="output CSV (default stdout)")
    c.set_defaults(func=cmd_coef)

    b = sub.add_parser("bench", help="time the first steps of a path at several sizes")
    b.add_argument("--problem", required=True, choices=["fl1d", "tf", "fl2d-grid"])
    b.add_argument("--sizes", default="1000,10000,100000")
    b.add_argument("--steps", type=int, default=100)
    b.add_argument("--order", type=int, default=3, help="trend filtering order (tf)")
    b.add_argument("--repeats", type=int, default=3, help="report the best of this many runs")
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--out", help="also write the table here")
    b.set_defaults(func=cmd_bench)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        ap.exit(EXIT_INPUT, f"{ap.prog}: error: {exc}\n")
    except (ParseError, RankDeficientDesign) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
