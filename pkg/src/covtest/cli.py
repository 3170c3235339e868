"""Command-line interface: ``covtest test | pathways | simulate``."""

from __future__ import annotations

import argparse
import logging
import os
import secrets
import sys

import numpy as np

from . import statistics as st
from .analysis import METHODS, covariance_test
from .errors import (
    AllPairsDegenerate,
    CovTestError,
    DegenerateInput,
    InvalidParams,
    MalformedMatrix,
)
from .genesets import parse_gmt, preprocess, run_pathways
from .matrix import Outcome, atomic_write_text, read_matrix, read_table
from .permutation import PermutationPlan
from .simulate import DEFAULT_METHODS, REPORT_COLUMNS, SimulationSpec, report_rows, run_trials

EXIT_OK, EXIT_INPUT, EXIT_NUMERIC = 0, 2, 3
RESULT_COLUMNS = ("statistic", "value", "p_value", "method", "H_used", "pair")

log = logging.getLogger("covtest")


# --------------------------------------------------------------------------
# Input helpers
# --------------------------------------------------------------------------


def _read_pairs(path) -> list[list[str]]:
    with open(path) as fh:
        rows = [line.rstrip("\r\n").split("\t") for line in fh]
    return [[c.strip() for c in r] for r in rows if any(c.strip() for c in r)]


def _align(path, rows: list[list[str]], sample_ids) -> list[str]:
    """One label per matrix sample, matched by id for two-column files."""
    if rows and len(rows[0]) >= 2:
        mapping = dict((r[0], r[1]) for r in rows if len(r) >= 2)
        if all(s in mapping for s in sample_ids):
            return [mapping[s] for s in sample_ids]
        missing = [s for s in sample_ids if s not in mapping]
        raise MalformedMatrix(f"{path}: no entry for sample(s) {', '.join(missing[:5])}")
    values = [r[0] for r in rows]
    if len(values) == len(sample_ids) + 1:
        values = values[1:]  # header line
    if len(values) != len(sample_ids):
        raise MalformedMatrix(f"{path}: {len(values)} values for {len(sample_ids)} samples")
    return values


def read_outcome(path, sample_ids) -> Outcome:
    """Continuous outcome: ``sample<TAB>value`` lines or one value per line."""
    tokens = _align(path, _read_pairs(path), sample_ids)
    try:
        values = [float(t) for t in tokens]
    except ValueError as exc:
        raise MalformedMatrix(f"{path}: {exc}") from None
    return Outcome.from_values(values)


def read_groups(path, sample_ids) -> Outcome:
    """Two-group labels, encoded as 1/n1 and -1/n2."""
    labels = _align(path, _read_pairs(path), sample_ids)
    try:
        labels = [int(x) for x in labels]
    except ValueError:
        pass
    return st.encode_two_group(labels)


def read_covariates(path, sample_ids) -> np.ndarray:
    rows, _, values = read_table(path)
    index = {r: i for i, r in enumerate(rows)}
    if all(s in index for s in sample_ids):
        return values[[index[s] for s in sample_ids]]
    if len(rows) == len(sample_ids):
        return values
    raise MalformedMatrix(f"{path}: covariate rows do not match the matrix samples")


def parse_methods(text: str | None, stats) -> dict[str, str]:
    """``auto``, a single method, or ``S=mcc,M=permutation``."""
    if not text:
        return {s: "auto" for s in stats}
    if "=" not in text:
        if text not in METHODS:
            raise InvalidParams(f"unknown method {text!r}")
        return {s: text for s in stats}
    out = {s: "auto" for s in stats}
    for item in text.split(","):
        key, _, val = item.partition("=")
        if key not in st.STATISTICS or val not in METHODS:
            raise InvalidParams(f"bad method override {item!r}")
        out[key] = val
    return out


def parse_stats(text: str) -> tuple[str, ...]:
    stats = tuple(s.strip().upper() for s in text.split(",") if s.strip())
    bad = [s for s in stats if s not in st.STATISTICS]
    if not stats or bad:
        raise InvalidParams(f"statistics must be drawn from S,Q,C,M; got {text!r}")
    return stats


def _threads(args) -> int:
    if args.threads is not None:
        return args.threads
    env = os.environ.get("COVTEST_THREADS")
    try:
        return max(1, int(env)) if env else 1
    except ValueError:
        raise InvalidParams(f"COVTEST_THREADS must be an integer, got {env!r}") from None


def _seed(args) -> int:
    if args.seed is not None:
        return args.seed
    seed = secrets.randbits(63)
    print(f"seed: {seed}", file=sys.stderr)
    return seed


def _emit(text: str, out) -> None:
    if out:
        atomic_write_text(out, text)
    else:
        sys.stdout.write(text)


def _load(args):
    X = read_matrix(args.matrix)
    if bool(args.outcome) == bool(args.groups):
        raise InvalidParams("give exactly one of --outcome and --groups")
    y = (read_outcome(args.outcome, X.sample_ids) if args.outcome
         else read_groups(args.groups, X.sample_ids))
    cov = read_covariates(args.covariates, X.sample_ids) if args.covariates else None
    if args.residualize_in_loop and args.residualize:
        raise InvalidParams("--residualize and --residualize-in-loop are exclusive")
    Xp = preprocess(X, y, None if args.residualize_in_loop else cov,
                    scale=args.scale_rows, residualize_on_y=args.residualize)
    return Xp, y, cov


def _plan(args, seed: int, threads: int) -> PermutationPlan:
    return PermutationPlan(H=args.H, seed=seed, threads=threads,
                           residualize_in_loop=False, keep_null=bool(getattr(args, "dump_null", None)))


# --------------------------------------------------------------------------
# Subcommands
# --------------------------------------------------------------------------


def cmd_test(args) -> int:
    stats = parse_stats(args.stats)
    methods = parse_methods(args.method, stats)
    seed, threads = _seed(args), _threads(args)
    X, y, cov = _load(args)
    results = covariance_test(X, y, stats, methods, _plan(args, seed, threads),
                              covariates=cov, residualize_in_loop=args.residualize_in_loop)
    lines = ["\t".join(RESULT_COLUMNS)]
    for r in results:
        pair = "NA" if r.pair is None else f"{X.feature_ids[r.pair[0]]}:{X.feature_ids[r.pair[1]]}"
        lines.append("\t".join([r.statistic, f"{r.value:.6g}", f"{r.p_value:.6e}", r.method,
                                "NA" if r.H_used is None else str(r.H_used), pair]))
    if args.dump_null:
        dumps = ["statistic\tindex\tvalue"]
        for r in results:
            if r.null_sample is not None:
                dumps += [f"{r.statistic}\t{i}\t{v:.6g}" for i, v in enumerate(r.null_sample)]
        atomic_write_text(args.dump_null, "\n".join(dumps) + "\n")
    _emit("\n".join(lines) + "\n", args.out)
    return EXIT_OK


def cmd_pathways(args) -> int:
    stats = parse_stats(args.stats)
    methods = parse_methods(args.method, stats)
    seed, threads = _seed(args), _threads(args)
    catalog = parse_gmt(args.gmt)
    X, y, cov = _load(args)
    table = run_pathways(X, y, catalog, stats, _plan(args, seed, threads), cov,
                         methods=methods, residualize_in_loop=args.residualize_in_loop,
                         threads=threads)
    n_run = len({r.set_id for r in table.rows})
    for sid, why in table.skipped:
        print(f"warning: skipped set {sid}: {why}", file=sys.stderr)
    print(f"sets run: {n_run}, skipped: {len(table.skipped)}", file=sys.stderr)
    _emit(table.to_tsv(), args.out)
    if args.json:
        atomic_write_text(args.json, table.to_json())
    return EXIT_OK


def cmd_simulate(args) -> int:
    stats = parse_stats(args.stats)
    methods = dict(DEFAULT_METHODS)
    if args.method:
        methods.update(parse_methods(args.method, stats))
    seed, threads = _seed(args), _threads(args)
    spec = SimulationSpec(model=args.model, p=args.p, n1=args.n1, n2=args.n2, n=args.n,
                          theta1=args.theta1, theta2=args.theta2, rho=args.rho,
                          replicates=args.reps, alpha=args.alpha,
                          plan=PermutationPlan(H=args.H, seed=seed), seed=seed,
                          methods={s: methods[s] for s in stats}, statistics=stats,
                          model4_variant=args.model4_variant, threads=threads)
    report = run_trials(spec)
    lines = ["\t".join(REPORT_COLUMNS)] + ["\t".join(r) for r in report_rows(report)]
    _emit("\n".join(lines) + "\n", args.out)
    print(f"{report.replicates} replicates in {report.runtime:.1f} s", file=sys.stderr)
    return EXIT_OK


# --------------------------------------------------------------------------
# Parser
# --------------------------------------------------------------------------


def _common(p: argparse.ArgumentParser, H_default: int) -> None:
    p.add_argument("--stats", default="S,Q,C,M", help="comma-separated subset of S,Q,C,M")
    p.add_argument("--method", default=None,
                   help="auto, one method for all, or overrides like S=normal,M=permutation")
    p.add_argument("--H", type=int, default=H_default, help="number of permutations")
    p.add_argument("--seed", type=int, default=None, help="RNG seed (drawn and printed if omitted)")
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--threads", type=int, default=None,
                   help="worker threads (default: $COVTEST_THREADS or 1)")
    p.add_argument("--out", default=None, help="output path (default: stdout)")


def _inputs(p: argparse.ArgumentParser) -> None:
    p.add_argument("--matrix", required=True, help="features x samples TSV")
    p.add_argument("--outcome", help="continuous outcome file")
    p.add_argument("--groups", help="two-group label file")
    p.add_argument("--covariates", help="samples x covariates TSV")
    p.add_argument("--scale-rows", action="store_true", help="scale rows to unit variance")
    p.add_argument("--residualize", action="store_true",
                   help="residualize rows on the covariates and on y before testing")
    p.add_argument("--residualize-in-loop", action="store_true",
                   help="for Q, redo the residualization within every permutation")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="covtest",
                                     description="Tests for outcome-dependent covariance.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    t = sub.add_parser("test", help="test one feature set")
    _inputs(t)
    _common(t, 10_000)
    t.add_argument("--dump-null", default=None, help="write the permutation null sample here")
    t.set_defaults(func=cmd_test)

    pw = sub.add_parser("pathways", help="test every set of a GMT catalog")
    _inputs(pw)
    pw.add_argument("--gmt", required=True)
    pw.add_argument("--json", default=None, help="optional JSON copy of the table")
    _common(pw, 10_000)
    pw.set_defaults(func=cmd_pathways)

    sm = sub.add_parser("simulate", help="rejection rates under a simulation model")
    sm.add_argument("--model", type=int, required=True, choices=range(1, 6))
    sm.add_argument("--n1", type=int)
    sm.add_argument("--n2", type=int)
    sm.add_argument("--n", type=int)
    sm.add_argument("--p", type=int, required=True)
    sm.add_argument("--theta1", type=float, default=2.0)
    sm.add_argument("--theta2", type=float, default=None)
    sm.add_argument("--rho", type=float, default=0.0)
    sm.add_argument("--reps", type=int, default=1000)
    sm.add_argument("--model4-variant", choices=("convex", "printed"), default="convex")
    _common(sm, 1000)
    sm.set_defaults(func=cmd_simulate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    try:
        return args.func(args)
    except (DegenerateInput, AllPairsDegenerate, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (CovTestError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
