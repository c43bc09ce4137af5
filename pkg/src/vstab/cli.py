"""Command-line front end.

Usage::

    vstab analyze MATRIX.mtx [--out STEM] [sweep flags]
    vstab classify MATRIX.mtx (--vector VEC.mtx | --basis-index K) [--out STEM]
    vstab verify KIND [--count N] [--dim n] [--seed s]

Exit codes: 0 pass, 2 convergence flagged, 3 invariant violation,
4 usage or parse error, 5 singular input.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .errors import (
    BadParameter,
    InconsistentVerdict,
    MatrixMarketError,
    SingularOperator,
    VstabError,
)
from .limits import SweepConfig, extract_limits, sweep
from .mmio import file_checksum, read_square, read_vector
from .qsolver import SolveConfig
from .report import (
    EXIT_CONVERGENCE,
    EXIT_INVARIANT,
    EXIT_OK,
    EXIT_SINGULAR,
    EXIT_USAGE,
    analyze,
    config_echo,
    verdict_report,
    verdict_text,
)
from .subspaces import classify_vector
from .substrate import OperatorMatrix, Tolerances
from .suites import SUITES, run_suite

log = logging.getLogger("vstab")


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad usage; 2 means "convergence flagged" here
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _add_sweep_flags(p):
    g = p.add_argument_group("sweep")
    g.add_argument("--t-start", type=float, default=1.0, help="first t of the sweep (default 1)")
    g.add_argument("--ratio", type=float, default=0.5, help="geometric t ratio (default 0.5)")
    g.add_argument("--t-min", type=float, default=1e-8, help="smallest t (default 1e-8)")
    g.add_argument("--fp-tol", type=float, default=1e-11, help="fixed-point tolerance (default 1e-11)")
    g.add_argument("--rank-tol", type=float, default=1e-8, help="relative rank threshold (default 1e-8)")
    g.add_argument("--horizon", type=int, default=256, help="power-orbit horizon (default 256)")
    g.add_argument("--seed", type=int, default=0, help="seed for probe vectors (default 0)")
    g.add_argument("--out", type=Path, default=None,
                   help="write STEM.txt and STEM.json instead of printing the report")


def build_parser():
    parser = _Parser(prog="vstab", description="Stability analysis of a linear operator through "
                     "the t-regularized fixed-point equation Q = V*(Q+t)(I+tQ)^{-1}V.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("analyze", help="sweep, limits, trichotomy, verdicts and invariant checks")
    p.add_argument("matrix", type=Path, help="Matrix Market file with a square invertible matrix")
    p.add_argument("--probes", type=int, default=4, help="random probe vectors to classify (default 4)")
    _add_sweep_flags(p)

    p = sub.add_parser("classify", help="classify one vector against the stability sets")
    p.add_argument("matrix", type=Path)
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--vector", type=Path, help="Matrix Market n x 1 array")
    src.add_argument("--basis-index", type=int, help="use the standard basis vector e_k (0-based)")
    _add_sweep_flags(p)

    p = sub.add_parser("verify", help="run a seeded oracle-equivalence suite")
    p.add_argument("kind", choices=sorted(SUITES))
    p.add_argument("--count", type=int, default=10)
    p.add_argument("--dim", type=int, default=8)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=1, help="threads for independent cases")
    p.add_argument("--out", type=Path, default=None, help="write the summary to STEM.txt/.json")
    return parser


def _sweep_config(args):
    tol = Tolerances(rank_tol=args.rank_tol)
    solve = SolveConfig(fp_tol=args.fp_tol, tol=tol)
    return SweepConfig(t_start=args.t_start, ratio=args.ratio, t_min=args.t_min, solve=solve)


def _load_operator(path, tol):
    A = read_square(path)
    return OperatorMatrix.from_array(A, tol), {"path": str(path), "sha256": file_checksum(path)}


def _emit(text, payload, out):
    if out is None:
        sys.stdout.write(text)
        return
    stem = out.with_suffix("") if out.suffix in (".txt", ".json") else out
    stem.parent.mkdir(parents=True, exist_ok=True)
    stem.with_suffix(".txt").write_text(text, encoding="utf-8")
    stem.with_suffix(".json").write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n",
                                         encoding="utf-8")
    sys.stdout.write(f"wrote {stem.with_suffix('.txt')} and {stem.with_suffix('.json')}\n")


def cmd_analyze(args) -> int:
    cfg = _sweep_config(args)
    V, info = _load_operator(args.matrix, cfg.solve.tol)
    if args.horizon < 16:
        raise BadParameter("--horizon must be at least 16")
    rep = analyze(V, cfg, horizon=args.horizon, seed=args.seed, probes=args.probes, input_info=info)
    if args.out is None:
        sys.stdout.write(rep.to_text())
    else:
        txt, js = rep.write(args.out)
        sys.stdout.write(f"wrote {txt} and {js}\n")
    return rep.exit_code


def cmd_classify(args) -> int:
    cfg = _sweep_config(args)
    V, info = _load_operator(args.matrix, cfg.solve.tol)
    if args.vector is not None:
        x = read_vector(args.vector)
        label = str(args.vector)
    else:
        k = args.basis_index
        if not 0 <= k < V.dim:
            raise BadParameter(f"--basis-index must lie in [0, {V.dim - 1}]")
        x = np.zeros(V.dim, complex)
        x[k] = 1.0
        label = f"e[{k}]"
    if x.shape[0] != V.dim:
        raise BadParameter(f"vector has length {x.shape[0]}, matrix has dim {V.dim}")
    bundle = extract_limits(sweep(V, cfg), cfg)
    echo = config_echo(cfg, args.horizon, args.seed, 0)
    try:
        v = classify_vector(V, x, bundle, args.horizon, cfg.solve.tol)
    except InconsistentVerdict as exc:
        payload = {"vector": label, "error": str(exc), "evidence": exc.evidence, "input": info}
        _emit(f"vector {label}: inconsistent verdict: {exc}\n", payload, args.out)
        return EXIT_INVARIANT
    _emit(verdict_text(v, label), verdict_report(v, label, info, echo), args.out)
    return EXIT_OK


def cmd_verify(args) -> int:
    res = run_suite(args.kind, args.count, args.dim, args.seed, args.workers)
    payload = {"kind": res.kind, "count": res.count, "dim": res.dim, "seed": res.seed,
               "worst": res.worst, "passed": res.passed,
               "thresholds": {m.name: m.threshold for m in res.metrics},
               "failures": [[k, msg] for k, msg in res.failures]}
    _emit(res.summary(), payload, args.out)
    return EXIT_OK if res.passed else EXIT_INVARIANT


COMMANDS = {"analyze": cmd_analyze, "classify": cmd_classify, "verify": cmd_verify}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except MatrixMarketError as exc:
        print(f"vstab: parse error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SingularOperator as exc:
        print(f"vstab: singular input: {exc}", file=sys.stderr)
        return EXIT_SINGULAR
    except BadParameter as exc:
        print(f"vstab: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except VstabError as exc:
        # a numerical failure outside the sweep's own flagging
        print(f"vstab: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_CONVERGENCE


if __name__ == "__main__":
    sys.exit(main())
