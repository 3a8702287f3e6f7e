"""Command-line interface: ``polydec {tensorize,decouple,verify,info}``.

Exit codes: 0 success, 2 unreadable input, 3 dimension mismatch,
4 residual above tolerance, 5 solver budget exhausted.
"""
from __future__ import annotations

import argparse
import logging
import os
import sys
from typing import Sequence

from . import io
from .decouple import (
    DecoupleReport,
    coupled_psym_cpd,
    decouple_via_J,
    decouple_via_Q,
    verify_relations,
)
from .exceptions import DimensionError
from .polymap import PolyMap, map_residual, report_compression
from .tensorize import (
    build_J,
    build_Q,
    build_sample_plan,
    build_Ts,
    default_points,
    delta,
    rank_bound,
)

EXIT_OK, EXIT_PARSE, EXIT_DIM, EXIT_RESIDUAL, EXIT_BUDGET = 0, 2, 3, 4, 5
VERIFY_TOL = 1e-8


def _default_seed() -> int:
    raw = os.environ.get("POLYDEC_SEED")
    if raw is None:
        return 0
    try:
        return int(raw)
    except ValueError:
        raise SystemExit(f"POLYDEC_SEED must be an integer, got {raw!r}")


def _plan_from_args(args, f: PolyMap):
    if args.points is not None:
        pts = io.load_points(args.points)
    else:
        pts = default_points(f.m, f.d, args.sample, seed=args.seed)
    return build_sample_plan(pts, f.m, f.d)


def _add_plan_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_mutually_exclusive_group()
    g.add_argument("--points", help="JSON file with sampling points")
    g.add_argument(
        "--sample", type=int, default=None,
        help="number of random sampling points (default: the rank bound M)",
    )


def cmd_tensorize(args) -> int:
    f = io.load_polymap(args.input)
    doc: dict = {"which": args.which}
    if args.which == "q":
        doc["Q"] = io.tensor_to_dict(build_Q(f))
    elif args.which == "j":
        plan = _plan_from_args(args, f)
        doc["J"] = io.tensor_to_dict(build_J(f, plan))
        doc["plan"] = io.plan_to_dict(plan)
    else:
        doc["T"] = [
            {"degree": s, **io.tensor_to_dict(build_Ts(f, s))} for s in range(1, f.d + 1)
        ]
    io.write_text(args.output, io.dumps(doc))
    return EXIT_OK


def _run_method(args, f: PolyMap, rank: int) -> DecoupleReport:
    opts = dict(n_restarts=args.restarts, seed=args.seed)
    if args.max_iter is not None:
        opts["max_iter"] = args.max_iter
    if args.method == "q":
        return decouple_via_Q(f, rank, **opts)
    plan = _plan_from_args(args, f)
    if args.method == "j":
        return decouple_via_J(f, plan, rank, **opts)
    return coupled_psym_cpd(f, rank, plan=plan, **opts)


def cmd_decouple(args) -> int:
    f = io.load_polymap(args.input)
    if args.rank is None and args.rank_sweep is None:
        raise SystemExit("decouple: give --rank or --rank-sweep")
    if any(r is not None and r < 1 for r in (args.rank, args.rank_sweep)):
        raise SystemExit("decouple: ranks must be >= 1")
    sweep = []
    chosen: DecoupleReport | None = None
    if args.rank_sweep is not None:
        for r in range(1, args.rank_sweep + 1):
            rep = _run_method(args, f, r)
            sweep.append(
                {k: rep.to_dict()[k] for k in ("rank", "tensor_fit", "map_residual", "converged")}
            )
            if args.rank == r or (
                args.rank is None and chosen is None and rep.map_residual <= args.accept_tol
            ):
                chosen = rep
            if args.rank is None and r == args.rank_sweep and chosen is None:
                chosen = rep
    if chosen is None:
        chosen = _run_method(args, f, args.rank)

    report = chosen.to_dict()
    # recomputed from the model as written, so readers can re-check it
    report["map_residual"] = map_residual(f, chosen.model)
    if sweep:
        report["sweep"] = sweep
    metadata = {
        "method": chosen.method,
        "residuals": {
            "map_residual": report["map_residual"],
            "tensor_fit": chosen.tensor_fit,
            "structure_residual": chosen.structure_residual,
        },
        "seed": args.seed,
    }
    model_doc = io.model_to_dict(chosen.model, metadata)
    if args.output is not None:
        io.write_text(args.output, io.dumps(model_doc))
    if args.report is not None:
        io.write_text(args.report, io.dumps(report))
    io.write_text(None, io.dumps({"report": report, "model": model_doc}))

    if report["map_residual"] <= args.accept_tol:
        return EXIT_OK
    if not chosen.converged:
        return EXIT_BUDGET
    return EXIT_RESIDUAL


def cmd_verify(args) -> int:
    f = io.load_polymap(args.input)
    model = io.load_model(args.model) if args.model is not None else None
    plan = _plan_from_args(args, f)
    record = verify_relations(f, plan, model)
    doc = record.to_dict()
    doc["passed"] = record.passed(VERIFY_TOL)
    io.write_text(args.output, io.dumps(doc))
    return EXIT_OK if doc["passed"] else EXIT_RESIDUAL


def cmd_info(args) -> int:
    f = io.load_polymap(args.input)
    coupled, decoupled = report_compression(f.m, f.n, f.d, args.rank)
    doc = {
        "m": f.m,
        "n": f.n,
        "d": f.d,
        "terms": len(f),
        "delta": delta(f.m, f.d),
        "M": rank_bound(f.m, f.d),
        "rank": args.rank,
        "coupled_parameters": coupled,
        "decoupled_parameters": decoupled,
        "with_constant_terms": list(
            report_compression(f.m, f.n, f.d, args.rank, include_constants=True)
        ),
    }
    io.write_text(args.output, io.dumps(doc))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="polydec", description="Decouple multivariate polynomial maps."
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)
    seed = _default_seed()

    p = sub.add_parser("tensorize", help="write Q, J or the per-degree tensors as JSON")
    p.add_argument("input", help="polynomial map file, '-' for stdin")
    p.add_argument("--which", choices=("q", "j", "ts"), default="q")
    _add_plan_flags(p)
    p.add_argument("--seed", type=int, default=seed)
    p.add_argument("-o", "--output", help="output file (default: stdout)")
    p.set_defaults(func=cmd_tensorize)

    p = sub.add_parser("decouple", help="compute a decoupled model")
    p.add_argument("input", help="polynomial map file, '-' for stdin")
    p.add_argument("--rank", type=int, help="number of branches r")
    p.add_argument("--method", choices=("j", "q", "coupled"), default="coupled")
    p.add_argument("--restarts", type=int, default=10)
    p.add_argument("--max-iter", type=int, default=None)
    p.add_argument("--seed", type=int, default=seed)
    p.add_argument("--rank-sweep", type=int, metavar="R_MAX", help="also fit r = 1..R_MAX")
    p.add_argument("--accept-tol", type=float, default=1e-6)
    _add_plan_flags(p)
    p.add_argument("-o", "--output", help="write the model file here")
    p.add_argument("--report", help="write the report here")
    p.set_defaults(func=cmd_decouple)

    p = sub.add_parser("verify", help="check the tensor identities numerically")
    p.add_argument("input", help="polynomial map file, '-' for stdin")
    p.add_argument("--model", help="model file to check against the polynomial")
    _add_plan_flags(p)
    p.add_argument("--seed", type=int, default=seed)
    p.add_argument("-o", "--output", help="output file (default: stdout)")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("info", help="dimensions and parameter counts")
    p.add_argument("input", help="polynomial map file, '-' for stdin")
    p.add_argument("--rank", type=int, default=1)
    p.add_argument("-o", "--output", help="output file (default: stdout)")
    p.set_defaults(func=cmd_info)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except DimensionError as exc:
        print(f"polydec: dimension error: {exc}", file=sys.stderr)
        return EXIT_DIM
    except ValueError as exc:
        print(f"polydec: cannot parse input: {exc}", file=sys.stderr)
        return EXIT_PARSE


if __name__ == "__main__":
    sys.exit(main())
