"""``dynfl`` command line: run, compare and verify."""

from __future__ import annotations

import argparse
import sys

import numpy as np

from . import harness
from .errors import AuditFailure, InputError
from .instance import LevelGeometry
from .verification import MAX_ORACLE_CLIENTS, oracle_sweep

EXIT_OK, EXIT_AUDIT, EXIT_INPUT = 0, 2, 3


def _points(args) -> np.ndarray:
    if args.points and args.synthetic:
        raise InputError("give --points or --synthetic, not both")
    if args.points:
        return harness.ingest(args.points)
    if args.synthetic:
        cfg = harness.parse_synthetic(args.synthetic)
        return harness.synthetic_points(cfg["n"], cfg.get("clusters", 10), cfg.get("dim", 2),
                                        seed=args.seed)
    raise InputError("one of --points or --synthetic is required")


def _add_source(p):
    p.add_argument("--points", help="CSV file, one point per line")
    p.add_argument("--synthetic", metavar="n=N,clusters=K",
                   help="seeded Gaussian mixture instead of a point file")
    p.add_argument("--seed", type=int, default=0)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dynfl", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run one algorithm over a sliding-window stream")
    _add_source(p)
    p.add_argument("--facility-fraction", type=float, default=0.05)
    p.add_argument("--window", type=int, default=1000)
    p.add_argument("--algorithm", choices=harness.ALGORITHMS, default="nice")
    p.add_argument("--mu", type=int, default=3)
    p.add_argument("--epsilon", type=float, default=1.0)
    p.add_argument("--audit", default="none", help="none, all or every:<N>")
    p.add_argument("--costs", help="per-facility opening costs, one per line")
    p.add_argument("--out", required=True, help="metrics CSV to write")

    p = sub.add_parser("compare", help="average cost and recourse ratios of two runs")
    p.add_argument("--a", required=True)
    p.add_argument("--b", required=True)

    p = sub.add_parser("verify", help="check the blocking detector against subset search")
    _add_source(p)
    p.add_argument("--max-clients", type=int, default=MAX_ORACLE_CLIENTS)
    p.add_argument("--trials", type=int, default=200)
    return parser


def _run(args) -> int:
    points = _points(args)
    spec = harness.StreamSpec(args.window, args.facility_fraction, args.seed)
    try:
        geometry = LevelGeometry(args.epsilon, args.mu)
    except ValueError as exc:
        raise InputError(str(exc)) from None
    costs = None
    if args.costs:
        fac, _ = harness.split_facilities(points, spec.fraction, spec.seed)
        costs = harness.load_costs(args.costs, len(fac))
    records = harness.run(points, spec, args.algorithm, geometry, args.audit, costs=costs)
    harness.write_records(args.out, records)
    last = records[-1]
    print(f"{len(records)} updates, final cost {last.cost:.6g}, "
          f"recourse {last.client_recourse}+{last.facility_recourse}, open {last.open}")
    return EXIT_OK


def _compare(args) -> int:
    cmp = harness.compare_runs(harness.read_records(args.a), harness.read_records(args.b))
    print(f"phi={cmp.phi!r} psi={cmp.psi!r}")
    return EXIT_OK


def _verify(args) -> int:
    if not 1 <= args.max_clients <= MAX_ORACLE_CLIENTS:
        raise InputError(f"--max-clients must be in [1, {MAX_ORACLE_CLIENTS}]")
    points = _points(args) if (args.points or args.synthetic) else None
    agree, pairs, first = oracle_sweep(args.trials, args.seed, points, args.max_clients)
    print(f"{agree}/{args.trials} states agree")
    if first is not None:
        print(f"first mismatch: state {first[0]}, (facility, level, expected, got) = {first[1]}")
        return EXIT_AUDIT
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    handler = {"run": _run, "compare": _compare, "verify": _verify}[args.command]
    try:
        return handler(args)
    except AuditFailure as exc:
        print(f"dynfl: {exc}", file=sys.stderr)
        return EXIT_AUDIT
    except (InputError, OSError) as exc:
        print(f"dynfl: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
