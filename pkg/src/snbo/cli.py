"""Command line: ``snbo bench run|summarize`` and ``snbo optimize``."""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys

from . import bench
from .core import Bounds, SnboConfig
from .optimizer import run_snbo
from .problems import PROBLEM_NAMES, ExternalObjective, ObjectiveError, make_problem

log = logging.getLogger("snbo")

_SNBO_FIELDS = {f.name for f in dataclasses.fields(SnboConfig)} - {"n_dims", "n_max", "seed"}
_SUITE_FIELDS = {f.name for f in dataclasses.fields(bench.SuiteConfig)}


def suite_from_file(path) -> bench.SuiteConfig:
    """Suite fields plus any SnboConfig hyperparameters at the top level."""
    with open(path) as fh:
        data = json.load(fh)
    overrides = dict(data.pop("snbo", {}))
    for key in list(data):
        if key in _SNBO_FIELDS:
            overrides[key] = data.pop(key)
    unknown = set(data) - _SUITE_FIELDS
    if unknown:
        raise ValueError(f"unknown suite config keys: {sorted(unknown)}")
    return bench.SuiteConfig(**data, snbo=overrides)


def cmd_bench_run(args) -> int:
    suite = suite_from_file(args.config)
    if args.repeats is not None:
        suite.n_repeats = args.repeats
    suite.output_dir = args.out
    report = bench.run_suite(suite, parallel=args.parallel)
    print(bench.format_summary(report.summary))
    print(f"artifacts written to {args.out}")
    for run in report.failures:
        print(f"FAILED {run.problem} {run.method} repeat {run.repeat}: {run.error}", file=sys.stderr)
    return 1 if report.failures else 0


def cmd_bench_summarize(args) -> int:
    print(bench.format_summary(bench.summarize_dir(args.input)))
    return 0


def cmd_optimize(args) -> int:
    overrides = {}
    if args.config:
        with open(args.config) as fh:
            overrides = json.load(fh)
    overrides.update(n_dims=args.dims, n_max=args.budget, seed=args.seed)
    config = SnboConfig.from_dict(overrides)

    if args.problem.lower() in PROBLEM_NAMES:
        objective = make_problem(args.problem, args.dims).objective()
        closer = None
    else:
        bounds = Bounds.uniform(args.lower, args.upper, args.dims)
        objective = closer = ExternalObjective(args.problem, bounds, timeout=args.timeout)
    try:
        result = run_snbo(objective, config)
    except ObjectiveError as e:
        print(f"run aborted: {e}", file=sys.stderr)
        return 2
    finally:
        if closer is not None:
            closer.close()

    out = {
        "problem": objective.name,
        "best_y": result.best_y,
        "best_x": [float(v) for v in result.best_x],
        "n_evals": result.n_evals_used,
        "restarts": result.record.restarts,
        "wall_time_s": result.record.wall_time,
    }
    if args.history:
        with open(args.history, "w") as fh:
            fh.write("eval_index,value,running_best\n")
            for i, v, b in result.record.history:
                fh.write(f"{i},{v:.17g},{b:.17g}\n")
    print(json.dumps(out, indent=1))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="snbo", description=__doc__)
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    b = sub.add_parser("bench", help="benchmark suites")
    bsub = b.add_subparsers(dest="bench_command", required=True)
    run = bsub.add_parser("run", help="run a suite and write CSV/JSON artifacts")
    run.add_argument("--config", required=True)
    run.add_argument("--out", required=True)
    run.add_argument("--repeats", type=int)
    run.add_argument("--parallel", type=int, default=1)
    run.set_defaults(func=cmd_bench_run)
    summ = bsub.add_parser("summarize", help="summary table from a suite output directory")
    summ.add_argument("--in", dest="input", required=True)
    summ.set_defaults(func=cmd_bench_summarize)

    opt = sub.add_parser("optimize", help="single SNBO run")
    opt.add_argument("--problem", required=True,
                     help=f"one of {', '.join(PROBLEM_NAMES)}, or a command speaking the line protocol")
    opt.add_argument("--dims", type=int, required=True)
    opt.add_argument("--budget", type=int, required=True)
    opt.add_argument("--seed", type=int, default=0)
    opt.add_argument("--config", help="JSON file with SnboConfig fields")
    opt.add_argument("--lower", type=float, default=0.0, help="external objectives: lower bound")
    opt.add_argument("--upper", type=float, default=1.0, help="external objectives: upper bound")
    opt.add_argument("--timeout", type=float, default=60.0, help="external objectives: seconds per evaluation")
    opt.add_argument("--history", help="write the convergence history CSV here")
    opt.set_defaults(func=cmd_optimize)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(name)s: %(message)s")
    try:
        return args.func(args)
    except (ValueError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
