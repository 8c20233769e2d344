"""Command-line interface: run experiments, aggregate reports, theory checks."""

from __future__ import annotations

import argparse
import json
import sys

from fire_mf.benchmarks import get_problem, list_problems
from fire_mf.runner import (
    AGGREGATIONS,
    METRICS,
    THEORY_CHECKS,
    RunConfig,
    report,
    run_experiment,
    theory_check,
)


def _cmd_run(args: argparse.Namespace) -> int:
    config = RunConfig.from_yaml(args.config)
    rows = run_experiment(config, resume=args.resume)
    ok = sum(1 for r in rows if r.get("ok"))
    failed = sum(1 for r in rows if not r.get("ok"))
    print(f"{len(rows)} records in {config.output_dir} ({ok} ok, {failed} failed)")
    return 0


def _cmd_report(args: argparse.Namespace) -> int:
    payload = report(args.results_dir, metric=args.metric, aggregation=args.agg)
    print(json.dumps(payload["table"], indent=2))
    print(f"wrote {payload['csv_path']} and {payload['json_path']}")
    return 0


def _cmd_theory_check(args: argparse.Namespace) -> int:
    result = theory_check(args.name, samples=args.samples, seed=args.seed)
    print(json.dumps(result, indent=2))
    return 0 if result["passed"] else 1


def _cmd_list_problems(args: argparse.Namespace) -> int:
    for name in list_problems():
        p = get_problem(name)
        print(f"{name:22s} d={p.d:<3d} T={p.T}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fire-mf", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute an experiment grid from a YAML config")
    p_run.add_argument("--config", required=True)
    p_run.add_argument("--resume", action="store_true",
                       help="continue into an output directory that already has records")
    p_run.set_defaults(func=_cmd_run)

    p_rep = sub.add_parser("report", help="aggregate a run's records into report files")
    p_rep.add_argument("--in", dest="results_dir", required=True)
    p_rep.add_argument("--metric", choices=METRICS, default="nrmse")
    p_rep.add_argument("--agg", choices=AGGREGATIONS, default="elo")
    p_rep.set_defaults(func=_cmd_report)

    p_thy = sub.add_parser("theory-check", help="run an empirical risk-ordering check")
    p_thy.add_argument("--name", choices=THEORY_CHECKS, required=True)
    p_thy.add_argument("--samples", type=int, default=100_000)
    p_thy.add_argument("--seed", type=int, default=0)
    p_thy.set_defaults(func=_cmd_theory_check)

    p_list = sub.add_parser("list-problems", help="list the benchmark catalog")
    p_list.set_defaults(func=_cmd_list_problems)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, KeyError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
