"""Command-line entry point.

``ncerg run --config path --suite name --out dir [--seed N]`` executes a
suite and prints one PASS/FAIL line per check; ``ncerg schema`` prints the
CSV/JSON schemas.  Exit codes: 0 all checks pass, 1 a check failed,
2 configuration or numerical error.
"""
from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace

from .averaging import QuadratureError
from .experiments import (
    ConfigError,
    ExperimentConfig,
    SUITE_NAMES,
    build_schemas,
    emit_plot_data,
    run,
)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ncerg",
        description="run verification suites on tracial-algebra flow averages",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    prun = sub.add_parser("run", help="execute a suite and write a report")
    prun.add_argument("--config", help="JSON config file (defaults used if omitted)")
    prun.add_argument("--suite", required=True, choices=SUITE_NAMES)
    prun.add_argument("--out", required=True, help="output directory")
    prun.add_argument("--seed", type=int, default=None, help="override the config seed")

    sub.add_parser("schema", help="print CSV/JSON schemas")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    if args.command == "schema":
        print(json.dumps(build_schemas(), indent=2, sort_keys=True))
        return 0

    try:
        cfg = (
            ExperimentConfig.from_file(args.config)
            if args.config
            else ExperimentConfig()
        )
        if args.seed is not None:
            cfg = replace(cfg, seed=args.seed)
        report = run(cfg, args.suite, args.out)
        emit_plot_data(report)
    except (ConfigError, QuadratureError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    for name in sorted(report.passed):
        print(("PASS " if report.passed[name] else "FAIL ") + name)
    print(f"report: {report.outdir / 'report.json'} ({report.wall_time_s:.1f}s)")
    return 0 if report.ok else 1


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
