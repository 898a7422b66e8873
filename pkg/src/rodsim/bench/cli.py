"""``rodsim`` command line."""
from __future__ import annotations

import argparse
import logging
import sys

from ..errors import ConfigError
from .config import EXPERIMENTS, format_defaults, load_config
from .experiments import RUNNERS, SOLVER_ERRORS
from .output import write_result

EXIT_OK, EXIT_SOLVER, EXIT_CONFIG = 0, 2, 3


def _parser():
    p = argparse.ArgumentParser(prog="rodsim", description="SE(3) rod benchmark runner")
    p.add_argument("-v", "--verbose", action="store_true", help="log solver progress")
    sub = p.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run one experiment")
    run.add_argument("experiment", choices=EXPERIMENTS)
    run.add_argument("--config", help="INI file with experiment sections (defaults if omitted)")
    run.add_argument("--out", required=True, help="output directory")
    run.add_argument("--jobs", type=int, default=1, help="worker processes for parameter sweeps")
    sub.add_parser("list", help="list experiments and their default configs")
    return p


def main(argv=None) -> int:
    try:
        args = _parser().parse_args(argv)
    except SystemExit as exc:  # argparse reports usage errors with exit code 2
        return EXIT_CONFIG if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    if args.command == "list":
        for name in EXPERIMENTS:
            print(format_defaults(name))
            print()
        return EXIT_OK
    try:
        if args.jobs < 1:
            raise ConfigError("--jobs must be at least 1")
        cfg = load_config(args.config, args.experiment)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        result = RUNNERS[args.experiment](cfg, jobs=args.jobs)
    except SOLVER_ERRORS as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    paths = write_result(result, args.out)
    for key, value in result.summary.items():
        print(f"{key}: {value}")
    print(f"wrote {len(paths)} files to {args.out}")
    if result.failures:
        for msg in result.failures:
            print(f"solver failure: {msg}", file=sys.stderr)
        return EXIT_SOLVER
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
