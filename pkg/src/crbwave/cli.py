"""Command-line entry point.

    crbwave <command> --config cfg.json [--seed S] [--out-dir D] [--scenarios K]

Exit codes: 0 success, 2 configuration error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import sys

from .experiments import COMMANDS, ExperimentFailure, ExperimentSpec, load_config, run_command
from .scenario import ConfigError

EXIT_CONFIG = 2
EXIT_NUMERICAL = 3


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="crbwave", description="CRLB-driven MIMO-OFDM sensing waveform design")
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", help="JSON experiment configuration (defaults to the desk-scale setup)")
    parser.add_argument("--seed", type=int, help="override the configured seed")
    parser.add_argument("--out-dir", default="results", help="output directory (default: results)")
    parser.add_argument("--scenarios", type=int, help="override the number of scenarios")
    parser.add_argument("--workers", type=int, help="worker processes for scenario-level parallelism")
    parser.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        spec = load_config(args.config) if args.config else ExperimentSpec()
        overrides = {}
        if args.seed is not None:
            overrides["seed"] = args.seed
        if args.scenarios is not None:
            overrides["nScenarios"] = args.scenarios
        if args.workers is not None:
            overrides["workers"] = args.workers
        if overrides:
            spec = dataclasses.replace(spec, **overrides)
        path = run_command(args.command, spec, args.out_dir)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ExperimentFailure as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
