"""Command line entry point.

Subcommands mirror the pipeline stages; every RunConfig field is exposed as
a flag, and a flat key = value config file can set any of them (flags win).
Exit codes: 0 success, 1 input or config problem, 2 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import fields

import numpy as np

from .ingest import DataError
from .pipeline import (ConfigError, NumericalError, RunConfig, StageError,
                       coerce_field, run)

SUBCOMMANDS = ("ingest", "returns", "prep", "fevd", "granger", "regress",
               "validate", "all", "synth")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bellwether",
        description="Lead-stock detection in intra-industry co-movement "
                    "from 5-minute bars")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="subcommand", required=True)
    for name in SUBCOMMANDS:
        p = sub.add_parser(name, help=f"run the {name} stage")
        p.add_argument("--config", help="flat key = value config file")
        p.add_argument("--report", choices=("json", "csv"),
                       help="run summary emission format")
        for f in fields(RunConfig):
            if f.name == "report_format":
                continue
            flag = "--" + f.name.replace("_", "-")
            p.add_argument(flag, dest=f.name, default=None, metavar=f.type.upper()
                           if f.type in ("int", "float") else "VALUE")
    return parser


def config_from_args(args: argparse.Namespace) -> RunConfig:
    config = RunConfig.from_file(args.config) if args.config else RunConfig()
    for f in fields(RunConfig):
        if f.name == "report_format":
            continue
        value = getattr(args, f.name, None)
        if value is not None:
            setattr(config, f.name, coerce_field(f.name, value))
    if args.report:
        config.report_format = args.report
    return config


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        config = config_from_args(args)
        summary = run(args.subcommand, config)
    except (ConfigError, StageError, DataError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (NumericalError, np.linalg.LinAlgError, ArithmeticError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2
    print(json.dumps(summary, indent=2, sort_keys=True))
    return 0


if __name__ == "__main__":
    sys.exit(main())
