"""``sqzring`` command-line front end.

Exit codes: 0 success, 2 configuration error, 3 numeric or physicality
error, 4 I/O error.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from .commands import COMMANDS
from .config import ConfigError, load_config
from .modes import ModeSolverError
from .noise import PhysicalityError
from .sweep import SweepSpec, run_sweep
from .table import resolve_workers, write_table

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_IO = 0, 2, 3, 4
SUBCOMMANDS = ("rates", "stability-map", "spectrum", "tomography", "purity",
               "bandwidth", "modes", "sweep")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, type=Path, help="configuration file")
    common.add_argument("--out", type=Path, help="output file (default: stdout)")
    common.add_argument("--format", choices=("csv", "json"),
                        help="output format (default: from --out suffix, else csv)")
    common.add_argument("--workers", type=int,
                        help="worker processes (default: $SQZRING_WORKERS or CPU count)")
    parser = argparse.ArgumentParser(prog="sqzring", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in SUBCOMMANDS:
        sub.add_parser(name, parents=[common])
    return parser


def _format(args) -> str:
    if args.format:
        return args.format
    if args.out is not None and args.out.suffix.lower() == ".json":
        return "json"
    return "csv"


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = load_config(args.config)
    except OSError as exc:
        print(f"error: cannot read config: {exc}", file=sys.stderr)
        return EXIT_IO
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    fmt = _format(args)
    try:
        workers = resolve_workers(args.workers)
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        if args.command == "sweep":
            table = run_sweep(SweepSpec.from_config(config, args.out, workers))
        else:
            table = COMMANDS[args.command](config, workers)
        if args.out is None:
            sys.stdout.write(table.to_json() if fmt == "json" else table.to_csv())
        else:
            write_table(table, args.out, fmt)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (PhysicalityError, ModeSolverError, ValueError, ArithmeticError,
            np.linalg.LinAlgError) as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
