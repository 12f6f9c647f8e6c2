"""
Command-line entry point.

    ifdm forward --config run.toml
    ifdm dual --config run.toml
    ifdm check --suite all
    ifdm dump-tables --out tables/
"""

from __future__ import annotations

import argparse
from typing import Optional, Sequence

from config import Config
from .. import init_app
from ..checks import FAULTS
from ..enums import CheckSuite
from ..schemas.config import load_config
from .commands import cmd_check, cmd_dual, cmd_dump_tables, cmd_forward
from .error_handlers import run_command


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ifdm", description="Dual variational solver for ideal field dislocation mechanics")
    parser.add_argument("--json-logs", action="store_true", help="emit one JSON object per log record")
    parser.add_argument("--log-level", default=None, help="override LOG_LEVEL")
    parser.add_argument("--env", default=Config.ENV, choices=["development", "production", "testing"])
    sub = parser.add_subparsers(dest="command", required=True)

    forward = sub.add_parser("forward", help="integrate a scenario with the reference solver")
    forward.add_argument("--config", required=True, help="run configuration (TOML)")

    dual = sub.add_parser("dual", help="maximize the dual functional")
    dual.add_argument("--config", required=True, help="run configuration (TOML)")

    check = sub.add_parser("check", help="run invariant suites")
    check.add_argument("--suite", default=str(CheckSuite.ALL), choices=[str(s) for s in CheckSuite])
    check.add_argument("--inject-fault", default=None, choices=FAULTS, help=argparse.SUPPRESS)

    dump = sub.add_parser("dump-tables", help="write the M and B tables as CSV")
    dump.add_argument("--out", required=True, help="output directory")
    return parser


def _with_config(command, path: str) -> int:
    return command(load_config(path))


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    init_app(args.env, structured_logs=True if args.json_logs else None, log_level=args.log_level)

    if args.command == "forward":
        return run_command(_with_config, cmd_forward, args.config)
    if args.command == "dual":
        return run_command(_with_config, cmd_dual, args.config)
    if args.command == "check":
        return run_command(cmd_check, args.suite, args.inject_fault)
    return run_command(cmd_dump_tables, args.out)


if __name__ == "__main__":
    raise SystemExit(main())
