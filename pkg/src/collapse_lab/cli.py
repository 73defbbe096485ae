"""Command-line front end: ``collapse-lab run`` and ``collapse-lab verify``.

Exit codes: 0 on success, 2 on a configuration or validation error, 3 when an
acceptance criterion fails.
"""
from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

from . import __version__
from .errors import ConfigError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_ACCEPTANCE = 3


def _positive_int(text: str) -> int:
    try:
        value = int(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"{text!r} is not an integer") from exc
    if value < 1:
        raise argparse.ArgumentTypeError("must be at least 1")
    return value


def _seed(text: str) -> int:
    try:
        value = int(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"{text!r} is not an integer") from exc
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must be a non-negative 64-bit integer")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="collapse-lab",
                                     description="Asymptotic risk theory and Monte Carlo checks for "
                                                 "ridge models trained on real plus synthetic data.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="evaluate every scenario of a YAML configuration")
    run.add_argument("--config", required=True, type=Path, help="YAML configuration file")
    run.add_argument("--out", type=Path, default=Path("results"), help="output directory (default: results)")
    run.add_argument("--threads", type=_positive_int, default=os.cpu_count() or 1,
                     help="worker processes (default: number of cores)")
    run.add_argument("--seed", type=_seed, default=None, help="override the seed of every scenario")
    run.add_argument("--no-figures", action="store_true", help="skip PNG rendering")

    verify = sub.add_parser("verify", help="run a built-in acceptance suite")
    from .acceptance import SUITES

    verify.add_argument("--suite", required=True, help=f"one of: {', '.join(SUITES)}")
    verify.add_argument("--out", type=Path, default=None, help="keep the suite's CSV files here")
    return parser


def _report_config_error(exc: ConfigError) -> int:
    print("configuration error:", file=sys.stderr)
    for problem in exc.problems:
        print(f"  - {problem}", file=sys.stderr)
    return EXIT_CONFIG


def cmd_run(args) -> int:
    from .config import load_config
    from .sweep import run_scenario

    try:
        scenarios = load_config(args.config, seed_override=args.seed)
    except ConfigError as exc:
        return _report_config_error(exc)
    for scn in scenarios:
        out = run_scenario(scn, args.out, threads=args.threads, figures=not args.no_figures)
        n_err = sum(1 for r in out.rows if r["error"])
        note = f" ({n_err} rows with errors)" if n_err else ""
        print(f"{scn.name}: {len(out.rows)} rows -> {out.csv_path}{note}")
    return EXIT_OK


def cmd_verify(args) -> int:
    from .acceptance import run_suite

    try:
        results = run_suite(args.suite, args.out)
    except ConfigError as exc:
        return _report_config_error(exc)
    for res in results:
        print(f"{res.line()} [{res.seconds:.1f}s]")
    return EXIT_OK if all(r.passed for r in results) else EXIT_ACCEPTANCE


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits with 2 on usage errors, which matches the validation exit code
        return int(exc.code) if exc.code is not None else EXIT_OK
    if args.command == "run":
        return cmd_run(args)
    return cmd_verify(args)


if __name__ == "__main__":
    sys.exit(main())
