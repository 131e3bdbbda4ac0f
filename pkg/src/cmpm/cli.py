"""Command line entry point: ``cmpm run|validate|list-scenarios``."""

from __future__ import annotations

import argparse
import logging
import sys

from .errors import CMPMError
from .runner import SCENARIO_HELP, SCENARIOS, ConfigError, load_config, resolve_outdir, run_scenario, validate_config

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_USAGE = 2


def _load(path: str):
    """Config plus every problem found, or ``(None, [reason])`` if unreadable."""
    try:
        config, problems = load_config(path)
    except FileNotFoundError:
        return None, [f"config file not found: {path}"]
    except ConfigError as exc:
        return None, [str(exc)]
    return config, problems + validate_config(config)


def _cmd_validate(args) -> int:
    config, problems = _load(args.config)
    for p in problems:
        print(f"invalid: {p}", file=sys.stderr)
    if problems:
        return EXIT_USAGE
    print(f"ok: {config.scenario} -> {resolve_outdir(config)}")
    return EXIT_OK


def _cmd_run(args) -> int:
    config, problems = _load(args.config)
    for p in problems:
        print(f"invalid: {p}", file=sys.stderr)
    if problems:
        return EXIT_USAGE
    try:
        summary = run_scenario(config)
    except (CMPMError, ValueError, ArithmeticError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    sys.stdout.write(summary.to_text())
    return EXIT_OK


def _cmd_list(args) -> int:
    for name in SCENARIOS:
        print(f"{name:10s} {SCENARIO_HELP[name]}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cmpm", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run the scenario described by a config file")
    run.add_argument("config")
    run.set_defaults(func=_cmd_run)
    val = sub.add_parser("validate", help="check a config file without running it")
    val.add_argument("config")
    val.set_defaults(func=_cmd_validate)
    ls = sub.add_parser("list-scenarios", help="print the available scenarios")
    ls.set_defaults(func=_cmd_list)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
