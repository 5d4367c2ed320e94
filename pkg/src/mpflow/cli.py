"""Command-line entry point.

    mpflow run --scenario <name|path> [--bucket-ms 1000] [--out report.csv]
               [--duration-ms N] [--seed N]
    mpflow list-scenarios
    mpflow validate <path>
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .model import MpflowError
from .scenario import (
    BUILTIN_DOCS,
    BUILTIN_SUMMARIES,
    ScenarioError,
    builtin_scenario,
    emit_csv,
    parse_scenario,
    run_scenario,
)


def _load_scenario(ref: str):
    if ref in BUILTIN_DOCS:
        return builtin_scenario(ref)
    path = Path(ref)
    if not path.exists():
        raise ScenarioError(
            f"{ref!r} is neither a built-in scenario ({sorted(BUILTIN_DOCS)}) "
            f"nor an existing file"
        )
    return parse_scenario(path.read_text(encoding="utf-8"))


def _cmd_run(args: argparse.Namespace) -> int:
    scenario = _load_scenario(args.scenario)
    report = run_scenario(
        scenario,
        bucket_ms=args.bucket_ms,
        seed=args.seed,
        duration_ms=args.duration_ms,
    )
    if args.out:
        emit_csv(report, args.out)
    else:
        emit_csv(report, sys.stdout)
    return 0


def _cmd_list(_args: argparse.Namespace) -> int:
    for name in sorted(BUILTIN_DOCS):
        print(f"{name}: {BUILTIN_SUMMARIES[name]}")
    return 0


def _cmd_validate(args: argparse.Namespace) -> int:
    try:
        scenario = parse_scenario(Path(args.path).read_text(encoding="utf-8"))
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except ScenarioError as exc:
        print(f"invalid scenario: {exc}", file=sys.stderr)
        return 1
    print(
        f"ok: scenario {scenario.name!r}, {len(scenario.links)} links, "
        f"{len(scenario.actions)} actions, {scenario.duration_ms} ms"
    )
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mpflow",
        description="Deterministic multipath-transport simulator with "
        "sub-flow priority control",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run a scenario and emit a CSV timeline")
    run_p.add_argument("--scenario", required=True, help="built-in name or file path")
    run_p.add_argument("--bucket-ms", type=int, default=1000)
    run_p.add_argument("--out", help="output CSV path (default: stdout)")
    run_p.add_argument("--duration-ms", type=int, default=None)
    run_p.add_argument(
        "--seed", type=int, default=None, help="reserved; the engine is deterministic"
    )
    run_p.set_defaults(func=_cmd_run)

    list_p = sub.add_parser("list-scenarios", help="list built-in scenarios")
    list_p.set_defaults(func=_cmd_list)

    validate_p = sub.add_parser("validate", help="validate a scenario file")
    validate_p.add_argument("path")
    validate_p.set_defaults(func=_cmd_validate)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ScenarioError, MpflowError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
