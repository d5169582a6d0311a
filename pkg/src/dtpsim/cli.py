"""Command line front end.

Exit codes: 0 on success, 1 when a scenario expectation fails, 2 for
configuration or usage errors.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

from .harness import (
    ConfigError,
    ResolvedConfig,
    echo_config,
    load_config,
    load_report,
    render_report,
    render_stored_report,
    run_scenario,
    write_report,
)

EXIT_OK = 0
EXIT_EXPECTATION_FAILED = 1
EXIT_CONFIG_ERROR = 2


def _default_outdir() -> str:
    return os.environ.get("DTPSIM_OUT", "./dtpsim-out")


def _csv_list(text: str) -> list[str]:
    return [item.strip() for item in text.split(",") if item.strip()]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dtpsim",
        description="Discrete-event simulator for QoS-aware task placement pipelines.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one or all scenarios and write traces")
    run.add_argument("--config", help="YAML config file; omit to use built-in defaults")
    run.add_argument(
        "--out",
        default=None,
        help="output directory (default: $DTPSIM_OUT or ./dtpsim-out)",
    )
    run.add_argument("--scenario", default="all", help="scenario name, or 'all'")
    run.add_argument("--policies", help="comma-separated subset, e.g. LOC,DTP")
    run.add_argument("--seeds", help="comma-separated seed subset, e.g. 1,2,3")
    run.add_argument(
        "--format", choices=("text", "json"), default="text", help="report format on stdout"
    )

    val = sub.add_parser("validate", help="resolve and validate a config, then exit")
    val.add_argument("--config", help="YAML config file; omit to check the defaults")

    rep = sub.add_parser("report", help="re-render the report from a previous run")
    rep.add_argument(
        "--out",
        default=None,
        help="output directory of the previous run (default: $DTPSIM_OUT or ./dtpsim-out)",
    )
    rep.add_argument("--format", choices=("text", "json"), default="text")
    return parser


def _select_scenarios(config: ResolvedConfig, name: str) -> list[str]:
    if name == "all":
        return list(config.scenarios)
    if name not in config.scenarios:
        known = ", ".join(sorted(config.scenarios))
        raise ConfigError(f"unknown scenario {name!r} (known: {known})")
    return [name]


def _cmd_run(args: argparse.Namespace) -> int:
    config = load_config(args.config)
    names = _select_scenarios(config, args.scenario)
    policies = _csv_list(args.policies) if args.policies else None
    seeds = [int(s) for s in _csv_list(args.seeds)] if args.seeds else None
    outdir = Path(args.out if args.out is not None else _default_outdir())

    echo_config(config, outdir)
    reports = []
    for name in names:
        reports.append(
            run_scenario(config, config.scenarios[name], policies, seeds, outdir)
        )
    write_report(reports, outdir)
    print(render_report(reports, args.format))
    return EXIT_OK if all(r.passed for r in reports) else EXIT_EXPECTATION_FAILED


def _cmd_validate(args: argparse.Namespace) -> int:
    config = load_config(args.config)
    n = len(config.scenarios)
    print(f"config ok: {len(config.fabric.nodes)} nodes, "
          f"{len(config.dag.tasks)} tasks, {n} scenarios")
    return EXIT_OK


def _cmd_report(args: argparse.Namespace) -> int:
    outdir = Path(args.out if args.out is not None else _default_outdir())
    payload = load_report(outdir)
    print(render_stored_report(payload, args.format))
    return EXIT_OK if payload.get("passed") else EXIT_EXPECTATION_FAILED


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 0 for --help and 2 for usage errors
        return EXIT_OK if not exc.code else EXIT_CONFIG_ERROR
    try:
        if args.command == "run":
            return _cmd_run(args)
        if args.command == "validate":
            return _cmd_validate(args)
        if args.command == "report":
            return _cmd_report(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG_ERROR
    parser.error(f"unknown command {args.command!r}")
    return EXIT_CONFIG_ERROR


if __name__ == "__main__":
    raise SystemExit(main())
