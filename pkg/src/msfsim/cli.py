"""Command-line entry points.

msf-sim run      -- run a scenario, export CSV/JSON logs and figures
msf-sim metrics  -- recompute and print metrics from an exported JSON log
msf-sim selftest -- run the built-in invariant suite

Exit codes: 0 success, 1 selftest failure, 2 config error,
3 initial infeasibility, 4 runtime abort.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

from .adversary import ATTACK_KINDS
from .errors import ConfigError, InitialInfeasibilityError, SimulationAbort
from .harness import (
    ScenarioConfig,
    export,
    load_config,
    load_log,
    run_scenario,
    summarize,
)

EXIT_OK = 0
EXIT_SELFTEST = 1
EXIT_CONFIG = 2
EXIT_INFEASIBLE = 3
EXIT_RUNTIME = 4


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="msf-sim",
        description="Safety-filtered multi-agent scenario simulator",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a scenario and export its logs")
    run.add_argument("--config", type=Path, help="JSON scenario config file")
    run.add_argument("--no-filter", action="store_true", help="disable the safety filter")
    run.add_argument("--attack", choices=ATTACK_KINDS, help="override the attack kind")
    run.add_argument("--agents", type=int, help="override the fleet size")
    run.add_argument("--duration", type=float, help="override the duration [s]")
    run.add_argument("--out", type=Path, default=Path("out"), help="output directory")
    run.add_argument(
        "--format",
        choices=("csv", "json", "both"),
        default="both",
        help="delimited log format(s) to write",
    )
    figs = run.add_mutually_exclusive_group()
    figs.add_argument(
        "--figures", dest="figures", action="store_true", default=True,
        help="render report figures (default)",
    )
    figs.add_argument(
        "--no-figures", dest="figures", action="store_false",
        help="skip report figures",
    )

    metrics = sub.add_parser("metrics", help="print metrics for an exported JSON log")
    metrics.add_argument("log", type=Path, help="path to a JSON log export")

    sub.add_parser("selftest", help="run the built-in invariant suite")
    return parser


def _scenario_from_args(args) -> ScenarioConfig:
    cfg = load_config(args.config) if args.config else ScenarioConfig()
    updates = {}
    if args.no_filter:
        updates["filter_enabled"] = False
    if args.attack is not None:
        updates["attack"] = dataclasses.replace(cfg.attack, kind=args.attack)
    if args.agents is not None:
        updates["fleet_size"] = args.agents
    if args.duration is not None:
        updates["duration"] = args.duration
    try:
        return dataclasses.replace(cfg, **updates) if updates else cfg
    except (ConfigError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def _cmd_run(args) -> int:
    cfg = _scenario_from_args(args)
    log = run_scenario(cfg)
    summary = summarize(log)

    out_dir = args.out
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    if args.format in ("csv", "both"):
        written.append(export(log, summary, out_dir / "scenario.csv", "csv"))
    if args.format in ("json", "both"):
        written.append(export(log, summary, out_dir / "scenario.json", "json"))
    if args.figures:
        from .report import save_report

        written.extend(save_report(log, out_dir))

    _print_summary(summary)
    for path in written:
        print(f"wrote {path}")
    return EXIT_OK


def _print_summary(summary) -> None:
    data = dataclasses.asdict(summary)
    for key, value in data.items():
        print(f"{key}: {json.dumps(value)}")


def _cmd_metrics(args) -> int:
    log, _stored = load_log(args.log)
    _print_summary(summarize(log))
    return EXIT_OK


def _cmd_selftest() -> int:
    from .selftest import run_selftest

    return EXIT_OK if run_selftest() else EXIT_SELFTEST


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "run":
            return _cmd_run(args)
        if args.command == "metrics":
            return _cmd_metrics(args)
        return _cmd_selftest()
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except InitialInfeasibilityError as exc:
        print(f"initial infeasibility: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (SimulationAbort, OSError) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
