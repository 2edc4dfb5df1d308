"""Command-line entry point.

Exit codes: 0 success, 1 usage error, 2 config error, 3 missing upstream
artifact, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import os
import sys

from ..analysis.metrics import AnalysisError
from ..diffusion.sampler import SamplerError
from ..diffusion.schedule import ScheduleError
from ..numerics.tensor import NumericsError
from ..planner.model import PlannerError
from ..scenario.generate import ScenarioError
from ..simulator.closed_loop import SimulationError
from .artifacts import ArtifactError, Workspace
from .commands import COMMANDS
from .config import ConfigError, apply_overrides, load_config, resolve, write_snapshot

EXIT_USAGE = 1
EXIT_CONFIG = 2
EXIT_MISSING_ARTIFACT = 3
EXIT_NUMERICAL = 4

_NUMERICAL_ERRORS = (NumericsError, ScheduleError, SamplerError, PlannerError,
                     SimulationError, ScenarioError, AnalysisError,
                     FloatingPointError)


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):
        self.print_usage(sys.stderr)
        print(f"error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="latentplan",
                     description="Latent-diffusion trajectory planning pipeline.")
    sub = parser.add_subparsers(dest="command", metavar="command")
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.error = parser.error
        p.add_argument("--config", required=True, help="YAML run configuration")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="dotted-path config override (repeatable)")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--out", default=None, help="output directory")
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if args.command is None:
        parser.print_usage(sys.stderr)
        return EXIT_USAGE

    try:
        raw = load_config(args.config)
        raw = apply_overrides(raw, args.set)
        if "workers" not in raw and os.environ.get("LATENTPLAN_WORKERS"):
            raw["workers"] = int(os.environ["LATENTPLAN_WORKERS"])
        run = resolve(raw, seed=args.seed, out=args.out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    ws = Workspace(run.out).ensure()
    write_snapshot(run, ws.resolved_config)
    try:
        return COMMANDS[args.command](run, ws)
    except ArtifactError as exc:
        print(f"missing artifact: {exc}", file=sys.stderr)
        return EXIT_MISSING_ARTIFACT
    except _NUMERICAL_ERRORS as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
