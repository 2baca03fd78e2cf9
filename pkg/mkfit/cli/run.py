import argparse
import logging

from mkfit.services.runner import RunExecutor

logger = logging.getLogger(__name__)


def register(subparsers) -> None:
    parser = subparsers.add_parser("run", help="Evolve a curve from a run-config file")
    parser.add_argument("config", help="Run-config JSON")
    parser.add_argument("--out", required=True, help="Artifact directory")
    parser.add_argument("--frames-every", type=int, default=None, help="Frame stride (overrides the config)")
    parser.add_argument("--ci", action="store_true", help="Truncate iterations for fast pipelines")
    parser.set_defaults(func=cmd_run)


def cmd_run(args: argparse.Namespace) -> int:
    """
    Run an evolution

    Writes frames/NNNN.svg, diagnostics.csv, final_curve.csv and metrics.prom.
    """
    if args.frames_every is not None and args.frames_every < 1:
        print("error: --frames-every must be at least 1")
        return 2
    outcome = RunExecutor().execute(args.config, args.out, frames_every=args.frames_every, ci=args.ci)
    if outcome.exit_code != 0:
        print(f"error ({outcome.status.value}): {outcome.message}")
    return outcome.exit_code
