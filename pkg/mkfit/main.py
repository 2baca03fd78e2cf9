import argparse
import logging
import sys
from typing import List, Optional

from mkfit.config import settings
from mkfit.cli import field, run, seed, verify


def configure_logging() -> None:
    handlers = [logging.StreamHandler()]
    if settings.log_file:
        handlers.append(logging.FileHandler(settings.log_file))
    logging.basicConfig(
        level=getattr(logging, settings.log_level.upper(), logging.INFO),
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
        handlers=handlers,
    )


logger = logging.getLogger(__name__)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog=settings.app_title,
        description="""
        Fit curves to planar target measures by evolving them along the
        discrete barycenter field under a Sobolev-cost penalty.

        Commands: run (evolve from a config), field (one-shot field dump),
        seed (write a seed curve), verify (oracle suites).
        """,
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {settings.app_version}")
    subparsers = parser.add_subparsers(dest="command", required=True)

    # Register sub-commands
    run.register(subparsers)
    field.register(subparsers)
    seed.register(subparsers)
    verify.register(subparsers)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    configure_logging()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse usage errors exit 2, --help/--version exit 0
        return int(exc.code or 0)
    logger.debug(f"Dispatching '{args.command}'")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
