import argparse
import logging

from mkfit.services.oracles import SUITES, run_suite

logger = logging.getLogger(__name__)


def register(subparsers) -> None:
    parser = subparsers.add_parser("verify", help="Run a verification suite")
    parser.add_argument("suite", help=f"One of: all, {', '.join(SUITES)}")
    parser.add_argument("--seed", type=int, default=0, help="Seed of the instance generator")
    parser.add_argument("--ci", action="store_true", help="Scale Monte-Carlo sample counts down 100x")
    parser.set_defaults(func=cmd_verify)


def cmd_verify(args: argparse.Namespace) -> int:
    """Print one line per check; exit 0 iff every check passes"""
    if args.suite != "all" and args.suite not in SUITES:
        print(f"error: unknown suite '{args.suite}'; choose from all, {', '.join(SUITES)}")
        return 2
    results = run_suite(args.suite, seed=args.seed, ci=args.ci)
    for check in results:
        print(check.line())
    failed = [check for check in results if not check.passed]
    print(f"{len(results) - len(failed)}/{len(results)} checks passed")
    return 1 if failed else 0
