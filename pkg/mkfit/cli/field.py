import argparse
import logging

from mkfit.services.runner import compute_field_dump

logger = logging.getLogger(__name__)


def register(subparsers) -> None:
    parser = subparsers.add_parser("field", help="Dump the barycenter field at given sites")
    parser.add_argument("config", help="Run-config JSON (domain, measure and p are used)")
    parser.add_argument("--sites", required=True, help="CSV of x,y site rows")
    parser.add_argument("--out", required=True, help="Output CSV (site_x, site_y, F_x, F_y, mass)")
    parser.set_defaults(func=cmd_field)


def cmd_field(args: argparse.Namespace) -> int:
    outcome = compute_field_dump(args.config, args.sites, args.out)
    if outcome.exit_code != 0:
        print(f"error ({outcome.status.value}): {outcome.message}")
    return outcome.exit_code
