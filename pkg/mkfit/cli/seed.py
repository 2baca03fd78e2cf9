import argparse
import json
import logging
from pathlib import Path

from mkfit.errors import MkfitError
from mkfit.schemas import RunConfigFile, SeedFile, build_seed_spec, parse_document
from mkfit.seeds import build_seed
from mkfit.services.artifacts import write_points_csv

logger = logging.getLogger(__name__)


def register(subparsers) -> None:
    parser = subparsers.add_parser("seed", help="Write the points of a seed curve to CSV")
    parser.add_argument("spec", help="Seed JSON ({seed, domain?, rng_seed?}) or a run-config file")
    parser.add_argument("--out", required=True, help="Output CSV of x,y rows")
    parser.set_defaults(func=cmd_seed)


def cmd_seed(args: argparse.Namespace) -> int:
    path = Path(args.spec)
    try:
        text = path.read_text()
        data = json.loads(text)
    except (OSError, json.JSONDecodeError) as e:
        print(f"error: cannot read seed spec {path}: {e}")
        return 2
    try:
        model = RunConfigFile if isinstance(data, dict) and "iterations" in data else SeedFile
        document = parse_document(model, text, str(path))
        domain = document.domain.to_polygon()
        points = build_seed(build_seed_spec(document.seed, path.parent), domain, document.rng_seed)
    except (MkfitError, OSError) as e:
        print(f"error: {e}")
        return 2
    write_points_csv(args.out, points)
    logger.info(f"Seed with {len(points)} points written to {args.out}")
    return 0
