"""
Artifact writers and readers: diagnostics, curve and field CSVs, and SVG
frames on a fixed 1000x1000 viewport.
"""
import csv
import logging
from pathlib import Path
from typing import Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np

from mkfit.errors import ArgumentError
from mkfit.field import BarycenterField
from mkfit.geometry import Polygon, VoronoiCell, as_points

logger = logging.getLogger(__name__)

VIEWPORT = 1000
VIEWPORT_MARGIN = 0.05
CURVE_COLOR = "blue"
CELL_COLOR = "red"
BARYCENTER_COLOR = "green"

PathLike = Union[str, Path]


def write_points_csv(path: PathLike, points: np.ndarray, header: Sequence[str] = ("x", "y")) -> None:
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(header)
        writer.writerows([[repr(float(v)) for v in row] for row in np.asarray(points, dtype=float)])


def read_points_csv(path: PathLike) -> np.ndarray:
    """x,y rows; a non-numeric first row is taken as a header, extra columns are ignored"""
    rows = []
    with open(path, newline="") as handle:
        for row in csv.reader(handle):
            if not row or row[0].strip().startswith("#"):
                continue
            try:
                rows.append([float(row[0]), float(row[1])])
            except (ValueError, IndexError):
                if rows:
                    raise ArgumentError(f"{path}: malformed row {row}")
    return np.asarray(rows, dtype=float).reshape(-1, 2)


def write_diagnostics_csv(path: PathLike, rows: List[dict]) -> None:
    if not rows:
        raise ArgumentError("no diagnostics rows to write")
    fieldnames = list(rows[0].keys())
    with open(path, "w", newline="") as handle:
        writer = csv.DictWriter(handle, fieldnames=fieldnames)
        writer.writeheader()
        for row in rows:
            writer.writerow({k: repr(v) if isinstance(v, float) else v for k, v in row.items()})


def write_field_csv(path: PathLike, sites: np.ndarray, field: BarycenterField) -> None:
    sites = as_points(sites)
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["site_x", "site_y", "F_x", "F_y", "mass"])
        for site, vector, mass in zip(sites, field.vectors, field.masses):
            writer.writerow([repr(float(v)) for v in (site[0], site[1], vector[0], vector[1], mass)])


def read_field_csv(path: PathLike) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(sites, vectors, masses) from a field CSV"""
    with open(path, newline="") as handle:
        reader = csv.DictReader(handle)
        rows = [[float(r[k]) for k in ("site_x", "site_y", "F_x", "F_y", "mass")] for r in reader]
    data = np.asarray(rows, dtype=float).reshape(-1, 5)
    return data[:, :2], data[:, 2:4], data[:, 4]


class Viewport:
    """Maps a domain bounding box (plus margin) onto [0, 1000]^2 with y pointing up"""

    def __init__(self, bounds: Tuple[float, float, float, float]):
        xmin, ymin, xmax, ymax = bounds
        span = max(xmax - xmin, ymax - ymin) or 1.0
        pad = VIEWPORT_MARGIN * span
        self.origin = np.array([0.5 * (xmin + xmax), 0.5 * (ymin + ymax)])
        self.scale = VIEWPORT / (span + 2.0 * pad)

    def map(self, points: np.ndarray) -> np.ndarray:
        pts = (np.asarray(points, dtype=float) - self.origin) * self.scale
        return np.column_stack([pts[:, 0] + 0.5 * VIEWPORT, 0.5 * VIEWPORT - pts[:, 1]])


def _points_attr(points: np.ndarray) -> str:
    return " ".join(f"{x:.3f},{y:.3f}" for x, y in points)


def render_frame_svg(
    domain: Polygon,
    samples: np.ndarray,
    cells: Optional[Iterable[VoronoiCell]] = None,
    field: Optional[BarycenterField] = None,
) -> str:
    """
    Curve polyline in blue, cell edges in red, and the point each site's
    field points to (site + F/p, the cell barycenter for p = 2) in green.
    """
    view = Viewport(domain.bounds)
    samples = as_points(samples)
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{VIEWPORT}" height="{VIEWPORT}" '
        f'viewBox="0 0 {VIEWPORT} {VIEWPORT}">',
        f'<rect width="{VIEWPORT}" height="{VIEWPORT}" fill="white"/>',
        f'<polygon points="{_points_attr(view.map(domain.vertices))}" fill="none" stroke="black" stroke-width="1"/>',
    ]
    if cells is not None:
        for cell in cells:
            for piece in cell.pieces:
                parts.append(
                    f'<polygon points="{_points_attr(view.map(piece.vertices))}" '
                    f'fill="none" stroke="{CELL_COLOR}" stroke-width="0.5"/>'
                )
    if len(samples):
        parts.append(
            f'<polyline points="{_points_attr(view.map(samples))}" '
            f'fill="none" stroke="{CURVE_COLOR}" stroke-width="1.5"/>'
        )
    if field is not None and len(field) == len(samples):
        targets = samples + field.vectors / field.p
        for (x, y), mass in zip(view.map(targets), field.masses):
            if mass > 0:
                parts.append(f'<circle cx="{x:.3f}" cy="{y:.3f}" r="1.5" fill="{BARYCENTER_COLOR}"/>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def write_frame_svg(path: PathLike, domain: Polygon, samples: np.ndarray,
                    cells: Optional[Iterable[VoronoiCell]] = None,
                    field: Optional[BarycenterField] = None) -> None:
    Path(path).write_text(render_frame_svg(domain, samples, cells, field))
    logger.debug(f"Frame written to {path}")
