"""
Target measures: uniform probability on a polygon, or a weighted empirical
measure.
"""
import csv
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Sequence, Union

import numpy as np
from scipy.spatial import cKDTree

from mkfit.errors import ArgumentError
from mkfit.geometry import (
    COINCIDENT_TOLERANCE,
    Polygon,
    PointsLike,
    VoronoiCell,
    as_points,
    bounding_box,
    sample_in_triangles,
    triangulate_array,
)

logger = logging.getLogger(__name__)

WEIGHT_SUM_TOLERANCE = 1e-9


@dataclass(frozen=True, eq=False)
class Uniform:
    domain: Polygon

    @property
    def density(self) -> float:
        return 1.0 / self.domain.area


@dataclass(frozen=True, eq=False)
class Empirical:
    atoms: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        atoms = as_points(self.atoms)
        weights = np.asarray(self.weights, dtype=float)
        if len(atoms) == 0:
            raise ArgumentError("empirical measure needs at least one atom")
        if weights.shape != (len(atoms),):
            raise ArgumentError("one weight per atom is required")
        if np.any(weights <= 0):
            raise ArgumentError("empirical weights must be strictly positive")
        if abs(weights.sum() - 1.0) > WEIGHT_SUM_TOLERANCE:
            raise ArgumentError(f"empirical weights sum to {weights.sum()}, expected 1")
        object.__setattr__(self, "atoms", atoms)
        object.__setattr__(self, "weights", weights)

    @classmethod
    def from_points(cls, atoms: PointsLike, weights: Optional[Sequence[float]] = None) -> "Empirical":
        atoms = as_points(atoms)
        if weights is None:
            weights = np.full(len(atoms), 1.0 / max(len(atoms), 1))
        else:
            weights = np.asarray(weights, dtype=float)
            weights = weights / weights.sum()
        return cls(atoms, weights)

    @classmethod
    def from_csv(cls, path: Union[str, Path]) -> "Empirical":
        """Rows of x,y[,weight]; missing weights mean uniform weights"""
        atoms, weights = [], []
        with open(path, newline="") as handle:
            for row in csv.reader(handle):
                if not row or row[0].strip().startswith("#"):
                    continue
                try:
                    values = [float(v) for v in row]
                except ValueError:
                    # header row
                    continue
                atoms.append(values[:2])
                weights.append(values[2] if len(values) > 2 else None)
        if any(w is None for w in weights):
            return cls.from_points(atoms)
        return cls.from_points(atoms, weights)


TargetMeasure = Union[Uniform, Empirical]


def sample(measure: TargetMeasure, n: int, seed: int) -> np.ndarray:
    """n i.i.d. draws from measure, deterministic given seed"""
    if n < 1:
        raise ArgumentError(f"sample count must be at least 1, got {n}")
    rng = np.random.default_rng(seed)
    if isinstance(measure, Empirical):
        which = rng.choice(len(measure.atoms), size=n, p=measure.weights)
        return measure.atoms[which].copy()
    tris = triangulate_array(measure.domain)
    return sample_in_triangles(tris, n, rng)


def nearest_sites(points: PointsLike, sites: PointsLike) -> np.ndarray:
    """
    Index of the nearest site for each point.

    Ties within 1e-12 (relative) go to the lowest site index.
    """
    pts = as_points(points)
    sites = as_points(sites)
    if len(sites) == 1:
        return np.zeros(len(pts), dtype=np.int64)
    tree = cKDTree(sites)
    dist, idx = tree.query(pts, k=2)
    tie = np.abs(dist[:, 1] - dist[:, 0]) <= COINCIDENT_TOLERANCE * np.maximum(dist[:, 0], 1.0)
    chosen = idx[:, 0].copy()
    chosen[tie] = np.minimum(idx[tie, 0], idx[tie, 1])
    return chosen.astype(np.int64)


def empirical_assignment(measure: Empirical, sites: PointsLike) -> np.ndarray:
    return nearest_sites(measure.atoms, sites)


def cell_mass(measure: TargetMeasure, cell: VoronoiCell, sites: Optional[PointsLike] = None) -> float:
    """
    Mass the measure puts on a cell.

    Empirical targets need the full site list to assign atoms by nearest
    site.
    """
    if isinstance(measure, Uniform):
        if cell.is_empty:
            return 0.0
        return cell.area / measure.domain.area
    if sites is None:
        raise ArgumentError("cell_mass of an empirical measure needs the site list")
    owner = empirical_assignment(measure, sites)
    return float(measure.weights[owner == cell.site_index].sum())


def cell_masses(measure: TargetMeasure, cells: List[VoronoiCell], sites: PointsLike) -> np.ndarray:
    """Masses of every cell in one pass"""
    if isinstance(measure, Uniform):
        return np.array([cell.area for cell in cells]) / measure.domain.area
    owner = empirical_assignment(measure, sites)
    return np.bincount(owner, weights=measure.weights, minlength=len(cells)).astype(float)


def site_hit_mass(measure: TargetMeasure, sites: PointsLike) -> np.ndarray:
    """rho({y_j}): weight of atoms within 1e-12 of each site (zero for uniform targets)"""
    sites = as_points(sites)
    hit = np.zeros(len(sites))
    if isinstance(measure, Uniform):
        return hit
    tree = cKDTree(measure.atoms)
    for j, site in enumerate(sites):
        for i in tree.query_ball_point(site, COINCIDENT_TOLERANCE * max(1.0, float(np.abs(site).max()))):
            hit[j] += measure.weights[i]
    return hit


def support_domain(measure: TargetMeasure, sites: Optional[PointsLike] = None) -> Polygon:
    """Polygon the Voronoi cells are clipped to"""
    if isinstance(measure, Uniform):
        return measure.domain
    points = measure.atoms if sites is None else np.vstack([measure.atoms, as_points(sites)])
    span = float(np.max(points.max(axis=0) - points.min(axis=0)))
    return bounding_box(points, pad=max(0.1 * span, 1e-6))
