"""
The discrete barycenter field.

For a site y with Voronoi cell V and target measure rho, the field is

    F(y) = p / rho(V) * integral over V of (w - y) |w - y|^(p-2) drho(w)

with the convention v|v|^(p-2) = 0 at v = 0 and F(y) = 0 on cells of zero
mass. Uniform targets are integrated exactly per triangle; empirical
targets reduce to a sum over atoms.
"""
import logging
from dataclasses import dataclass
from typing import List, Sequence, Union

import numpy as np
from scipy.integrate import quad_vec

from mkfit.concurrency import parallel_map
from mkfit.config import settings
from mkfit.errors import ArgumentError
from mkfit.geometry import PointsLike, Triangle, VoronoiCell, as_points, cell_triangles
from mkfit.measure import Empirical, TargetMeasure, Uniform, cell_masses, empirical_assignment

logger = logging.getLogger(__name__)

MASS_SUM_TOLERANCE = 1e-9


@dataclass(frozen=True, eq=False)
class BarycenterField:
    vectors: np.ndarray
    masses: np.ndarray
    p: float

    def __post_init__(self):
        vectors = as_points(self.vectors)
        masses = np.asarray(self.masses, dtype=float)
        if masses.shape != (len(vectors),):
            raise ArgumentError("field needs one mass per vector")
        vectors = np.where((masses > 0)[:, None], vectors, 0.0)
        object.__setattr__(self, "vectors", vectors)
        object.__setattr__(self, "masses", masses)

    def __len__(self) -> int:
        return len(self.vectors)

    @property
    def magnitudes(self) -> np.ndarray:
        return np.hypot(self.vectors[:, 0], self.vectors[:, 1])


@dataclass(frozen=True, eq=False)
class Perturbation:
    vectors: np.ndarray

    def __post_init__(self):
        vectors = as_points(self.vectors)
        if not np.all(np.isfinite(vectors)):
            raise ArgumentError("perturbation entries must be finite")
        object.__setattr__(self, "vectors", vectors)


def _check_p(p: float) -> None:
    if p < 1:
        raise ArgumentError(f"p must be at least 1, got {p}")


def _tri_array(tri: Union[Triangle, np.ndarray]) -> np.ndarray:
    return tri.as_array() if isinstance(tri, Triangle) else np.asarray(tri, dtype=float)


def _orientation(t: np.ndarray) -> float:
    e1, e2 = t[1] - t[0], t[2] - t[0]
    return float(np.sign(e1[0] * e2[1] - e1[1] * e2[0]))


def _edge_integrals(t: np.ndarray, base: np.ndarray, power: float, vector: bool) -> np.ndarray:
    """
    Radial decomposition about base: for an integrand homogeneous of degree
    d in w - b, the triangle integral is the sum over edges (P, Q) of
    cross(P - b, Q - b) / (d + 2) times its integral along the edge. The
    caller applies the 1 / (d + 2) factor.
    """
    rel = t - base
    nxt = np.roll(rel, -1, axis=0)
    cross = rel[:, 0] * nxt[:, 1] - rel[:, 1] * nxt[:, 0]
    live = cross != 0.0
    if not np.any(live):
        return np.zeros(2) if vector else np.zeros(1)
    starts, ends, weights = rel[live], nxt[live], cross[live]

    def integrand(s):
        v = starts + s * (ends - starts)
        r = np.hypot(v[:, 0], v[:, 1])
        if vector:
            scale = np.ones_like(r)
            if power != 0.0:
                scale = np.zeros_like(r)
                np.power(r, power, out=scale, where=r > 0)
            return (weights[:, None] * v * scale[:, None]).sum(axis=0)
        return np.atleast_1d((weights * r ** power).sum())

    value, _ = quad_vec(integrand, 0.0, 1.0, epsabs=settings.quad_epsabs, epsrel=settings.quad_epsrel)
    return np.asarray(value)


def triangle_vector_moment(tri: Union[Triangle, np.ndarray], base: Sequence[float], p: float) -> np.ndarray:
    """
    p times the Lebesgue integral of (w - base)|w - base|^(p-2) over tri.

    Closed form for p = 2: 2 * area * (centroid - base).
    """
    _check_p(p)
    t = _tri_array(tri)
    b = np.asarray(base, dtype=float)
    sign = _orientation(t)
    if sign == 0.0:
        return np.zeros(2)
    if p == 2:
        e1, e2 = t[1] - t[0], t[2] - t[0]
        area = 0.5 * abs(e1[0] * e2[1] - e1[1] * e2[0])
        return 2.0 * area * (t.mean(axis=0) - b)
    # (w - b)|w - b|^(p-2) is homogeneous of degree p - 1
    return p * sign * _edge_integrals(t, b, p - 2.0, vector=True) / (p + 1.0)


def triangle_scalar_moment(tri: Union[Triangle, np.ndarray], base: Sequence[float], p: float) -> float:
    """Lebesgue integral of |w - base|^p over tri; p = 0 gives the area"""
    t = _tri_array(tri)
    b = np.asarray(base, dtype=float)
    sign = _orientation(t)
    if sign == 0.0:
        return 0.0
    if p == 0:
        e1, e2 = t[1] - t[0], t[2] - t[0]
        return 0.5 * abs(e1[0] * e2[1] - e1[1] * e2[0])
    if p == 2:
        return float(triangles_scalar_moment_p2(t[None], b).sum())
    if p < 0:
        raise ArgumentError(f"p must be nonnegative, got {p}")
    return float(sign * _edge_integrals(t, b, p, vector=False)[0] / (p + 2.0))


def triangles_vector_moment_p2(tris: np.ndarray, base: np.ndarray) -> np.ndarray:
    """Summed p = 2 vector moments of a (T, 3, 2) triangle stack"""
    if len(tris) == 0:
        return np.zeros(2)
    e1 = tris[:, 1] - tris[:, 0]
    e2 = tris[:, 2] - tris[:, 0]
    areas = 0.5 * np.abs(e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])
    return (2.0 * areas[:, None] * (tris.mean(axis=1) - base)).sum(axis=0)


def triangles_scalar_moment_p2(tris: np.ndarray, base: np.ndarray) -> np.ndarray:
    """Per-triangle p = 2 scalar moments: A (|g - b|^2 + (a^2 + b^2 + c^2) / 36)"""
    if len(tris) == 0:
        return np.zeros(0)
    e1 = tris[:, 1] - tris[:, 0]
    e2 = tris[:, 2] - tris[:, 0]
    e3 = tris[:, 2] - tris[:, 1]
    areas = 0.5 * np.abs(e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])
    offset = tris.mean(axis=1) - base
    edges = (e1 ** 2).sum(axis=1) + (e2 ** 2).sum(axis=1) + (e3 ** 2).sum(axis=1)
    return areas * ((offset ** 2).sum(axis=1) + edges / 36.0)


def cell_vector_moment(tris: np.ndarray, base: np.ndarray, p: float) -> np.ndarray:
    if p == 2:
        return triangles_vector_moment_p2(tris, base)
    total = np.zeros(2)
    for tri in tris:
        total += triangle_vector_moment(tri, base, p)
    return total


def cell_scalar_moment(tris: np.ndarray, base: np.ndarray, p: float) -> float:
    if p == 2:
        return float(triangles_scalar_moment_p2(tris, base).sum())
    return float(sum(triangle_scalar_moment(tri, base, p) for tri in tris))


def _uniform_field(sites: np.ndarray, cells: List[VoronoiCell], measure: Uniform, p: float) -> np.ndarray:
    reference = measure.domain.area

    def moment(cell: VoronoiCell) -> np.ndarray:
        if cell.is_empty:
            return np.zeros(2)
        tris = cell_triangles(cell, reference)
        area = cell.area
        if area <= 0:
            return np.zeros(2)
        # the conditional measure on the cell is Lebesgue / cell area
        return cell_vector_moment(tris, sites[cell.site_index], p) / area

    return np.array(parallel_map(moment, cells)).reshape(len(cells), 2)


def _empirical_field(sites: np.ndarray, measure: Empirical, p: float, masses: np.ndarray) -> np.ndarray:
    owner = empirical_assignment(measure, sites)
    diff = measure.atoms - sites[owner]
    r = np.hypot(diff[:, 0], diff[:, 1])
    if p == 2:
        scale = np.ones_like(r)
    else:
        scale = np.zeros_like(r)
        np.power(r, p - 2.0, out=scale, where=r > 0)
    contrib = p * measure.weights[:, None] * diff * scale[:, None]
    moments = np.zeros((len(sites), 2))
    np.add.at(moments, owner, contrib)
    return np.divide(moments, masses[:, None], out=np.zeros_like(moments), where=masses[:, None] > 0)


def discrete_field(sites: PointsLike, cells: List[VoronoiCell], measure: TargetMeasure, p: float) -> BarycenterField:
    _check_p(p)
    sites = as_points(sites)
    if len(cells) != len(sites):
        raise ArgumentError("one cell per site is required")
    masses = cell_masses(measure, cells, sites)
    if abs(masses.sum() - 1.0) > MASS_SUM_TOLERANCE:
        logger.warning(f"Cell masses sum to {masses.sum():.12f}")
    if isinstance(measure, Uniform):
        vectors = _uniform_field(sites, cells, measure, p)
    else:
        vectors = _empirical_field(sites, measure, p, masses)
    return BarycenterField(vectors=vectors, masses=masses, p=p)


def kappa_rescale(field: BarycenterField, kappa: float) -> BarycenterField:
    """Scale each vector by its cell mass to the power -kappa"""
    if not 0.0 <= kappa <= 1.0:
        raise ArgumentError(f"kappa must be in [0, 1], got {kappa}")
    if kappa == 0.0:
        return field
    factor = np.zeros_like(field.masses)
    np.power(field.masses, -kappa, out=factor, where=field.masses > 0)
    return BarycenterField(vectors=field.vectors * factor[:, None], masses=field.masses, p=field.p)


def first_variation(
    field: BarycenterField,
    xi: Union[Perturbation, PointsLike],
    sites_hit_mass: Sequence[float],
    p: float,
) -> float:
    """
    Predicted derivative of the objective when sites move along xi.

    For p = 1, atoms sitting on moved sites add |xi| times their mass.
    """
    vectors = xi.vectors if isinstance(xi, Perturbation) else Perturbation(xi).vectors
    hit = np.asarray(sites_hit_mass, dtype=float)
    if len(vectors) != len(field) or len(hit) != len(field):
        raise ArgumentError(
            f"length mismatch: field {len(field)}, xi {len(vectors)}, sites_hit_mass {len(hit)}"
        )
    value = -float(np.sum((field.vectors * vectors).sum(axis=1) * field.masses))
    if p == 1:
        value += float(np.sum(np.hypot(vectors[:, 0], vectors[:, 1]) * hit))
    return value
