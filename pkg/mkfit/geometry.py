"""
Planar primitives: polygons, triangles, clipping and clipped Voronoi cells.

Point sets are numpy arrays of shape (n, 2) internally; ``Point2`` is the
named tuple used where single points cross an API boundary.
"""
import logging
import math
from dataclasses import dataclass, field
from typing import List, NamedTuple, Sequence, Tuple, Union

import mapbox_earcut
import numpy as np
import shapely
from scipy.spatial import QhullError, Voronoi, cKDTree

from mkfit.concurrency import parallel_map
from mkfit.errors import ArgumentError, DegeneracyError, TopologyError

logger = logging.getLogger(__name__)

# Relative tolerances (scaled by the relevant area or diameter)
AREA_TOLERANCE = 1e-14
COINCIDENT_TOLERANCE = 1e-12
CONVEXITY_TOLERANCE = 1e-12


class Point2(NamedTuple):
    x: float
    y: float


PointsLike = Union[np.ndarray, Sequence[Sequence[float]]]


def as_points(points: PointsLike) -> np.ndarray:
    """Coerce to a finite float array of shape (n, 2)"""
    arr = np.asarray(points, dtype=float)
    if arr.ndim == 1 and arr.size == 2:
        arr = arr.reshape(1, 2)
    if arr.size == 0:
        return np.zeros((0, 2))
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise ArgumentError(f"expected an (n, 2) point array, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ArgumentError("point coordinates must be finite")
    return arr


def signed_area(vertices: np.ndarray) -> float:
    """Shoelace formula; positive for counter-clockwise rings"""
    x, y = vertices[:, 0], vertices[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))


def _scale(vertices: np.ndarray) -> float:
    span = vertices.max(axis=0) - vertices.min(axis=0)
    return float(np.hypot(*span))


@dataclass(frozen=True, eq=False)
class Polygon:
    """Simple polygon, normalised to counter-clockwise orientation"""

    vertices: np.ndarray

    def __post_init__(self):
        v = as_points(self.vertices)
        if len(v) > 3 and np.array_equal(v[0], v[-1]):
            v = v[:-1]
        if len(v) < 3:
            raise ArgumentError(f"polygon needs at least 3 vertices, got {len(v)}")
        area = signed_area(v)
        if abs(area) <= AREA_TOLERANCE * max(_scale(v), 1e-300) ** 2:
            raise DegeneracyError(f"polygon area {area:.3e} below tolerance")
        if area < 0:
            v = v[::-1]
        v = np.ascontiguousarray(v)
        v.setflags(write=False)
        object.__setattr__(self, "vertices", v)

    @classmethod
    def from_vertices(cls, vertices: PointsLike) -> "Polygon":
        """Build from user input, rejecting self-intersecting rings"""
        poly = cls(vertices)
        if not shapely.LinearRing(poly.vertices).is_simple:
            raise TopologyError("polygon boundary self-intersects")
        return poly

    @classmethod
    def from_polar(cls, pairs: Sequence[Sequence[float]]) -> "Polygon":
        """Vertices given as (radius, angle) pairs"""
        polar = np.asarray(pairs, dtype=float)
        if polar.ndim != 2 or polar.shape[1] != 2:
            raise ArgumentError("polar vertices must be (radius, angle) pairs")
        r, theta = polar[:, 0], polar[:, 1]
        return cls.from_vertices(np.column_stack([r * np.cos(theta), r * np.sin(theta)]))

    @property
    def area(self) -> float:
        return signed_area(self.vertices)

    @property
    def bounds(self) -> Tuple[float, float, float, float]:
        lo = self.vertices.min(axis=0)
        hi = self.vertices.max(axis=0)
        return float(lo[0]), float(lo[1]), float(hi[0]), float(hi[1])

    @property
    def diameter(self) -> float:
        diff = self.vertices[:, None, :] - self.vertices[None, :, :]
        return float(np.sqrt((diff ** 2).sum(axis=-1)).max())

    @property
    def centroid(self) -> np.ndarray:
        v = self.vertices
        w = np.roll(v, -1, axis=0)
        cross = v[:, 0] * w[:, 1] - w[:, 0] * v[:, 1]
        return ((v + w) * cross[:, None]).sum(axis=0) / (6.0 * self.area)

    @property
    def is_convex(self) -> bool:
        return is_convex(self.vertices)

    def to_shapely(self) -> shapely.Polygon:
        return shapely.Polygon(self.vertices)

    def contains(self, points: PointsLike) -> np.ndarray:
        pts = as_points(points)
        return shapely.contains_xy(self.to_shapely(), pts[:, 0], pts[:, 1])

    def translated(self, offset: Sequence[float]) -> "Polygon":
        return Polygon(self.vertices + np.asarray(offset, dtype=float))

    def scaled(self, factor: float) -> "Polygon":
        return Polygon(self.vertices * float(factor))


@dataclass(frozen=True, eq=False)
class Triangle:
    u: np.ndarray
    v: np.ndarray
    w: np.ndarray

    @classmethod
    def from_array(cls, tri: np.ndarray) -> "Triangle":
        return cls(np.asarray(tri[0], float), np.asarray(tri[1], float), np.asarray(tri[2], float))

    def as_array(self) -> np.ndarray:
        return np.array([self.u, self.v, self.w], dtype=float)

    @property
    def area(self) -> float:
        return float(abs(triangle_areas(self.as_array()[None])[0]))

    @property
    def centroid(self) -> np.ndarray:
        return (self.u + self.v + self.w) / 3.0


@dataclass(frozen=True, eq=False)
class VoronoiCell:
    """Voronoi cell of one site, clipped to the domain; may be disconnected"""

    site_index: int
    site: np.ndarray
    pieces: Tuple[Polygon, ...] = field(default_factory=tuple)

    @property
    def area(self) -> float:
        return float(sum(piece.area for piece in self.pieces))

    @property
    def is_empty(self) -> bool:
        return not self.pieces


def is_convex(vertices: np.ndarray) -> bool:
    """All turns of a counter-clockwise ring are left turns (up to tolerance)"""
    v = vertices
    e1 = np.roll(v, -1, axis=0) - v
    e2 = np.roll(v, -2, axis=0) - np.roll(v, -1, axis=0)
    cross = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]
    tol = CONVEXITY_TOLERANCE * max(_scale(v), 1e-300) ** 2
    orientation = 1.0 if signed_area(v) >= 0 else -1.0
    return bool(np.all(orientation * cross >= -tol))


def triangle_areas(tris: np.ndarray) -> np.ndarray:
    """Signed areas of an array of triangles with shape (T, 3, 2)"""
    a = tris[:, 1] - tris[:, 0]
    b = tris[:, 2] - tris[:, 0]
    return 0.5 * (a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0])


def polygon_area(poly: Union[Polygon, PointsLike]) -> float:
    """Area of a simple polygon (shoelace)"""
    if isinstance(poly, Polygon):
        return poly.area
    v = as_points(poly)
    if len(v) < 3:
        raise DegeneracyError("fewer than 3 vertices")
    area = abs(signed_area(v))
    if area <= AREA_TOLERANCE * max(_scale(v), 1e-300) ** 2:
        raise DegeneracyError(f"polygon area {area:.3e} below tolerance")
    return area


def triangulate_array(poly: Polygon, reference_area: float = 0.0) -> np.ndarray:
    """
    Triangles of poly as an array of shape (T, 3, 2).

    Convex polygons use a fan from vertex 0; anything else goes through
    ear clipping. Triangles with area below 1e-14 * reference_area are
    dropped (reference_area defaults to the polygon's own area).
    """
    v = poly.vertices
    if is_convex(v):
        idx = np.arange(1, len(v) - 1)
        tris = np.stack([np.broadcast_to(v[0], (len(idx), 2)), v[idx], v[idx + 1]], axis=1)
    else:
        if not shapely.LinearRing(v).is_simple:
            raise TopologyError("cannot triangulate a self-intersecting polygon")
        rings = np.array([len(v)], dtype=np.uint32)
        indices = np.asarray(mapbox_earcut.triangulate_float64(np.array(v, dtype=np.float64), rings), dtype=np.int64)
        tris = v[indices.reshape(-1, 3)]
    ref = reference_area if reference_area > 0 else poly.area
    keep = np.abs(triangle_areas(tris)) >= AREA_TOLERANCE * ref
    return np.ascontiguousarray(tris[keep])


def triangulate(poly: Polygon) -> List[Triangle]:
    return [Triangle.from_array(t) for t in triangulate_array(poly)]


def polygons_from_geometry(geom, min_area: float = 0.0) -> List[Polygon]:
    """Polygonal parts of a shapely geometry (lines and points are discarded)"""
    pieces = []
    for part in shapely.get_parts(geom):
        if part.geom_type != "Polygon" or part.is_empty or part.area <= min_area:
            continue
        try:
            pieces.append(Polygon(np.asarray(part.exterior.coords)[:-1]))
        except DegeneracyError:
            continue
    return pieces


def clip(subject: Polygon, clipper: Polygon) -> List[Polygon]:
    """subject ∩ clipper as a list of simple pieces (empty when disjoint)"""
    result = shapely.intersection(subject.to_shapely(), clipper.to_shapely())
    min_area = AREA_TOLERANCE * min(subject.area, clipper.area)
    return polygons_from_geometry(result, min_area)


def merge_coincident(sites: np.ndarray, tolerance: float) -> np.ndarray:
    """
    For each site, the index of the site it is merged into.

    Sites closer than tolerance collapse onto the lowest index.
    """
    owner = np.arange(len(sites))
    if len(sites) < 2 or tolerance <= 0:
        return owner
    pairs = cKDTree(sites).query_pairs(r=tolerance, output_type="ndarray")
    for i, j in sorted(map(tuple, pairs)):
        root_i, root_j = owner[i], owner[j]
        while owner[root_i] != root_i:
            root_i = owner[root_i]
        while owner[root_j] != root_j:
            root_j = owner[root_j]
        if root_i != root_j:
            owner[max(root_i, root_j)] = min(root_i, root_j)
    for i in range(len(owner)):
        root = owner[i]
        while owner[root] != root:
            root = owner[root]
        owner[i] = root
    return owner


def _clip_halfplane(poly: np.ndarray, normal: np.ndarray, offset: float) -> np.ndarray:
    """Sutherland-Hodgman step: keep {x : normal . x <= offset}"""
    if len(poly) == 0:
        return poly
    d = poly @ normal - offset
    inside = d <= 0
    if inside.all():
        return poly
    if not inside.any():
        return np.zeros((0, 2))
    out = []
    n = len(poly)
    for i in range(n):
        j = (i + 1) % n
        if inside[i]:
            out.append(poly[i])
        if inside[i] != inside[j]:
            t = d[i] / (d[i] - d[j])
            out.append(poly[i] + t * (poly[j] - poly[i]))
    return np.asarray(out)


def _halfplane_regions(sites: np.ndarray, box: np.ndarray) -> List[np.ndarray]:
    """Each cell as the box cut by every bisector half-plane (O(N^2))"""
    sq = (sites ** 2).sum(axis=1)

    def region(i: int) -> np.ndarray:
        poly = box
        for j in range(len(sites)):
            if j == i:
                continue
            poly = _clip_halfplane(poly, 2.0 * (sites[j] - sites[i]), sq[j] - sq[i])
            if len(poly) == 0:
                break
        return poly

    return parallel_map(region, range(len(sites)))


def _qhull_regions(sites: np.ndarray, center: np.ndarray, radius: float) -> List[np.ndarray]:
    """
    Bounded Voronoi regions from qhull.

    Four sentinel sites far outside the disc of the given radius make every
    real site an interior point, so its region is finite; the sentinels'
    bisectors lie outside that disc and never touch the domain.
    """
    far = 4.0 * radius
    sentinels = center + far * np.array([[1.0, 1.0], [-1.0, 1.0], [-1.0, -1.0], [1.0, -1.0]])
    vor = Voronoi(np.vstack([sites, sentinels]))
    regions = []
    for i in range(len(sites)):
        region = vor.regions[vor.point_region[i]]
        if not region or -1 in region:
            raise QhullError(f"unbounded region for site {i}")
        verts = vor.vertices[region]
        angles = np.arctan2(verts[:, 1] - sites[i, 1], verts[:, 0] - sites[i, 0])
        regions.append(verts[np.argsort(angles)])
    return regions


def voronoi_cells(sites: PointsLike, domain: Polygon) -> List[VoronoiCell]:
    """
    Voronoi cells of sites clipped to domain, one cell per input site.

    Coincident sites are merged onto the lowest index; the others get an
    empty cell.
    """
    pts = as_points(sites)
    if len(pts) == 0:
        raise ArgumentError("voronoi_cells needs at least one site")
    owner = merge_coincident(pts, COINCIDENT_TOLERANCE * domain.diameter)
    kept = np.flatnonzero(owner == np.arange(len(pts)))
    if len(kept) < len(pts):
        logger.warning(f"Merged {len(pts) - len(kept)} coincident sites")
    unique = pts[kept]

    domain_geom = domain.to_shapely()
    min_area = AREA_TOLERANCE * domain.area
    pieces_by_site = {}
    if len(unique) == 1:
        pieces_by_site[int(kept[0])] = [domain]
    else:
        everything = np.vstack([unique, domain.vertices])
        lo, hi = everything.min(axis=0), everything.max(axis=0)
        center = 0.5 * (lo + hi)
        radius = float(np.hypot(*(hi - lo))) + 1.0e-9
        try:
            regions = _qhull_regions(unique, center, radius)
        except QhullError as exc:
            logger.debug(f"qhull failed ({exc}); using half-plane clipping")
            box = center + 2.0 * radius * np.array([[-1.0, -1.0], [1.0, -1.0], [1.0, 1.0], [-1.0, 1.0]])
            regions = _halfplane_regions(unique, box)
        raw = np.array(
            [shapely.Polygon(r) if len(r) >= 3 else shapely.Polygon() for r in regions],
            dtype=object,
        )
        clipped = shapely.intersection(raw, domain_geom)
        for slot, geom in zip(kept, clipped):
            pieces_by_site[int(slot)] = polygons_from_geometry(geom, min_area)

    return [
        VoronoiCell(site_index=i, site=pts[i].copy(), pieces=tuple(pieces_by_site.get(i, ())))
        for i in range(len(pts))
    ]


def cell_triangles(cell: VoronoiCell, reference_area: float) -> np.ndarray:
    """All triangles of a cell's pieces, shape (T, 3, 2)"""
    if cell.is_empty:
        return np.zeros((0, 3, 2))
    parts = [triangulate_array(piece, reference_area) for piece in cell.pieces]
    return np.concatenate(parts, axis=0) if parts else np.zeros((0, 3, 2))


def sample_in_triangles(tris: np.ndarray, n: int, rng: np.random.Generator) -> np.ndarray:
    """n uniform points in the union of triangles (chosen by area, then uniform inside)"""
    areas = np.abs(triangle_areas(tris))
    which = rng.choice(len(tris), size=n, p=areas / areas.sum())
    r1 = rng.random(n)
    r2 = rng.random(n)
    flip = r1 + r2 > 1.0
    r1[flip] = 1.0 - r1[flip]
    r2[flip] = 1.0 - r2[flip]
    t = tris[which]
    return t[:, 0] + r1[:, None] * (t[:, 1] - t[:, 0]) + r2[:, None] * (t[:, 2] - t[:, 0])


def bounding_box(points: np.ndarray, pad: float = 0.0) -> Polygon:
    lo = points.min(axis=0) - pad
    hi = points.max(axis=0) + pad
    if math.isclose(lo[0], hi[0]) or math.isclose(lo[1], hi[1]):
        span = max(float(np.max(hi - lo)), 1.0)
        lo, hi = lo - 0.5 * span, hi + 0.5 * span
    return Polygon(np.array([[lo[0], lo[1]], [hi[0], lo[1]], [hi[0], hi[1]], [lo[0], hi[1]]]))
