"""
Initial curves: Hilbert polylines and their mollifications, spanning walks
over an epsilon-cover, sinusoid and line seeds, and
cost-inflating reparametrizations of an existing curve.
"""
import logging
import math
from dataclasses import dataclass
from typing import Callable, List, Optional, Tuple, Union

import numpy as np
import shapely
from hilbertcurve.hilbertcurve import HilbertCurve
from scipy.ndimage import convolve1d
from scipy.sparse import csgraph
from scipy.spatial import cKDTree

from mkfit.errors import ArgumentError, NumericalError
from mkfit.functional import SobolevParams, sobolev_cost
from mkfit.geometry import Polygon, PointsLike, as_points
from mkfit.measure import Uniform, sample
from mkfit.spline import SampledCurve, fit_cubic

logger = logging.getLogger(__name__)

MAX_HILBERT_ORDER = 12
REPARAM_RELATIVE_TOLERANCE = 0.01
REPARAM_MAX_BISECTIONS = 80


@dataclass(frozen=True)
class HilbertSeed:
    order: int
    mollify_width: float = 0.0


@dataclass(frozen=True)
class SpanningWalkSeed:
    epsilon: float
    samples_per_step: int = 8


@dataclass(frozen=True)
class SinusoidSeed:
    """(t, amplitude * sin(frequency * t)) for t in [-half_width, half_width]"""

    amplitude: float
    frequency: float
    half_width: float
    n_samples: int


@dataclass(frozen=True)
class LineSeed:
    """(t, slope * t) for t in [-half_width, half_width]"""

    slope: float
    half_width: float
    n_samples: int


@dataclass(frozen=True, eq=False)
class ExplicitSeed:
    points: Optional[np.ndarray] = None
    random_count: int = 0


SeedSpec = Union[HilbertSeed, SpanningWalkSeed, SinusoidSeed, LineSeed, ExplicitSeed]


def smooth_step(t) -> np.ndarray:
    """sigma(t) = e^(-1/t) / (e^(-1/t) + e^(-1/(1-t))), clamped to [0, 1] outside (0, 1)"""
    t = np.clip(np.asarray(t, dtype=float), 0.0, 1.0)
    inner = (t > 0.0) & (t < 1.0)
    out = (t >= 1.0).astype(float)
    ti = t[inner]
    # divide through by e^(-1/t) to stay finite near 0
    out[inner] = 1.0 / (1.0 + np.exp(1.0 / ti - 1.0 / (1.0 - ti)))
    return out


def hilbert_seed(order: int, bbox: Optional[Polygon] = None) -> np.ndarray:
    """4^order vertices of the Hilbert polyline on the unit square, or mapped onto bbox's bounds"""
    if not 1 <= order <= MAX_HILBERT_ORDER:
        raise ArgumentError(f"hilbert order must be in [1, {MAX_HILBERT_ORDER}], got {order}")
    curve = HilbertCurve(p=order, n=2)
    cells = np.asarray(curve.points_from_distances(list(range(4 ** order))), dtype=float)
    points = cells / (2 ** order - 1)
    if bbox is not None:
        xmin, ymin, xmax, ymax = bbox.bounds
        points = np.array([xmin, ymin]) + points * np.array([xmax - xmin, ymax - ymin])
    return points


def _bump(x: np.ndarray) -> np.ndarray:
    out = np.zeros_like(x)
    inside = np.abs(x) < 1.0
    out[inside] = np.exp(-1.0 / (1.0 - x[inside] ** 2))
    return out


def mollify(points: PointsLike, theta: float) -> np.ndarray:
    """
    Convolve the polyline, parametrized uniformly on [0, 1], with a bump of
    half-width theta. The parameter is clamped at both ends.
    """
    pts = as_points(points)
    if theta < 0:
        raise ArgumentError(f"theta must be nonnegative, got {theta}")
    if len(pts) < 2 or theta == 0:
        return pts.copy()
    h = 1.0 / (len(pts) - 1)
    half = math.ceil(theta / h)
    offsets = np.arange(-half, half + 1) * h / theta
    weights = _bump(offsets)
    if weights.sum() <= 0:
        return pts.copy()
    weights /= weights.sum()
    return convolve1d(pts, weights, axis=0, mode="nearest")


def _grid_cover(domain: Polygon, epsilon: float) -> np.ndarray:
    """Grid cell centers within epsilon/2 of the domain, projected onto it"""
    spacing = epsilon / math.sqrt(2.0)
    xmin, ymin, xmax, ymax = domain.bounds
    nx = max(1, math.ceil((xmax - xmin) / spacing))
    ny = max(1, math.ceil((ymax - ymin) / spacing))
    cx = 0.5 * (xmin + xmax) + (np.arange(nx) - 0.5 * (nx - 1)) * spacing
    cy = 0.5 * (ymin + ymax) + (np.arange(ny) - 0.5 * (ny - 1)) * spacing
    gx, gy = np.meshgrid(cx, cy)
    centers = np.column_stack([gx.ravel(), gy.ravel()])

    geom = domain.to_shapely()
    candidates = shapely.points(centers)
    distance = shapely.distance(geom, candidates)
    keep = distance <= 0.5 * epsilon
    centers = centers[keep]
    outside = distance[keep] > 0
    if np.any(outside):
        boundary = geom.exterior
        projected = shapely.line_interpolate_point(boundary, shapely.line_locate_point(boundary, candidates[keep][outside]))
        centers[outside] = shapely.get_coordinates(projected)
    _, first = np.unique(np.round(centers, 12), axis=0, return_index=True)
    return centers[np.sort(first)]


def _tree_adjacency(tree) -> List[List[int]]:
    sym = (tree + tree.T).tocsr()
    return [sorted(sym.indices[sym.indptr[i]:sym.indptr[i + 1]].tolist()) for i in range(sym.shape[0])]


def _farthest(adjacency: List[List[int]], start: int) -> Tuple[int, np.ndarray]:
    """Farthest node from start in hops, and the BFS predecessor array"""
    n = len(adjacency)
    depth = np.full(n, -1)
    pred = np.full(n, -1)
    depth[start] = 0
    queue = [start]
    for node in queue:
        for nb in adjacency[node]:
            if depth[nb] < 0:
                depth[nb] = depth[node] + 1
                pred[nb] = node
                queue.append(nb)
    return int(np.argmax(depth)), pred


def cover_walk(domain: Polygon, epsilon: float) -> Tuple[np.ndarray, List[int]]:
    """
    Epsilon-cover of the domain and a walk over its minimal spanning tree.

    The walk starts at one end of a tree diameter, visits the child on the
    diameter last and never returns along the diameter, so it takes at most
    2M - 3 steps for M >= 2 cover points.
    """
    if epsilon <= 0:
        raise ArgumentError(f"epsilon must be positive, got {epsilon}")
    cover = _grid_cover(domain, epsilon)
    m = len(cover)
    if m <= 1:
        return cover, [0] * m

    graph = cKDTree(cover).sparse_distance_matrix(cKDTree(cover), max_distance=2.0 * epsilon, output_type="coo_matrix")
    n_components, _ = csgraph.connected_components(graph, directed=False)
    if n_components > 1:
        logger.warning(f"Cover graph has {n_components} components at epsilon={epsilon}; using all pairs")
        diff = cover[:, None, :] - cover[None, :, :]
        graph = np.hypot(diff[..., 0], diff[..., 1])
    tree = csgraph.minimum_spanning_tree(graph)
    adjacency = _tree_adjacency(tree)

    a, _ = _farthest(adjacency, 0)
    b, pred = _farthest(adjacency, a)
    on_path = set()
    node = b
    while node >= 0:
        on_path.add(node)
        node = int(pred[node])

    def children(node: int, parent: int) -> List[int]:
        kids = [c for c in adjacency[node] if c != parent]
        return sorted(kids, key=lambda c: c in on_path)

    walk = [a]
    stack = [(a, iter(children(a, -1)))]
    while stack:
        node, pending = stack[-1]
        child = next(pending, None)
        if child is None:
            stack.pop()
            if stack and node not in on_path:
                walk.append(stack[-1][0])
            continue
        walk.append(child)
        stack.append((child, iter(children(child, node))))
    return cover, walk


def spanning_walk_seed(domain: Polygon, epsilon: float, samples_per_step: int = 8) -> np.ndarray:
    """Walk over an epsilon-cover joined by smooth steps; every domain point lies within epsilon of it"""
    if epsilon <= 0:
        raise ArgumentError(f"epsilon must be positive, got {epsilon}")
    if epsilon > domain.diameter:
        return domain.centroid[None, :].copy()
    cover, walk = cover_walk(domain, epsilon)
    if len(walk) <= 1:
        return cover[:1].copy() if len(cover) else domain.centroid[None, :].copy()
    ramp = smooth_step(np.linspace(0.0, 1.0, samples_per_step + 1)[:-1])
    pieces = []
    for u, v in zip(walk[:-1], walk[1:]):
        pieces.append(cover[u] + ramp[:, None] * (cover[v] - cover[u]))
    pieces.append(cover[walk[-1]][None, :])
    return np.vstack(pieces)


def sinusoid_seed(amplitude: float, frequency: float, half_width: float, n_samples: int) -> np.ndarray:
    if n_samples < 2 or half_width <= 0:
        raise ArgumentError("sinusoid seed needs n_samples >= 2 and half_width > 0")
    t = np.linspace(-half_width, half_width, n_samples)
    return np.column_stack([t, amplitude * np.sin(frequency * t)])


def line_seed(slope: float, half_width: float, n_samples: int) -> np.ndarray:
    if n_samples < 2 or half_width <= 0:
        raise ArgumentError("line seed needs n_samples >= 2 and half_width > 0")
    t = np.linspace(-half_width, half_width, n_samples)
    return np.column_stack([t, slope * t])


def build_seed(spec: SeedSpec, domain: Polygon, rng_seed: int = 0) -> np.ndarray:
    """Points of the initial curve described by spec"""
    if isinstance(spec, HilbertSeed):
        return mollify(hilbert_seed(spec.order, domain), spec.mollify_width)
    if isinstance(spec, SpanningWalkSeed):
        return spanning_walk_seed(domain, spec.epsilon, spec.samples_per_step)
    if isinstance(spec, SinusoidSeed):
        return sinusoid_seed(spec.amplitude, spec.frequency, spec.half_width, spec.n_samples)
    if isinstance(spec, LineSeed):
        return line_seed(spec.slope, spec.half_width, spec.n_samples)
    if isinstance(spec, ExplicitSeed):
        if spec.points is not None:
            return as_points(spec.points)
        if spec.random_count < 2:
            raise ArgumentError("random explicit seed needs at least 2 points")
        return sample(Uniform(domain), spec.random_count, rng_seed)
    raise ArgumentError(f"unknown seed spec {type(spec).__name__}")


def _plateau(epsilon: float) -> Callable[[np.ndarray], np.ndarray]:
    """Monotone map of [-1, 1] onto itself; identity at epsilon = 1, steeper as epsilon shrinks"""

    def psi(u: np.ndarray) -> np.ndarray:
        return (1.0 - epsilon) * np.sign(u) * smooth_step(np.abs(u) / epsilon) + epsilon * u

    return psi


def _oscillation(amplitude: float, waves: int) -> Callable[[np.ndarray], np.ndarray]:
    """Back-and-forth map of [-1, 1] into itself; identity at amplitude 0"""
    freq = waves * math.pi

    def psi(u: np.ndarray) -> np.ndarray:
        return u + amplitude * (1.0 - u ** 2) * np.sin(freq * u) / freq

    return psi


def _reparametrize(curve: SampledCurve, psi: Callable[[np.ndarray], np.ndarray]) -> SampledCurve:
    """
    Resample the curve along phi(s) = c + r psi((s - c) / r) on the middle
    half of its parameter range, identity elsewhere.
    """
    start = float(curve.params[0])
    length = float(curve.params[-1] - start)
    center, radius = 0.5 * length, 0.25 * length

    def phi(s: np.ndarray) -> np.ndarray:
        out = s.copy()
        window = np.abs(s - center) < radius
        out[window] = center + radius * psi((s[window] - center) / radius)
        return np.clip(out, 0.0, length)

    fine = np.linspace(0.0, length, 64 * len(curve) + 1)
    steepest = float(np.max(np.abs(np.diff(phi(fine)))) / (fine[1] - fine[0]))
    count = max(len(curve), math.ceil((len(curve) - 1) * max(steepest, 1.0)) + 1)

    s_out = np.linspace(0.0, length, count)
    index = np.interp(start + phi(s_out), curve.params, np.arange(len(curve), dtype=float))
    points = fit_cubic(curve.points).evaluate(index)
    points[0], points[-1] = curve.points[0], curve.points[-1]
    return SampledCurve(
        points=points,
        params=start + s_out,
        spacing=length / (count - 1),
        total_arclength=curve.total_arclength,
    )


def _bisect(family: Callable[[float], SampledCurve], params: SobolevParams, target: float,
            identity_end: float, extreme_end: float) -> Optional[SampledCurve]:
    """Bisect the family parameter between its identity end and extreme end to hit target"""
    extreme = family(extreme_end)
    if sobolev_cost(extreme, params).total < target:
        return None
    lo, hi = identity_end, extreme_end
    best = extreme
    for _ in range(REPARAM_MAX_BISECTIONS):
        mid = 0.5 * (lo + hi)
        candidate = family(mid)
        cost = sobolev_cost(candidate, params).total
        if abs(cost - target) <= REPARAM_RELATIVE_TOLERANCE * target:
            return candidate
        if cost < target:
            lo = mid
        else:
            hi, best = mid, candidate
    logger.warning("Reparametrization bisection did not reach tolerance")
    return best


def bad_reparametrization(curve: SampledCurve, params: SobolevParams, target_cost: float) -> SampledCurve:
    """
    Resample the same image so its Sobolev cost reaches target_cost.

    First-order costs use a back-and-forth oscillation whose wave count
    doubles until the target is reachable; higher orders compress the middle
    of the curve into a plateau.
    """
    current = sobolev_cost(curve, params).total
    if target_cost < current * (1.0 - 1e-12):
        raise ArgumentError(f"target cost {target_cost} is below the current cost {current}")
    if target_cost <= current * (1.0 + REPARAM_RELATIVE_TOLERANCE):
        return curve

    if params.k == 1:
        waves = 1
        while waves <= 1 << 12:
            result = _bisect(
                lambda a: _reparametrize(curve, _oscillation(a, waves)),
                params, target_cost, 0.0, 0.5 * waves * math.pi,
            )
            if result is not None:
                logger.debug(f"Oscillation reparametrization with {waves} waves")
                return result
            waves *= 2
    else:
        floor = 1e-1
        while floor >= 1e-3:
            # bisect in log(epsilon) so both ends are resolved
            result = _bisect(
                lambda t: _reparametrize(curve, _plateau(math.exp(t))),
                params, target_cost, 0.0, math.log(floor),
            )
            if result is not None:
                return result
            floor /= 10.0
    raise NumericalError(f"could not reach target cost {target_cost}")
