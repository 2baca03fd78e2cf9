"""
Fitting objective, Sobolev cost and its gradient, and an exact
transportation oracle for small empirical instances.
"""
import logging
import math
from dataclasses import dataclass
from typing import Iterator, List, Sequence, Tuple

import numpy as np
from scipy.optimize import linprog
from scipy.spatial import cKDTree

from mkfit.concurrency import parallel_map
from mkfit.errors import ArgumentError, DegeneracyError
from mkfit.field import cell_scalar_moment
from mkfit.geometry import PointsLike, VoronoiCell, as_points, cell_triangles, voronoi_cells
from mkfit.measure import Empirical, TargetMeasure, empirical_assignment
from mkfit.spline import BSplineCurve, SampledCurve, bspline_interpolate, derivative_matrix, solve_transposed

logger = logging.getLogger(__name__)

OT_MAX_PAIRS = 64
OT_MAX_TREES = 100_000
OT_FEASIBILITY_TOLERANCE = 1e-12


@dataclass(frozen=True)
class SobolevParams:
    k: int = 2
    q: float = 2.0
    include_zeroth: bool = False

    def __post_init__(self):
        if self.k < 1:
            raise ArgumentError(f"k must be at least 1, got {self.k}")
        if not (1.0 <= self.q < math.inf):
            raise ArgumentError(f"q must be finite and at least 1, got {self.q}")

    @property
    def orders(self) -> List[int]:
        start = 0 if self.include_zeroth else 1
        return list(range(start, self.k + 1))

    @property
    def spline_order(self) -> int:
        return max(4, self.k + 2)


@dataclass(frozen=True)
class CostBreakdown:
    """contributions[a] is the q-norm of the a-th derivatives (0 for excluded orders)"""

    contributions: tuple
    total: float


def objective(sites: PointsLike, measure: TargetMeasure, p: float) -> float:
    """Integral of the p-th power distance from the target to its nearest site"""
    pts = as_points(sites)
    if len(pts) == 0:
        raise ArgumentError("objective needs at least one site")
    if p < 1:
        raise ArgumentError(f"p must be at least 1, got {p}")
    if isinstance(measure, Empirical):
        dist, _ = cKDTree(pts).query(measure.atoms, k=1)
        return float(np.dot(measure.weights, dist ** p))

    return objective_from_cells(pts, voronoi_cells(pts, measure.domain), measure, p)


def objective_from_cells(sites: PointsLike, cells: List[VoronoiCell], measure: TargetMeasure, p: float) -> float:
    """objective() reusing Voronoi cells already built for these sites"""
    pts = as_points(sites)
    if isinstance(measure, Empirical):
        owner = empirical_assignment(measure, pts)
        diff = measure.atoms - pts[owner]
        return float(np.dot(measure.weights, np.hypot(diff[:, 0], diff[:, 1]) ** p))
    domain = measure.domain

    def moment(cell: VoronoiCell) -> float:
        if cell.is_empty:
            return 0.0
        return cell_scalar_moment(cell_triangles(cell, domain.area), pts[cell.site_index], p)

    return float(sum(parallel_map(moment, cells))) / domain.area


def _trapezoid_weights(params: np.ndarray) -> np.ndarray:
    gaps = np.diff(params)
    weights = np.zeros(len(params))
    weights[:-1] += 0.5 * gaps
    weights[1:] += 0.5 * gaps
    return weights


def _interpolate(samples: SampledCurve, params: SobolevParams) -> BSplineCurve:
    order = params.spline_order
    if len(samples) < order:
        raise ArgumentError(f"sobolev cost needs at least {order} samples for k={params.k}, got {len(samples)}")
    return bspline_interpolate(samples.points, order, samples.params)


def _order_terms(curve: BSplineCurve, params: SobolevParams):
    """Yields (order, derivative operator or None for order 0, derivative values)"""
    for a in params.orders:
        if a == 0:
            yield a, None, curve.evaluate(curve.params)
        else:
            operator = derivative_matrix(curve, a)
            yield a, operator, operator @ curve.control_points


def sobolev_cost(samples: SampledCurve, params: SobolevParams) -> CostBreakdown:
    """
    Discrete W^{k,q} norm of the curve re-interpolated by a B-spline.

    Components are nested as (sum over orders and components of the
    integral of |D^a f|^q)^(1/q), with the integral taken by the trapezoid
    rule on the sample parameters.
    """
    curve = _interpolate(samples, params)
    weights = _trapezoid_weights(curve.params)
    contributions = [0.0] * (params.k + 1)
    total = 0.0
    for a, _, values in _order_terms(curve, params):
        term = float(np.dot(weights, (np.abs(values) ** params.q).sum(axis=1)))
        contributions[a] = term ** (1.0 / params.q)
        total += term
    return CostBreakdown(contributions=tuple(contributions), total=total ** (1.0 / params.q))


def sobolev_gradient(samples: SampledCurve, params: SobolevParams) -> np.ndarray:
    """
    Gradient of sobolev_cost(...).total with respect to each sample point,
    sample parameters held fixed.

    Derivatives depend linearly on the points through the banded
    collocation system, so the chain rule needs one transposed banded solve.
    """
    curve = _interpolate(samples, params)
    weights = _trapezoid_weights(curve.params)
    q = params.q
    power_sum = 0.0
    direct = np.zeros_like(curve.control_points)
    through_control = np.zeros_like(curve.control_points)
    for a, operator, values in _order_terms(curve, params):
        power_sum += float(np.dot(weights, (np.abs(values) ** q).sum(axis=1)))
        inner = weights[:, None] * q * np.abs(values) ** (q - 1.0) * np.sign(values)
        if operator is None:
            direct += inner
        else:
            through_control += operator.T @ inner
    if power_sum <= 0.0:
        return np.zeros_like(samples.points)
    gradient = direct + solve_transposed(curve, through_control)
    return gradient * (power_sum ** (1.0 / q - 1.0) / q)


def soft_objective(
    sites: PointsLike,
    curve: SampledCurve,
    measure: TargetMeasure,
    p: float,
    lam: float,
    params: SobolevParams,
) -> float:
    if lam < 0:
        raise ArgumentError(f"lambda must be nonnegative, got {lam}")
    value = objective(sites, measure, p)
    if lam == 0:
        return value
    return value + lam * sobolev_cost(curve, params).total


def _find(parent: List[int], x: int) -> int:
    while parent[x] != x:
        x = parent[x]
    return x


def spanning_trees(m: int, n: int) -> Iterator[Tuple[Tuple[int, int], ...]]:
    """Every spanning tree of the complete bipartite graph K(m, n), as (atom, site) edges"""
    pairs = [(i, j) for i in range(m) for j in range(n)]
    size = m + n - 1
    chosen: List[Tuple[int, int]] = []

    def extend(start: int, parent: List[int]):
        if len(chosen) == size:
            yield tuple(chosen)
            return
        for idx in range(start, len(pairs)):
            if len(pairs) - idx < size - len(chosen):
                break
            i, j = pairs[idx]
            ri, rj = _find(parent, i), _find(parent, m + j)
            if ri == rj:
                continue
            child = list(parent)
            child[ri] = rj
            chosen.append(pairs[idx])
            yield from extend(idx + 1, child)
            chosen.pop()

    yield from extend(0, list(range(m + n)))


def _tree_flows(edges: Sequence[Tuple[int, int]], supply: np.ndarray, demand: np.ndarray) -> np.ndarray:
    """Flows on a spanning tree meeting the marginals, found by peeling leaves"""
    m = len(supply)
    remaining = np.concatenate([supply, demand]).astype(float)
    adjacency = {node: set() for node in range(len(remaining))}
    for e, (i, j) in enumerate(edges):
        adjacency[i].add(e)
        adjacency[m + j].add(e)
    flows = np.zeros(len(edges))
    leaves = [node for node, incident in adjacency.items() if len(incident) == 1]
    while leaves:
        leaf = leaves.pop()
        if len(adjacency[leaf]) != 1:
            continue
        e = adjacency[leaf].pop()
        i, j = edges[e]
        other = m + j if leaf == i else i
        flows[e] = remaining[leaf]
        remaining[other] -= remaining[leaf]
        remaining[leaf] = 0.0
        adjacency[other].discard(e)
        if len(adjacency[other]) == 1:
            leaves.append(other)
    return flows


def _transport_lp(cost: np.ndarray, supply: np.ndarray, demand: np.ndarray) -> float:
    """Transportation problem as a linear program over the m x n plan"""
    m, n = cost.shape
    rows = np.kron(np.eye(m), np.ones((1, n)))
    cols = np.kron(np.ones((1, m)), np.eye(n))
    # the marginals share one redundant equation; drop the last column sum
    a_eq = np.vstack([rows, cols[:-1]])
    b_eq = np.concatenate([supply, demand[:-1]])
    result = linprog(cost.ravel(), A_eq=a_eq, b_eq=b_eq, bounds=(0, None), method="highs")
    if not result.success:
        raise DegeneracyError(f"transport linear program failed: {result.message}")
    return float(result.fun)


def ot_oracle(rho: Empirical, sites: PointsLike, p: float) -> float:
    """
    Exact W_p^p between rho and its nearest-site pushforward.

    Enumerates every basic feasible solution of the transportation problem
    (spanning trees of the bipartite support graph). When there are too many
    trees the same problem goes to the HiGHS simplex instead.
    """
    if not isinstance(rho, Empirical):
        raise ArgumentError("ot_oracle needs an empirical measure")
    sites = as_points(sites)
    owner = empirical_assignment(rho, sites)
    demand = np.bincount(owner, weights=rho.weights, minlength=len(sites))
    charged = np.flatnonzero(demand > 0)
    sites, demand = sites[charged], demand[charged]
    supply = rho.weights
    m, n = len(supply), len(sites)
    if m * n > OT_MAX_PAIRS:
        raise ArgumentError(f"instance too large for exhaustive transport: {m} atoms x {n} sites")
    diff = rho.atoms[:, None, :] - sites[None, :, :]
    cost = np.hypot(diff[..., 0], diff[..., 1]) ** p
    trees = m ** (n - 1) * n ** (m - 1)
    if trees > OT_MAX_TREES:
        logger.debug(f"Transport oracle on {m}x{n}: {trees} spanning trees, solving the linear program")
        return _transport_lp(cost, supply, demand)

    best = math.inf
    for edges in spanning_trees(m, n):
        flows = _tree_flows(edges, supply, demand)
        if np.any(flows < -OT_FEASIBILITY_TOLERANCE):
            continue
        rows, cols = zip(*edges)
        best = min(best, float(np.dot(flows, cost[rows, cols])))
    logger.debug(f"Transport oracle on {m}x{n}: {best}")
    return best
