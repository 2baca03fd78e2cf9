"""
Verification suites run by the `verify` command.

Every suite draws its instances from a seeded generator and returns one
CheckResult per check; a suite passes when all of its checks pass.
"""
import logging
import math
from dataclasses import dataclass
from typing import Callable, Dict, List

import numpy as np
from scipy.integrate import quad

from mkfit.errors import ArgumentError
from mkfit.field import discrete_field, first_variation, triangle_scalar_moment, triangle_vector_moment
from mkfit.functional import SobolevParams, objective, ot_oracle, sobolev_cost, sobolev_gradient
from mkfit.geometry import Polygon, sample_in_triangles, voronoi_cells
from mkfit.measure import Empirical, Uniform, site_hit_mass
from mkfit.seeds import cover_walk, spanning_walk_seed
from mkfit.spline import CubicSegment, SampledCurve, SegmentLength, fit_cubic, segment_arclength

logger = logging.getLogger(__name__)

UNIT_SQUARE = Polygon.from_vertices([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
CHEVRON = Polygon.from_vertices([[-1.0, -0.75], [0.0, 0.75], [1.0, -0.75], [0.0, -0.25]])

# fraction of Monte-Carlo comparisons allowed outside 3 sigma (expected rate 0.27%)
MC_OUTLIER_FRACTION = 0.01


@dataclass(frozen=True)
class CheckResult:
    suite: str
    name: str
    passed: bool
    measured: float
    tolerance: float

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"[{status}] {self.suite}/{self.name}: measured={self.measured:.3e} tolerance={self.tolerance:.3e}"


def _random_triangle(rng: np.random.Generator) -> np.ndarray:
    while True:
        tri = rng.uniform(-1.0, 1.0, size=(3, 2))
        e1, e2 = tri[1] - tri[0], tri[2] - tri[0]
        if abs(e1[0] * e2[1] - e1[1] * e2[0]) > 0.05:
            return tri


def _mc_vector_moment(tri: np.ndarray, base: np.ndarray, p: float, n: int, rng: np.random.Generator):
    """Monte-Carlo estimate of the vector moment and its standard error, per component"""
    e1, e2 = tri[1] - tri[0], tri[2] - tri[0]
    area = 0.5 * abs(e1[0] * e2[1] - e1[1] * e2[0])
    pts = sample_in_triangles(tri[None], n, rng)
    diff = pts - base
    r = np.hypot(diff[:, 0], diff[:, 1])
    values = p * area * diff * (r ** (p - 2.0))[:, None]
    return values.mean(axis=0), values.std(axis=0, ddof=1) / math.sqrt(n)


def suite_moments(rng: np.random.Generator, ci: bool) -> List[CheckResult]:
    n = 10 ** 4 if ci else 10 ** 6
    checks = []
    exact = triangle_vector_moment(np.array([[0, 0], [1, 0], [0, 1]], float), [0.0, 0.0], 2)
    error = float(np.max(np.abs(exact - 1.0 / 3.0)))
    checks.append(CheckResult("moments", "p2_unit_triangle", error <= 1e-12, error, 1e-12))

    scalar = triangle_scalar_moment(np.array([[0, 0], [1, 0], [0, 1]], float), [0.0, 0.0], 2)
    checks.append(CheckResult("moments", "p2_scalar_unit_triangle", abs(scalar - 1 / 6) <= 1e-12,
                              abs(scalar - 1 / 6), 1e-12))

    outliers, total = 0, 0
    for _ in range(200):
        tri = _random_triangle(rng)
        base = rng.uniform(-1.5, 1.5, size=2)
        estimate, sigma = _mc_vector_moment(tri, base, 2.0, n, rng)
        z = np.abs(triangle_vector_moment(tri, base, 2.0) - estimate) / np.maximum(sigma, 1e-300)
        outliers += int(np.count_nonzero(z > 3.0))
        total += 2
    fraction = outliers / total
    checks.append(CheckResult("moments", "p2_vs_monte_carlo_3sigma", fraction <= MC_OUTLIER_FRACTION,
                              fraction, MC_OUTLIER_FRACTION))

    tri = np.array([[0, 0], [1, 0], [0, 1]], float)
    estimate, sigma = _mc_vector_moment(tri, np.array([2.0, 2.0]), 3.0, n, rng)
    z = float(np.max(np.abs(triangle_vector_moment(tri, [2.0, 2.0], 3.0) - estimate) / sigma))
    checks.append(CheckResult("moments", "p3_far_base_vs_monte_carlo", z <= 3.0, z, 3.0))

    equilateral = np.array([[0.0, 0.0], [1.0, 0.0], [0.5, math.sqrt(3) / 2]])
    centroid = equilateral.mean(axis=0)
    sym = max(float(np.max(np.abs(triangle_vector_moment(equilateral, centroid, p)))) for p in (1.0, 1.5, 3.0))
    checks.append(CheckResult("moments", "equilateral_centroid_symmetry", sym <= 1e-12, sym, 1e-12))
    return checks


def _relative_gap(predicted: float, measured: float, scale: float) -> float:
    return abs(predicted - measured) / max(abs(predicted), scale, 1e-300)


def suite_fd(rng: np.random.Generator, ci: bool) -> List[CheckResult]:
    instances = 10 if ci else 100
    eps = 1e-5
    measure = Uniform(UNIT_SQUARE)
    worst = 0.0
    for t in range(instances):
        p = (1.5, 2.0, 3.0)[t % 3]
        sites = rng.uniform(0.05, 0.95, size=(int(rng.integers(5, 31)), 2))
        xi = rng.normal(size=sites.shape)
        cells = voronoi_cells(sites, UNIT_SQUARE)
        field = discrete_field(sites, cells, measure, p)
        predicted = first_variation(field, xi, np.zeros(len(sites)), p)
        fd = (objective(sites + eps * xi, measure, p) - objective(sites - eps * xi, measure, p)) / (2 * eps)
        scale = float(np.sum(field.magnitudes * np.hypot(xi[:, 0], xi[:, 1]) * field.masses))
        worst = max(worst, _relative_gap(predicted, fd, 1e-3 * scale))
    checks = [CheckResult("fd", "first_variation_vs_central_difference", worst <= 1e-3, worst, 1e-3)]

    atom = np.array([[0.25, 0.75]])
    rho = Empirical.from_points(atom)
    xi = np.array([[0.0, 3.0]])
    field = discrete_field(atom, voronoi_cells(atom, UNIT_SQUARE), rho, 1.0)
    predicted = first_variation(field, xi, site_hit_mass(rho, atom), 1.0)
    forward = (objective(atom + eps * xi, rho, 1.0) - objective(atom, rho, 1.0)) / eps
    gap = abs(predicted - forward)
    checks.append(CheckResult("fd", "p1_atom_correction", gap <= 1e-9, gap, 1e-9))
    return checks


def suite_ot(rng: np.random.Generator, ci: bool) -> List[CheckResult]:
    worst = 0.0
    for t in range(100):
        p = (1.0, 2.0)[t % 2]
        m, n = int(rng.integers(1, 5)), int(rng.integers(1, 5))
        rho = Empirical.from_points(rng.uniform(size=(m, 2)), rng.uniform(0.1, 1.0, size=m))
        sites = rng.uniform(size=(n, 2))
        worst = max(worst, abs(ot_oracle(rho, sites, p) - objective(sites, rho, p)))
    return [CheckResult("ot", "transport_equals_nearest_site_objective", worst <= 1e-9, worst, 1e-9)]


def suite_arclength(rng: np.random.Generator, ci: bool) -> List[CheckResult]:
    line = fit_cubic([[0.0, 0.0], [3.0, 4.0]]).segment(0)
    gap = abs(segment_arclength(line) - 5.0)
    checks = [CheckResult("arclength", "line_3_4_5", gap <= 1e-14, gap, 1e-14)]
    worst = 0.0
    closed_form = 0
    trials = 100 if ci else 1000
    for _ in range(trials):
        segment = CubicSegment(rng.normal(size=(4, 2)))
        reference, _ = quad(segment.speed, 0.0, 1.0, epsabs=1e-14, epsrel=1e-13, limit=500)
        worst = max(worst, abs(segment_arclength(segment) - reference) / max(reference, 1.0))
        closed_form += SegmentLength(segment).method == "elliptic"
    checks.append(CheckResult("arclength", "segments_vs_quadrature", worst <= 1e-10, worst, 1e-10))
    share = closed_form / trials
    checks.append(CheckResult("arclength", "elliptic_path_share", share >= 0.8, share, 0.8))
    return checks


def _random_sampled_curve(rng: np.random.Generator, n: int) -> SampledCurve:
    steps = rng.normal(size=(n - 1, 2)) * 0.3 + np.array([1.0, 0.0])
    points = np.vstack([[0.0, 0.0], np.cumsum(steps, axis=0)])
    return SampledCurve.from_points(points)


def suite_gradient(rng: np.random.Generator, ci: bool) -> List[CheckResult]:
    worst = 0.0
    h = 1e-6
    for t in range(10 if ci else 50):
        params = SobolevParams(k=(1, 2)[t % 2], q=(1.5, 2.0)[(t // 2) % 2])
        curve = _random_sampled_curve(rng, 12)
        gradient = sobolev_gradient(curve, params)
        fd = np.zeros_like(gradient)
        for i in range(len(curve)):
            for d in range(2):
                bump = np.zeros_like(curve.points)
                bump[i, d] = h
                plus = sobolev_cost(curve.with_points(curve.points + bump), params).total
                minus = sobolev_cost(curve.with_points(curve.points - bump), params).total
                fd[i, d] = (plus - minus) / (2 * h)
        worst = max(worst, float(np.linalg.norm(gradient - fd) / max(np.linalg.norm(fd), 1e-300)))
    return [CheckResult("gradient", "sobolev_gradient_vs_central_difference", worst <= 1e-5, worst, 1e-5)]


def suite_spanning(rng: np.random.Generator, ci: bool) -> List[CheckResult]:
    checks = []
    for label, domain in (("square", UNIT_SQUARE), ("chevron", CHEVRON)):
        measure = Uniform(domain)
        for eps in (0.3, 0.2, 0.1):
            points = spanning_walk_seed(domain, eps)
            value = objective(points, measure, 2.0)
            checks.append(CheckResult("spanning", f"{label}_eps{eps}_objective", value <= eps ** 2, value, eps ** 2))
            cover, walk = cover_walk(domain, eps)
            steps = len(walk) - 1
            bound = max(2 * len(cover) - 3, 0)
            checks.append(CheckResult("spanning", f"{label}_eps{eps}_walk_steps", steps <= bound, steps, bound))
    return checks


SUITES: Dict[str, Callable[[np.random.Generator, bool], List[CheckResult]]] = {
    "moments": suite_moments,
    "fd": suite_fd,
    "ot": suite_ot,
    "arclength": suite_arclength,
    "gradient": suite_gradient,
    "spanning": suite_spanning,
}


def run_suite(name: str, seed: int = 0, ci: bool = False) -> List[CheckResult]:
    """Run one suite, or every suite for 'all'"""
    if name == "all":
        results = []
        for suite in SUITES:
            results.extend(run_suite(suite, seed, ci))
        return results
    if name not in SUITES:
        raise ArgumentError(f"unknown suite '{name}'; choose from {', '.join(['all', *SUITES])}")
    logger.info(f"Running verification suite '{name}' (seed={seed}, ci={ci})")
    return SUITES[name](np.random.default_rng(seed), ci)
