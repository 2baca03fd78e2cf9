"""
Cubic curves through knots, arc length, arc-length resampling and
B-spline re-interpolation.
"""
import logging
import math
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy import sparse
from scipy.integrate import quad
from scipy.interpolate import BSpline, CubicSpline
from scipy.linalg import LinAlgError, solve_banded
from scipy.optimize import brentq
from scipy.special import elliprd, elliprf, elliprj

from mkfit.config import settings
from mkfit.errors import ArgumentError, DegeneracyError, NumericalError
from mkfit.geometry import PointsLike, as_points

logger = logging.getLogger(__name__)

ROOT_RESIDUAL_TOLERANCE = 1e-8
STATIONARY_SPEED = 1e-9
NEWTON_MAX_STEPS = 60

# elliptic arc length: cases handed to adaptive quadrature
CUSP_TOLERANCE = 1e-7
ROOT_SEPARATION = 1e-6
FAR_ROOT = 1e6
NEAR_AFFINE_SPAN = 100.0
POLE_MARGIN = 0.05
MIDPOINT_GAP = 1e-3


@dataclass(frozen=True, eq=False)
class CubicSegment:
    """
    One cubic piece on t in [0, 1].

    coeffs has shape (4, 2), highest power first:
    f(t) = c[0] t^3 + c[1] t^2 + c[2] t + c[3].
    """

    coeffs: np.ndarray

    def evaluate(self, t):
        c = self.coeffs
        t = np.asarray(t, dtype=float)[..., None]
        return ((c[0] * t + c[1]) * t + c[2]) * t + c[3]

    def velocity(self, t):
        c = self.coeffs
        t = np.asarray(t, dtype=float)[..., None]
        return (3.0 * c[0] * t + 2.0 * c[1]) * t + c[2]

    def speed(self, t):
        v = self.velocity(t)
        return np.hypot(v[..., 0], v[..., 1])

    def scaled(self, factor: float) -> "CubicSegment":
        return CubicSegment(self.coeffs * float(factor))


@dataclass(frozen=True, eq=False)
class CubicCurve:
    """Natural cubic spline through knots; segment i lives on u in [i, i+1]"""

    knots: np.ndarray
    spline: CubicSpline

    @property
    def n_segments(self) -> int:
        return len(self.knots) - 1

    def segment(self, i: int) -> CubicSegment:
        return CubicSegment(np.array(self.spline.c[:, i, :]))

    def evaluate(self, u) -> np.ndarray:
        return self.spline(u)

    def derivative(self, u, nu: int = 1) -> np.ndarray:
        return self.spline(u, nu)


@dataclass(frozen=True, eq=False)
class SampledCurve:
    """
    Ordered curve samples with the parameter value of each sample.

    For arc-length resampled curves params are the arc-length positions and
    knot_params the matching parameters on the source cubic.
    """

    points: np.ndarray
    params: np.ndarray
    spacing: float
    total_arclength: float
    knot_params: Optional[np.ndarray] = None

    @classmethod
    def from_points(cls, points: PointsLike, params: Optional[Sequence[float]] = None,
                    spacing: Optional[float] = None) -> "SampledCurve":
        pts = as_points(points)
        if params is None:
            gaps = np.hypot(*np.diff(pts, axis=0).T)
            params = np.concatenate([[0.0], np.cumsum(gaps)])
        params = np.asarray(params, dtype=float)
        if params.shape != (len(pts),):
            raise ArgumentError("params must have one entry per point")
        span = float(params[-1] - params[0]) if len(params) else 0.0
        if spacing is None:
            spacing = span / max(len(pts) - 1, 1)
        return cls(points=pts, params=params, spacing=float(spacing), total_arclength=span)

    def __len__(self) -> int:
        return len(self.points)

    def with_points(self, points: np.ndarray) -> "SampledCurve":
        return SampledCurve(as_points(points), self.params, self.spacing, self.total_arclength)


@dataclass(frozen=True, eq=False)
class BSplineCurve:
    """Interpolating B-spline with its collocation data"""

    order: int
    control_points: np.ndarray
    knots: np.ndarray
    params: np.ndarray
    bandwidth: Tuple[int, int]

    @property
    def degree(self) -> int:
        return self.order - 1

    @property
    def spline(self) -> BSpline:
        return BSpline(self.knots, self.control_points, self.degree)

    def evaluate(self, params) -> np.ndarray:
        return self.spline(params)


def fit_cubic(knots: PointsLike) -> CubicCurve:
    pts = as_points(knots)
    if len(pts) < 2:
        raise ArgumentError(f"fit_cubic needs at least 2 knots, got {len(pts)}")
    spline = CubicSpline(np.arange(len(pts), dtype=float), pts, bc_type="natural")
    return CubicCurve(knots=pts, spline=spline)


def _speed_polynomial(coeffs: np.ndarray) -> np.ndarray:
    """|f'(t)|^2 as a quartic, highest power first"""
    quartic = np.zeros(5)
    for dim in range(2):
        d = np.array([3.0 * coeffs[0, dim], 2.0 * coeffs[1, dim], coeffs[2, dim]])
        quartic += np.convolve(d, d)
    return quartic


def _grid_roots(poly: np.ndarray, samples: int = 10001) -> np.ndarray:
    """Sign changes on a dense grid, refined by bisection"""
    grid = np.linspace(0.0, 1.0, samples)
    values = np.polyval(poly, grid)
    roots = list(grid[values == 0.0])
    for i in np.flatnonzero(values[:-1] * values[1:] < 0):
        roots.append(brentq(lambda t: np.polyval(poly, t), grid[i], grid[i + 1], xtol=1e-15))
    return np.unique(np.asarray(roots, dtype=float))


def real_roots_in_unit_interval(poly: np.ndarray) -> np.ndarray:
    """
    Real roots in [0, 1] of a polynomial (highest power first).

    Companion-matrix eigenvalues with one Newton polish; falls back to a grid
    scan when the polished residuals are poor.
    """
    poly = np.asarray(poly, dtype=float)
    scale = np.max(np.abs(poly)) if poly.size else 0.0
    if scale == 0.0:
        return np.zeros(0)
    poly = poly / scale
    nonzero = np.flatnonzero(np.abs(poly) > 1e-12)
    poly = poly[nonzero[0]:]
    if len(poly) < 2:
        return np.zeros(0)
    poly = poly / poly[0]
    deriv = np.polyder(poly)

    candidates = np.roots(poly)
    real = candidates[np.abs(candidates.imag) <= 1e-6 * (1.0 + np.abs(candidates.real))].real
    polished = []
    for r in real:
        slope = np.polyval(deriv, r)
        if slope != 0.0:
            r = r - np.polyval(poly, r) / slope
        polished.append(r)
    polished = np.asarray(polished, dtype=float)

    magnitude = np.polyval(np.abs(poly), np.abs(polished)) if len(polished) else np.zeros(0)
    residual = np.abs(np.polyval(poly, polished)) if len(polished) else np.zeros(0)
    if np.any(residual > ROOT_RESIDUAL_TOLERANCE * np.maximum(magnitude, 1.0)):
        logger.warning("Companion-matrix roots inaccurate; using grid scan")
        return _grid_roots(poly)

    tol = 1e-12
    inside = polished[(polished >= -tol) & (polished <= 1.0 + tol)]
    inside = np.clip(np.sort(inside), 0.0, 1.0)
    if len(inside) > 1:
        inside = inside[np.concatenate([[True], np.diff(inside) > 1e-14])]
    return inside


def speed_quartic_roots(segment: CubicSegment) -> np.ndarray:
    """Stationary points of the speed in [0, 1] (roots of d/dt |f'|^2)"""
    quartic = _speed_polynomial(segment.coeffs)
    derivative = np.polyder(quartic)
    if not np.any(derivative):
        logger.debug("Constant-speed segment, no stationary points")
        return np.zeros(0)
    return real_roots_in_unit_interval(derivative)


def _is_linear(segment: CubicSegment) -> bool:
    c = segment.coeffs
    return not np.any(c[0]) and not np.any(c[1])


def _complex_velocity(coeffs: np.ndarray) -> Tuple[complex, complex, complex]:
    """Velocity as the complex quadratic a t^2 + b t + c"""
    z = coeffs[:, 0] + 1j * coeffs[:, 1]
    return 3.0 * complex(z[0]), 2.0 * complex(z[1]), complex(z[2])


def _quadratic_roots(a: complex, b: complex, c: complex) -> Optional[Tuple[complex, complex]]:
    disc = np.sqrt(b * b - 4.0 * a * c)
    if (b.conjugate() * disc).real < 0.0:
        disc = -disc
    q = -0.5 * (b + disc)
    if q == 0:
        return None
    return q / a, c / q


@dataclass(frozen=True)
class _Chart:
    """
    Even form of the squared speed around one real point.

    With e = t - w and s = e / (1 - h e) the speed is
    |a| sqrt((A1 + B1 s^2)(A2 + B2 s^2)) / (1 + h s)^2 and dt = ds / (1 + h s)^2.
    t = w + 1/h is sent to s = infinity; h = 0 is a plain shift.
    """

    w: float
    h: float
    A: Tuple[float, float]
    B: Tuple[float, float]

    @property
    def pole(self) -> Optional[float]:
        return None if self.h == 0.0 else self.w + 1.0 / self.h

    def to_s(self, t: float) -> float:
        e = t - self.w
        return e / (1.0 - self.h * e)

    def _even(self, s: float, n: float) -> Tuple[float, float, float]:
        """s-odd antiderivatives from 0: 1/sqrtQ, s^2/sqrtQ and s^2/((1 - n s^2) sqrtQ)"""
        A1, A2 = self.A
        p, q = self.B[0] / A1, self.B[1] / A2
        root = math.sqrt(A1 * A2)
        ss = s * s
        x, y = 1.0 + p * ss, 1.0 + q * ss
        first = s * float(elliprf(1.0, x, y)) / root
        second = s * ss * float(elliprd(x, y, 1.0)) / (3.0 * root)
        if n == 0.0:
            third = second
        else:
            third = s * ss * float(elliprj(1.0, x, y, 1.0 - n * ss)) / (3.0 * root)
        return first, second, third

    def _odd(self, s: float, n: float) -> float:
        """Antiderivative from 0 of s / ((1 - n s^2) sqrtQ), elementary in s^2"""

        def potential(sigma: float) -> float:
            X1 = self.A[0] + self.B[0] * sigma
            X2 = self.A[1] + self.B[1] * sigma
            b1 = self.B[0] + n * self.A[0]
            b2 = self.B[1] + n * self.A[1]
            x = math.sqrt(b2 * X1 / (b1 * X2))
            return (2.0 * math.log1p(x) - math.log(abs(1.0 - n * sigma)) + math.log(b1 * X2)) / math.sqrt(b1 * b2)

        return 0.5 * (potential(s * s) - potential(0.0))

    def weighted(self, s: float) -> Tuple[float, float, float]:
        """
        Antiderivatives from s = 0 of e^j ds / sqrtQ for j = 0, 1, 2.

        The j = 2 term rewrites s^2 / (1 + h s)^2 through 1/(1 + h s) and
        1/(1 + h s)^2, the latter reduced by differentiating sqrtQ / (1 + h s).
        """
        h = self.h
        n = h * h
        e0, e2, e2n = self._even(s, n)
        o1n = self._odd(s, n)
        e1 = o1n - h * e2n
        if h == 0.0:
            return e0, e1, e2

        o1 = self._odd(s, 0.0)
        a4 = self.B[0] * self.B[1]
        a2 = self.A[0] * self.B[1] + self.A[1] * self.B[0]
        a0 = self.A[0] * self.A[1]
        pole = -1.0 / h
        k0 = ((a4 * pole * pole + a2) * pole * pole) + a0
        k1 = (4.0 * a4 * pole * pole + 2.0 * a2) * pole
        k3 = 4.0 * a4 * pole
        z = 1.0 + h * s
        sqrt_q = math.sqrt((self.A[0] + self.B[0] * s * s) * (self.A[1] + self.B[1] * s * s))

        p1 = e0 + n * e2n - h * o1n
        shifted1 = o1 + e0 / h
        shifted2 = e2 + 2.0 * o1 / h + e0 / n
        boundary = sqrt_q / z - math.sqrt(a0)
        p2 = (-boundary - 0.5 * k1 * p1 + 0.5 * k3 * shifted1 / h + a4 * shifted2 / h) / (h * k0)
        return e0, e1, (e0 - 2.0 * p1 + p2) / n


class SegmentLength:
    """
    Arc length of one cubic segment between any two parameters.

    The speed |f'| is |a| |t - r1| |t - r2| for the complex roots of the
    velocity. Mapping the geodesic through r1, r2 onto the imaginary axis
    turns the squared speed into an even quartic, so lengths reduce to
    Carlson's R_F, R_D and R_J plus elementary terms. Segments with a cusp,
    coincident roots or a nearly affine chart are integrated adaptively.
    """

    def __init__(self, segment: CubicSegment):
        self.segment = segment
        self._breakpoints: Optional[np.ndarray] = None
        self._charts: List[_Chart] = []
        self.method = "quadrature"

        a, b, c = _complex_velocity(segment.coeffs)
        if a == 0 and b == 0:
            self.method = "linear"
            self._rate = abs(c)
        elif a == 0:
            self.method = "quadratic"
            root = -c / b
            self._rate, self._u, self._v = abs(b), root.real, abs(root.imag)
        else:
            self._setup_elliptic(a, b, c)

    def _setup_elliptic(self, a: complex, b: complex, c: complex) -> None:
        roots = _quadratic_roots(a, b, c)
        if roots is None:
            return
        (u1, v1), (u2, v2) = [(r.real, abs(r.imag)) for r in roots]
        scale = 1.0 + max(abs(roots[0]), abs(roots[1]))
        if scale > FAR_ROOT:
            return
        if min(v1, v2) <= CUSP_TOLERANCE * scale:
            logger.debug(f"Speed nearly vanishes at t={u1 if v1 < v2 else u2:.6g}; integrating adaptively")
            return
        if math.hypot(u1 - u2, v1 - v2) <= ROOT_SEPARATION * scale:
            return

        # |f'|^2 = P; int sqrt(P) = (t/3 + shift) sqrt(P) + int remainder / sqrt(P), remainder quadratic
        p = _speed_polynomial(self.segment.coeffs)
        dp = np.polyder(p)
        self._shift = p[1] / (12.0 * p[0])
        rest = 2.0 / 3.0 * p - np.polymul([1.0, 0.0], dp) / 6.0 - self._shift * np.concatenate([[0.0], dp]) / 2.0
        self._remainder = rest[2:]
        self._rate = abs(a)
        self._roots = ((u1, v1), (u2, v2))

        # real endpoints of the geodesic through both roots
        qa = u1 - u2
        qb = u2 * u2 - u1 * u1 + v2 * v2 - v1 * v1
        qc = u1 * u2 * (u1 - u2) - v2 * v2 * u1 + v1 * v1 * u2
        if qa == 0.0:
            self._charts = [self._chart(-qc / qb, None)]
        else:
            disc = math.sqrt(max(qb * qb - 4.0 * qa * qc, 0.0))
            q = -0.5 * (qb + math.copysign(disc, qb))
            if q == 0.0:
                return
            lo, hi = sorted((q / qa, qc / q))
            if hi - lo > NEAR_AFFINE_SPAN * (1.0 + min(abs(lo), abs(hi))):
                return
            self._charts = [self._chart(lo, hi), self._chart(hi, lo)]
        self.method = "elliptic"

    def _chart(self, w: float, pole: Optional[float]) -> _Chart:
        h = 0.0 if pole is None else 1.0 / (pole - w)
        A = tuple((w - u) ** 2 + v * v for u, v in self._roots)
        B = tuple((1.0 + h * (w - u)) ** 2 + (h * v) ** 2 for u, v in self._roots)
        return _Chart(w=w, h=h, A=A, B=B)

    @property
    def breakpoints(self) -> np.ndarray:
        if self._breakpoints is None:
            self._breakpoints = speed_quartic_roots(self.segment)
        return self._breakpoints

    def _quadrature(self, t0: float, t1: float) -> float:
        bp = self.breakpoints
        edges = np.concatenate([[t0], bp[(bp > t0) & (bp < t1)], [t1]])
        total = 0.0
        for lo, hi in zip(edges[:-1], edges[1:]):
            value, _ = quad(
                self.segment.speed, lo, hi,
                epsabs=settings.quad_epsabs, epsrel=settings.quad_epsrel, limit=200,
            )
            total += value
        return total

    def _primitive(self, chart: _Chart, t: float) -> float:
        """Antiderivative of the speed, continuous away from the chart's pole"""
        n2, n1, n0 = self._remainder
        w = chart.w
        weights = (n0 + (n1 + n2 * w) * w, n1 + 2.0 * n2 * w, n2)
        moments = chart.weighted(chart.to_s(t))
        reduced = sum(c * m for c, m in zip(weights, moments)) / self._rate
        return (t / 3.0 + self._shift) * float(self.segment.speed(t)) + reduced

    def _clear_of_pole(self, chart: _Chart, t0: float, t1: float) -> bool:
        pole = chart.pole
        if pole is None:
            return True
        margin = POLE_MARGIN * abs(pole - chart.w)
        return not t0 - margin <= pole <= t1 + margin

    def _difference(self, chart: _Chart, t0: float, t1: float) -> float:
        """
        Primitive difference over [t0, t1].

        Halfway between the chart's root and pole two logarithmic terms of the
        primitive cancel; endpoints that close are moved inwards and the short
        remainder is integrated adaptively.
        """
        if chart.pole is None:
            return self._primitive(chart, t1) - self._primitive(chart, t0)
        halfway = 0.5 * (chart.w + chart.pole)
        gap = MIDPOINT_GAP * abs(chart.pole - chart.w)
        a = t0 + 2.0 * gap if abs(t0 - halfway) < gap else t0
        b = t1 - 2.0 * gap if abs(t1 - halfway) < gap else t1
        if b <= a:
            return self._quadrature(t0, t1)
        total = self._primitive(chart, b) - self._primitive(chart, a)
        if a > t0:
            total += self._quadrature(t0, a)
        if b < t1:
            total += self._quadrature(b, t1)
        return total

    def _elliptic(self, t0: float, t1: float) -> float:
        for chart in self._charts:
            if self._clear_of_pole(chart, t0, t1):
                return self._difference(chart, t0, t1)
        lo, hi = self._charts[0].w, self._charts[1].w
        split = lo + 0.25 * (hi - lo)
        if not t0 < split < t1:
            return self._quadrature(t0, t1)
        return self._elliptic(t0, split) + self._elliptic(split, t1)

    def __call__(self, t0: float, t1: float) -> float:
        if t1 == t0:
            return 0.0
        if self.method == "linear":
            return self._rate * (t1 - t0)
        if self.method == "quadratic":
            return self._quadratic(t1) - self._quadratic(t0)
        if self.method == "elliptic":
            value = self._elliptic(t0, t1)
            if math.isfinite(value):
                return value
            logger.warning("Elliptic arc length not finite; integrating adaptively")
        return self._quadrature(t0, t1)

    def _quadratic(self, t: float) -> float:
        x, v = t - self._u, self._v
        if v == 0.0:
            return 0.5 * self._rate * x * abs(x)
        return 0.5 * self._rate * (x * math.hypot(x, v) + v * v * math.asinh(x / v))


def segment_arclength(segment: CubicSegment, t0: float = 0.0, t1: float = 1.0) -> float:
    """Length of the segment between parameters t0 <= t1"""
    if not (0.0 <= t0 <= t1 <= 1.0):
        raise ArgumentError(f"need 0 <= t0 <= t1 <= 1, got t0={t0}, t1={t1}")
    if t0 == t1:
        return 0.0
    return SegmentLength(segment)(t0, t1)


def _invert_arclength(length_of: SegmentLength, target: float, length: float, tolerance: float) -> float:
    """Parameter t with arclength(0, t) = target: Newton, bisection where speed stalls"""
    if target <= 0.0:
        return 0.0
    if target >= length:
        return 1.0
    segment = length_of.segment
    lo, hi = 0.0, 1.0
    t = target / length
    s_t = length_of(0.0, t)
    for _ in range(NEWTON_MAX_STEPS):
        err = s_t - target
        if abs(err) <= tolerance:
            break
        if err > 0:
            hi = t
        else:
            lo = t
        v = float(segment.speed(t))
        t_new = t - err / v if v > STATIONARY_SPEED else 0.5 * (lo + hi)
        if not (lo < t_new < hi):
            t_new = 0.5 * (lo + hi)
        if t_new > t:
            s_t += length_of(t, t_new)
        else:
            s_t -= length_of(t_new, t)
        t = t_new
    return t


def curve_arclengths(curve: CubicCurve) -> np.ndarray:
    """Length of every segment"""
    return np.array([segment_arclength(curve.segment(i)) for i in range(curve.n_segments)])


def arclength_resample(curve: CubicCurve, delta: float) -> SampledCurve:
    """ceil(L / delta) + 1 points equally spaced in arc length, endpoints included"""
    if delta <= 0:
        raise ArgumentError(f"delta must be positive, got {delta}")
    lengths_of = [SegmentLength(curve.segment(i)) for i in range(curve.n_segments)]
    lengths = np.array([length_of(0.0, 1.0) for length_of in lengths_of])
    cumulative = np.concatenate([[0.0], np.cumsum(lengths)])
    total = float(cumulative[-1])
    if total <= 0.0:
        raise DegeneracyError("curve has zero arc length")

    n_gaps = max(1, math.ceil(total / delta - 1e-9))
    targets = np.linspace(0.0, total, n_gaps + 1)
    tolerance = 1e-13 * max(total, 1.0)

    params = np.empty(len(targets))
    for i, s in enumerate(targets):
        j = int(np.searchsorted(cumulative, s, side="right") - 1)
        j = min(max(j, 0), len(lengths_of) - 1)
        while j < len(lengths_of) - 1 and lengths[j] == 0.0:
            j += 1
        local = _invert_arclength(lengths_of[j], s - cumulative[j], lengths[j], tolerance)
        params[i] = j + local

    points = curve.evaluate(params)
    points[0] = curve.knots[0]
    points[-1] = curve.knots[-1]
    return SampledCurve(points=points, params=targets, spacing=float(delta), total_arclength=total, knot_params=params)


def averaged_knots(params: np.ndarray, order: int) -> np.ndarray:
    """Clamped knot vector with interior knots averaged over degree consecutive parameters"""
    degree = order - 1
    n = len(params)
    interior = [params[j + 1:j + degree + 1].mean() for j in range(n - order)]
    return np.concatenate([np.full(order, params[0]), interior, np.full(order, params[-1])])


def _banded(matrix: sparse.spmatrix) -> Tuple[Tuple[int, int], np.ndarray]:
    """(lower, upper) bandwidths and the solve_banded storage of a square sparse matrix"""
    coo = matrix.tocoo()
    offsets = coo.row - coo.col
    lower = int(max(offsets.max(), 0))
    upper = int(max(-offsets.min(), 0))
    ab = np.zeros((lower + upper + 1, matrix.shape[1]))
    ab[upper + coo.row - coo.col, coo.col] = coo.data
    return (lower, upper), ab


def collocation_matrix(knots: np.ndarray, degree: int, params: np.ndarray) -> sparse.csr_matrix:
    return BSpline.design_matrix(params, knots, degree).tocsr()


def _derivative_coefficient_operator(knots: np.ndarray, degree: int, n: int) -> sparse.csr_matrix:
    """Maps spline coefficients to those of its first derivative (one degree lower)"""
    denom = knots[degree + 1:degree + n] - knots[1:n]
    scale = np.divide(degree, denom, out=np.zeros_like(denom), where=denom > 0)
    rows = np.arange(n - 1)
    return sparse.csr_matrix(
        (np.concatenate([-scale, scale]), (np.concatenate([rows, rows]), np.concatenate([rows, rows + 1]))),
        shape=(n - 1, n),
    )


def derivative_matrix(curve: BSplineCurve, nu: int, params: Optional[np.ndarray] = None) -> sparse.csr_matrix:
    """
    Sparse matrix taking control points to nu-th derivatives at params.

    Each row has at most order - nu nonzeros.
    """
    params = curve.params if params is None else np.asarray(params, dtype=float)
    knots, degree = curve.knots, curve.degree
    n = len(curve.control_points)
    operator = sparse.identity(n, format="csr")
    for _ in range(nu):
        operator = _derivative_coefficient_operator(knots, degree, n) @ operator
        knots, degree, n = knots[1:-1], degree - 1, n - 1
    return (collocation_matrix(knots, degree, params) @ operator).tocsr()


def bspline_interpolate(points: PointsLike, order: int, params: Optional[Sequence[float]] = None) -> BSplineCurve:
    """
    B-spline of the given order interpolating points at params.

    params default to chordal (cumulative distance) values; the collocation
    system is banded and solved in banded storage.
    """
    pts = as_points(points)
    if order < 4:
        raise ArgumentError(f"order must be at least 4, got {order}")
    if len(pts) < order:
        raise ArgumentError(f"need at least {order} points for order {order}, got {len(pts)}")
    if params is None:
        params = SampledCurve.from_points(pts).params
    params = np.asarray(params, dtype=float)
    if np.any(np.diff(params) <= 0):
        raise NumericalError("collocation parameters must be strictly increasing")

    knots = averaged_knots(params, order)
    collocation = collocation_matrix(knots, order - 1, params)
    bandwidth, ab = _banded(collocation)
    try:
        control = solve_banded(bandwidth, ab, pts)
    except (LinAlgError, ValueError) as exc:
        raise NumericalError(f"singular collocation system: {exc}") from exc
    if not np.all(np.isfinite(control)):
        raise NumericalError("singular collocation system")
    return BSplineCurve(order=order, control_points=control, knots=knots, params=params, bandwidth=bandwidth)


def solve_transposed(curve: BSplineCurve, rhs: np.ndarray) -> np.ndarray:
    """Solve A^T x = rhs for the collocation matrix A of curve"""
    collocation = collocation_matrix(curve.knots, curve.degree, curve.params)
    bandwidth, ab = _banded(collocation.T.tocsr())
    return solve_banded(bandwidth, ab, rhs)


def derivatives_at(curve: BSplineCurve, params: Sequence[float], max_order: int) -> np.ndarray:
    """Array of shape (len(params), max_order + 1, 2); entry [i, a] is the a-th derivative at params[i]"""
    if max_order < 0 or max_order > curve.order - 2:
        raise ArgumentError(f"max_order must be in [0, {curve.order - 2}], got {max_order}")
    params = np.asarray(params, dtype=float)
    spline = curve.spline
    return np.stack([spline(params, nu) for nu in range(max_order + 1)], axis=1)
