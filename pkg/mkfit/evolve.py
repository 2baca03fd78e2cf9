"""
The curve evolution loop.

Each step resamples the current knots by arc length, builds Voronoi cells
of the samples over the target's support, and moves every sample along
c(i) * (F - lambda(i) * G), where F is the (reweighted, smoothed)
barycenter field and G the gradient of the Sobolev cost. The moved samples
become the knots of the next step.
"""
import logging
import math
import time
from contextlib import contextmanager
from dataclasses import dataclass, field as dataclass_field
from typing import Callable, List, Optional

import numpy as np

from mkfit.errors import ArgumentError, StageError
from mkfit.field import BarycenterField, discrete_field, kappa_rescale
from mkfit.functional import SobolevParams, objective_from_cells, sobolev_cost, sobolev_gradient, soft_objective
from mkfit.geometry import Polygon, PointsLike, VoronoiCell, as_points, voronoi_cells
from mkfit.measure import TargetMeasure, Uniform, support_domain
from mkfit.seeds import SeedSpec, build_seed
from mkfit.spline import SampledCurve, arclength_resample, fit_cubic

logger = logging.getLogger(__name__)

RATIONAL_CAP_FACTOR = 1e3


@dataclass(frozen=True)
class CSchedule:
    """c(i) = scale * (i / denominator) ** exponent; exponent defaults to p"""

    scale: float = 1.0
    denominator: float = 1.0
    exponent: Optional[float] = None


@dataclass(frozen=True)
class LambdaSchedule:
    """
    linear:   coefficient * (1 - c(i))
    rational: coefficient * (1 - c(i)) / c(i), capped where c(i) = 0
    constant: coefficient
    """

    coefficient: float = 0.0
    mode: str = "linear"
    cap: Optional[float] = None

    def __post_init__(self):
        if self.mode not in ("linear", "rational", "constant"):
            raise ArgumentError(f"unknown lambda schedule mode '{self.mode}'")


@dataclass(frozen=True)
class SmoothingWidths:
    y: int = 0
    field: int = 0
    grad: int = 0


@dataclass(frozen=True)
class LineSearch:
    """Backtracking on the soft objective, replacing c(i)"""

    initial_step: float = 1.0
    shrink: float = 0.5
    max_halvings: int = 20


@dataclass(frozen=True, eq=False)
class EvolveConfig:
    p: float
    sobolev: SobolevParams
    delta: float
    kappa: float
    c_schedule: CSchedule
    lambda_schedule: LambdaSchedule
    smoothing: SmoothingWidths
    iterations: int
    domain: Polygon
    measure: TargetMeasure
    seed: SeedSpec
    rng_seed: int = 0
    frame_stride: int = 1
    line_search: Optional[LineSearch] = None

    def __post_init__(self):
        if self.p < 1:
            raise ArgumentError(f"p must be at least 1, got {self.p}")
        if self.delta <= 0:
            raise ArgumentError(f"delta must be positive, got {self.delta}")
        if not 0.0 <= self.kappa <= 1.0:
            raise ArgumentError(f"kappa must be in [0, 1], got {self.kappa}")
        if self.iterations < 1:
            raise ArgumentError(f"iterations must be at least 1, got {self.iterations}")
        if min(self.smoothing.y, self.smoothing.field, self.smoothing.grad) < 0:
            raise ArgumentError("smoothing widths must be nonnegative")
        if self.frame_stride < 1:
            raise ArgumentError(f"frame stride must be at least 1, got {self.frame_stride}")


@dataclass(frozen=True)
class Diagnostics:
    iteration: int
    n_samples: int
    arclength: float
    objective: float
    cost_total: float
    cost_per_order: tuple
    soft_objective: float
    max_field: float
    max_gradient: float
    c: float
    lam: float
    effective_step: float
    step_bound: float
    step_bound_violated: bool
    outside_support: int
    seconds: float

    def as_row(self) -> dict:
        row = {
            "iteration": self.iteration,
            "n_samples": self.n_samples,
            "arclength": self.arclength,
            "objective": self.objective,
            "cost_total": self.cost_total,
        }
        for a, value in enumerate(self.cost_per_order):
            row[f"cost_order_{a}"] = value
        row.update(
            soft_objective=self.soft_objective,
            max_field=self.max_field,
            max_gradient=self.max_gradient,
            c=self.c,
            lam=self.lam,
            effective_step=self.effective_step,
            step_bound=self.step_bound,
            step_bound_violated=int(self.step_bound_violated),
            outside_support=self.outside_support,
        )
        return row


@dataclass(eq=False)
class EvolveState:
    iteration: int
    knots: np.ndarray
    samples: Optional[SampledCurve] = None
    cells: List[VoronoiCell] = dataclass_field(default_factory=list)
    field: Optional[BarycenterField] = None
    gradient: Optional[np.ndarray] = None
    diagnostics: Optional[Diagnostics] = None


@dataclass(frozen=True, eq=False)
class FrameRecord:
    """One iteration's outcome; cells and field are kept only on frame iterations"""

    iteration: int
    diagnostics: Diagnostics
    samples: np.ndarray
    knots: np.ndarray
    cells: Optional[List[VoronoiCell]] = None
    field: Optional[BarycenterField] = None

    @property
    def is_frame(self) -> bool:
        return self.cells is not None


def schedule_c(config: EvolveConfig, i: int) -> float:
    if i < 0:
        raise ArgumentError(f"iteration must be nonnegative, got {i}")
    sched = config.c_schedule
    exponent = config.p if sched.exponent is None else sched.exponent
    return sched.scale * (i / sched.denominator) ** exponent


def schedule_lambda(config: EvolveConfig, i: int) -> float:
    sched = config.lambda_schedule
    if sched.mode == "constant":
        return sched.coefficient
    c = schedule_c(config, i)
    if sched.mode == "linear":
        return sched.coefficient * (1.0 - c)
    cap = sched.coefficient * RATIONAL_CAP_FACTOR if sched.cap is None else sched.cap
    if c == 0.0:
        return cap
    return min(cap, sched.coefficient * (1.0 - c) / c)


def smooth(vectors: PointsLike, width: int) -> np.ndarray:
    """Moving average over windows of 2*width+1 entries, shrunk symmetrically near the ends"""
    if width < 0:
        raise ArgumentError(f"smoothing width must be nonnegative, got {width}")
    v = np.asarray(vectors, dtype=float)
    if width == 0 or len(v) == 0:
        return v.copy()
    n = len(v)
    idx = np.arange(n)
    half = np.minimum(width, np.minimum(idx, n - 1 - idx))
    lo, hi = idx - half, idx + half + 1
    cumulative = np.concatenate([np.zeros((1,) + v.shape[1:]), np.cumsum(v, axis=0)])
    counts = (hi - lo).reshape((n,) + (1,) * (v.ndim - 1))
    return (cumulative[hi] - cumulative[lo]) / counts


def apply_update(points: np.ndarray, field: np.ndarray, gradient: np.ndarray, c: float, lam: float) -> np.ndarray:
    """Y + c (F - lambda G)"""
    return points + c * (field - lam * gradient)


@contextmanager
def _stage(name: str):
    try:
        yield
    except StageError:
        raise
    except Exception as exc:
        raise StageError(name, exc) from exc


def _line_search(config: EvolveConfig, samples: SampledCurve, direction: np.ndarray, lam: float,
                 current: float) -> float:
    search = config.line_search
    step = search.initial_step
    for _ in range(search.max_halvings):
        moved = samples.with_points(samples.points + step * direction)
        value = soft_objective(moved.points, moved, config.measure, config.p, lam, config.sobolev)
        if value < current:
            return step
        step *= search.shrink
    logger.debug("Line search found no decrease; holding points")
    return 0.0


def step(state: EvolveState, config: EvolveConfig) -> EvolveState:
    started = time.perf_counter()
    i = state.iteration

    with _stage("fit"):
        curve = fit_cubic(state.knots)
    with _stage("resample"):
        samples = arclength_resample(curve, config.delta)
    with _stage("smooth_samples"):
        samples = samples.with_points(smooth(samples.points, config.smoothing.y))
    sites = samples.points
    with _stage("cells"):
        cells = voronoi_cells(sites, support_domain(config.measure, sites))
    with _stage("field"):
        raw_field = discrete_field(sites, cells, config.measure, config.p)
    with _stage("kappa"):
        scaled = kappa_rescale(raw_field, config.kappa)
    with _stage("smooth_field"):
        field_vectors = smooth(scaled.vectors, config.smoothing.field)
    with _stage("gradient"):
        gradient = sobolev_gradient(samples, config.sobolev)
    with _stage("smooth_gradient"):
        gradient = smooth(gradient, config.smoothing.grad)

    c = schedule_c(config, i)
    lam = schedule_lambda(config, i)
    direction = field_vectors - lam * gradient

    with _stage("diagnostics"):
        value = objective_from_cells(sites, cells, config.measure, config.p)
        cost = sobolev_cost(samples, config.sobolev)
        soft = value + lam * cost.total

    with _stage("update"):
        if config.line_search is not None:
            c = _line_search(config, samples, direction, lam, soft)
        knots = apply_update(sites, field_vectors, gradient, c, lam)

    effective_step = c * float(np.max(np.hypot(direction[:, 0], direction[:, 1]))) if len(direction) else 0.0
    decrease_rate = float(np.sum(raw_field.magnitudes * raw_field.masses))
    step_bound = value / decrease_rate if decrease_rate > 0 else math.inf
    violated = effective_step > step_bound
    if violated:
        logger.warning(
            f"Iteration {i}: effective step {effective_step:.3e} exceeds objective/C_F bound {step_bound:.3e}"
        )
    outside = 0
    if isinstance(config.measure, Uniform):
        outside = int(np.count_nonzero(~config.measure.domain.contains(sites)))
        if outside:
            logger.debug(f"Iteration {i}: {outside} samples outside the support")

    diagnostics = Diagnostics(
        iteration=i,
        n_samples=len(sites),
        arclength=samples.total_arclength,
        objective=value,
        cost_total=cost.total,
        cost_per_order=cost.contributions,
        soft_objective=soft,
        max_field=float(np.max(np.hypot(field_vectors[:, 0], field_vectors[:, 1]))),
        max_gradient=float(np.max(np.hypot(gradient[:, 0], gradient[:, 1]))),
        c=c,
        lam=lam,
        effective_step=effective_step,
        step_bound=step_bound,
        step_bound_violated=violated,
        outside_support=outside,
        seconds=time.perf_counter() - started,
    )
    logger.debug(f"Iteration {i}: {diagnostics.as_row()}")
    return EvolveState(
        iteration=i + 1,
        knots=knots,
        samples=samples,
        cells=cells,
        field=raw_field,
        gradient=gradient,
        diagnostics=diagnostics,
    )


def initial_state(config: EvolveConfig) -> EvolveState:
    with _stage("seed"):
        knots = as_points(build_seed(config.seed, config.domain, config.rng_seed))
    return EvolveState(iteration=0, knots=knots)


def run(config: EvolveConfig, on_frame: Optional[Callable[[FrameRecord], None]] = None) -> List[FrameRecord]:
    """Run config.iterations steps from the seed; one record per iteration"""
    state = initial_state(config)
    records = []
    logger.info(f"Evolving {len(state.knots)} seed points for {config.iterations} iterations")
    for i in range(config.iterations):
        state = step(state, config)
        is_frame = i % config.frame_stride == 0 or i == config.iterations - 1
        record = FrameRecord(
            iteration=i,
            diagnostics=state.diagnostics,
            samples=state.samples.points,
            knots=state.knots,
            cells=state.cells if is_frame else None,
            field=state.field if is_frame else None,
        )
        if on_frame is not None:
            on_frame(record)
        records.append(record)
    return records
