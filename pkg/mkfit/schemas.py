from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator
from typing import Annotated, List, Literal, Optional, Union
from pathlib import Path
import json
import math

from mkfit.errors import ConfigError
from mkfit.evolve import (
    CSchedule, EvolveConfig, LambdaSchedule, LineSearch, SmoothingWidths,
)
from mkfit.functional import SobolevParams
from mkfit.geometry import Polygon
from mkfit.measure import Empirical, TargetMeasure, Uniform
from mkfit.services.artifacts import read_points_csv
from mkfit.seeds import (
    ExplicitSeed, HilbertSeed, LineSeed, SeedSpec, SinusoidSeed, SpanningWalkSeed,
)


class StrictModel(BaseModel):
    """Unknown keys are rejected everywhere in a config file"""
    model_config = ConfigDict(extra="forbid")


# ========== Geometry ==========

class StarSpec(StrictModel):
    """Vertex k at angle 2*pi*k/count with radius radii[k % len(radii)]"""
    count: int = Field(..., ge=3)
    radii: List[float] = Field(..., min_length=1)


class PolygonSpec(StrictModel):
    """Exactly one of: explicit vertices, (radius, angle in radians) pairs, or a star"""
    vertices: Optional[List[List[float]]] = None
    polar: Optional[List[List[float]]] = None
    star: Optional[StarSpec] = None

    @model_validator(mode="after")
    def exactly_one(self):
        given = [v for v in (self.vertices, self.polar, self.star) if v is not None]
        if len(given) != 1:
            raise ValueError("give exactly one of 'vertices', 'polar' or 'star'")
        return self

    def to_polygon(self) -> Polygon:
        if self.vertices is not None:
            return Polygon.from_vertices(self.vertices)
        if self.polar is not None:
            return Polygon.from_polar(self.polar)
        star = self.star
        pairs = [
            [star.radii[k % len(star.radii)], 2.0 * math.pi * k / star.count]
            for k in range(star.count)
        ]
        return Polygon.from_polar(pairs)


# ========== Measure ==========

class UniformMeasureSpec(StrictModel):
    kind: Literal["uniform"] = "uniform"


class EmpiricalMeasureSpec(StrictModel):
    kind: Literal["empirical"]
    csv: Optional[str] = None
    atoms: Optional[List[List[float]]] = None
    weights: Optional[List[float]] = None

    @model_validator(mode="after")
    def one_source(self):
        if (self.csv is None) == (self.atoms is None):
            raise ValueError("give exactly one of 'csv' or 'atoms'")
        if self.weights is not None and self.atoms is None:
            raise ValueError("'weights' needs inline 'atoms'")
        return self


MeasureSpec = Annotated[Union[UniformMeasureSpec, EmpiricalMeasureSpec], Field(discriminator="kind")]


# ========== Seeds ==========

class HilbertSeedSpec(StrictModel):
    kind: Literal["hilbert"]
    order: int = Field(..., ge=1, le=12)
    mollify_width: float = Field(default=0.0, ge=0)


class SpanningWalkSeedSpec(StrictModel):
    kind: Literal["spanning_walk"]
    epsilon: float = Field(..., gt=0)
    samples_per_step: int = Field(default=8, ge=1)


class SinusoidSeedSpec(StrictModel):
    kind: Literal["sinusoid"]
    amplitude: float
    frequency: float
    half_width: float = Field(..., gt=0)
    n_samples: int = Field(..., ge=2)


class LineSeedSpec(StrictModel):
    kind: Literal["line"]
    slope: float
    half_width: float = Field(..., gt=0)
    n_samples: int = Field(..., ge=2)


class ExplicitSeedSpec(StrictModel):
    kind: Literal["explicit"]
    points: Optional[List[List[float]]] = None
    csv: Optional[str] = None
    random: Optional[int] = Field(default=None, ge=2, description="Draw this many uniform points in the domain")

    @model_validator(mode="after")
    def one_source(self):
        if sum(v is not None for v in (self.points, self.csv, self.random)) != 1:
            raise ValueError("give exactly one of 'points', 'csv' or 'random'")
        return self


SeedSpecModel = Annotated[
    Union[HilbertSeedSpec, SpanningWalkSeedSpec, SinusoidSeedSpec, LineSeedSpec, ExplicitSeedSpec],
    Field(discriminator="kind"),
]


# ========== Evolution parameters ==========

class SobolevSpec(StrictModel):
    k: int = Field(default=2, ge=1)
    q: float = Field(default=2.0, ge=1)
    include_zeroth: bool = False


class CScheduleSpec(StrictModel):
    scale: float = Field(default=1.0, ge=0)
    denominator: float = Field(default=1.0, gt=0)
    exponent: Optional[float] = Field(default=None, description="Defaults to p")


class LambdaScheduleSpec(StrictModel):
    coefficient: float = Field(default=0.0, ge=0)
    mode: Literal["linear", "rational", "constant"] = "linear"
    cap: Optional[float] = Field(default=None, ge=0, description="Rational mode value where c(i) = 0")


class SmoothingSpec(StrictModel):
    y: int = Field(default=0, ge=0)
    field: int = Field(default=0, ge=0)
    grad: int = Field(default=0, ge=0)


class LineSearchSpec(StrictModel):
    initial_step: float = Field(default=1.0, gt=0)
    shrink: float = Field(default=0.5, gt=0, lt=1)
    max_halvings: int = Field(default=20, ge=1)


class OutputSpec(StrictModel):
    frame_stride: int = Field(default=10, ge=1)


class OraclesSpec(StrictModel):
    mass_conservation: bool = Field(default=True, description="Check frame cell masses sum to 1")
    suites: List[Literal["moments", "fd", "ot", "arclength", "gradient", "spanning"]] = Field(
        default_factory=list, description="Verification suites to run after the evolution"
    )


class RunConfigFile(StrictModel):
    """A run-config document"""
    name: str = Field(default="run", min_length=1, max_length=255)
    p: float = Field(default=2.0, ge=1)
    delta: float = Field(..., gt=0)
    kappa: float = Field(default=0.0, ge=0, le=1)
    iterations: int = Field(..., ge=1)
    rng_seed: int = 0
    sobolev: SobolevSpec = Field(default_factory=SobolevSpec)
    c_schedule: CScheduleSpec = Field(default_factory=CScheduleSpec)
    lambda_schedule: LambdaScheduleSpec = Field(default_factory=LambdaScheduleSpec)
    smoothing: SmoothingSpec = Field(default_factory=SmoothingSpec)
    domain: PolygonSpec
    measure: MeasureSpec = Field(default_factory=UniformMeasureSpec)
    seed: SeedSpecModel
    output: OutputSpec = Field(default_factory=OutputSpec)
    line_search: Optional[LineSearchSpec] = None
    oracles: OraclesSpec = Field(default_factory=OraclesSpec)

    def to_evolve_config(self, base_dir: Union[str, Path] = ".", iterations: Optional[int] = None,
                         frame_stride: Optional[int] = None) -> EvolveConfig:
        base = Path(base_dir)
        domain = self.domain.to_polygon()
        return EvolveConfig(
            p=self.p,
            sobolev=SobolevParams(self.sobolev.k, self.sobolev.q, self.sobolev.include_zeroth),
            delta=self.delta,
            kappa=self.kappa,
            c_schedule=CSchedule(**self.c_schedule.model_dump()),
            lambda_schedule=LambdaSchedule(**self.lambda_schedule.model_dump()),
            smoothing=SmoothingWidths(**self.smoothing.model_dump()),
            iterations=iterations or self.iterations,
            domain=domain,
            measure=build_measure(self.measure, domain, base),
            seed=build_seed_spec(self.seed, base),
            rng_seed=self.rng_seed,
            frame_stride=frame_stride or self.output.frame_stride,
            line_search=LineSearch(**self.line_search.model_dump()) if self.line_search else None,
        )


class SeedFile(StrictModel):
    """Stand-alone seed document for the `seed` command"""
    seed: SeedSpecModel
    domain: PolygonSpec = Field(
        default_factory=lambda: PolygonSpec(vertices=[[0, 0], [1, 0], [1, 1], [0, 1]])
    )
    rng_seed: int = 0


def build_measure(spec: Union[UniformMeasureSpec, EmpiricalMeasureSpec], domain: Polygon,
                  base_dir: Path) -> TargetMeasure:
    if isinstance(spec, UniformMeasureSpec):
        return Uniform(domain)
    if spec.csv is not None:
        return Empirical.from_csv(base_dir / spec.csv)
    return Empirical.from_points(spec.atoms, spec.weights)


def build_seed_spec(spec, base_dir: Path) -> SeedSpec:
    if isinstance(spec, HilbertSeedSpec):
        return HilbertSeed(spec.order, spec.mollify_width)
    if isinstance(spec, SpanningWalkSeedSpec):
        return SpanningWalkSeed(spec.epsilon, spec.samples_per_step)
    if isinstance(spec, SinusoidSeedSpec):
        return SinusoidSeed(spec.amplitude, spec.frequency, spec.half_width, spec.n_samples)
    if isinstance(spec, LineSeedSpec):
        return LineSeed(spec.slope, spec.half_width, spec.n_samples)
    if spec.csv is not None:
        return ExplicitSeed(points=read_points_csv(base_dir / spec.csv))
    if spec.points is not None:
        return ExplicitSeed(points=spec.points)
    return ExplicitSeed(random_count=spec.random)


def _offending_key(error: ValidationError) -> str:
    first = error.errors()[0]
    return ".".join(str(part) for part in first.get("loc", ()))


def parse_document(model, text: str, source: str = "<config>"):
    """Validate a JSON document against model, raising ConfigError naming the offending key"""
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{source}: invalid JSON: {exc}") from exc
    try:
        return model.model_validate(data)
    except ValidationError as exc:
        key = _offending_key(exc)
        message = exc.errors()[0].get("msg", str(exc))
        raise ConfigError(f"{source}: invalid value for '{key}': {message}", key=key) from exc


def load_run_config(path: Union[str, Path]) -> RunConfigFile:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_document(RunConfigFile, text, str(path))
