import math

import numpy as np
import pytest
from scipy.spatial import cKDTree

from mkfit.errors import ArgumentError
from mkfit.functional import SobolevParams, objective, sobolev_cost
from mkfit.measure import Uniform
from mkfit.seeds import (
    ExplicitSeed,
    HilbertSeed,
    LineSeed,
    SinusoidSeed,
    SpanningWalkSeed,
    bad_reparametrization,
    build_seed,
    cover_walk,
    hilbert_seed,
    line_seed,
    mollify,
    smooth_step,
    spanning_walk_seed,
)
from mkfit.spline import SampledCurve, arclength_resample, fit_cubic

FIG_WIDTHS = (0.0, 2 ** 4 / 2 ** 16, 2 ** 7 / 2 ** 16, 2 ** 12 / 2 ** 16)


def hausdorff(a: np.ndarray, b: np.ndarray) -> float:
    return max(float(cKDTree(b).query(a)[0].max()), float(cKDTree(a).query(b)[0].max()))


# ========== hilbert_seed ==========

def test_order_one_is_the_u_shape():
    points = hilbert_seed(1)
    assert len(points) == 4
    assert {tuple(p) for p in points} == {(0.0, 0.0), (0.0, 1.0), (1.0, 1.0), (1.0, 0.0)}


@pytest.mark.parametrize("order", [2, 3, 5])
def test_hilbert_vertex_count_and_spacing(order):
    points = hilbert_seed(order)
    assert len(points) == 4 ** order
    steps = np.hypot(*np.diff(points, axis=0).T)
    assert np.allclose(steps, 1.0 / (2 ** order - 1))


def test_hilbert_order_out_of_range():
    with pytest.raises(ArgumentError):
        hilbert_seed(0)
    with pytest.raises(ArgumentError):
        hilbert_seed(13)


def test_hilbert_seed_fills_the_bounding_box(chevron):
    points = hilbert_seed(3, chevron)
    assert np.allclose(points.min(axis=0), chevron.vertices.min(axis=0))
    assert np.allclose(points.max(axis=0), chevron.vertices.max(axis=0))


def test_finer_hilbert_curves_fit_better(unit_square):
    rho = Uniform(unit_square)
    assert objective(hilbert_seed(8), rho, 2.0) < objective(hilbert_seed(4), rho, 2.0)


# ========== mollify ==========

def test_mollify_zero_width_is_identity(rng):
    points = rng.normal(size=(30, 2))
    assert np.array_equal(mollify(points, 0.0), points)


def test_mollify_is_linear_and_translation_equivariant(rng):
    a, b = rng.normal(size=(40, 2)), rng.normal(size=(40, 2))
    assert np.allclose(mollify(2 * a - b, 0.1), 2 * mollify(a, 0.1) - mollify(b, 0.1))
    shift = np.array([5.0, -1.0])
    assert np.allclose(mollify(a + shift, 0.1), mollify(a, 0.1) + shift)


def test_wide_mollifier_keeps_clamped_ends():
    line = np.column_stack([np.linspace(0.0, 1.0, 101), np.zeros(101)])
    out = mollify(line, 1.0)
    # clamped ends stay apart: x runs from E[max(U, 0)] to 1 - E[max(U, 0)] for U ~ bump
    assert out[0, 0] == pytest.approx(0.1672, abs=2e-3)
    assert out[-1, 0] == pytest.approx(1.0 - out[0, 0], abs=1e-12)
    assert out[50, 0] == pytest.approx(0.5, abs=1e-12)
    assert np.all(np.diff(out[:, 0]) > 0)
    assert np.array_equal(out[:, 1], np.zeros(101))


def test_mollification_worsens_the_fit_monotonically(unit_square):
    rho = Uniform(unit_square)
    base = hilbert_seed(8)
    values = [objective(mollify(base, theta), rho, 2.0) for theta in FIG_WIDTHS]
    assert all(a <= b for a, b in zip(values, values[1:]))


# ========== spanning_walk_seed ==========

def test_smooth_step_endpoints():
    values = smooth_step([-1.0, 0.0, 0.5, 1.0, 2.0])
    assert np.allclose(values, [0.0, 0.0, 0.5, 1.0, 1.0])


def test_coarse_cover_of_unit_square(unit_square):
    cover, walk = cover_walk(unit_square, 0.75)
    assert len(cover) <= 4
    assert len(walk) - 1 <= 5


@pytest.mark.parametrize("domain_name", ["unit_square", "appendix_triangle", "chevron"])
@pytest.mark.parametrize("eps", [0.3, 0.2, 0.1])
def test_spanning_walk_guarantee(domain_name, eps, request):
    domain = request.getfixturevalue(domain_name)
    cover, walk = cover_walk(domain, eps)
    assert set(walk) == set(range(len(cover)))
    assert len(walk) - 1 <= max(2 * len(cover) - 3, 0)
    points = spanning_walk_seed(domain, eps)
    assert objective(points, Uniform(domain), 2.0) <= eps ** 2


def test_unit_square_eps_01_objective(unit_square):
    assert objective(spanning_walk_seed(unit_square, 0.1), Uniform(unit_square), 2.0) <= 0.01


def test_huge_epsilon_gives_a_single_point(unit_square):
    points = spanning_walk_seed(unit_square, 10.0)
    assert points.shape == (1, 2)


def test_walk_steps_are_short(unit_square):
    cover, walk = cover_walk(unit_square, 0.2)
    steps = np.hypot(*np.diff(cover[walk], axis=0).T)
    assert np.all(steps < 0.4)


# ========== build_seed ==========

def test_build_each_seed_kind(unit_square):
    assert build_seed(HilbertSeed(2), unit_square).shape == (16, 2)
    assert len(build_seed(SpanningWalkSeed(0.5), unit_square)) >= 2
    sinusoid = build_seed(SinusoidSeed(0.005, 200.0, 0.05, 500), unit_square)
    assert sinusoid.shape == (500, 2)
    assert sinusoid[-1, 0] == pytest.approx(0.05)
    assert np.allclose(build_seed(LineSeed(0.004, 0.2, 500), unit_square), line_seed(0.004, 0.2, 500))
    assert np.allclose(build_seed(ExplicitSeed(points=[[0, 0], [1, 1]]), unit_square), [[0, 0], [1, 1]])


def test_random_explicit_seed_is_deterministic(unit_square):
    a = build_seed(ExplicitSeed(random_count=20), unit_square, rng_seed=4)
    b = build_seed(ExplicitSeed(random_count=20), unit_square, rng_seed=4)
    assert np.array_equal(a, b)
    assert unit_square.contains(a).all()


# ========== bad_reparametrization ==========

def arc_curve() -> SampledCurve:
    theta = np.linspace(0.0, 0.75 * math.pi, 200)
    return arclength_resample(fit_cubic(np.column_stack([np.cos(theta), np.sin(theta)])), 0.02)


def test_target_equal_to_current_is_identity():
    curve = arc_curve()
    params = SobolevParams(k=1, q=2.0)
    same = bad_reparametrization(curve, params, sobolev_cost(curve, params).total)
    assert same is curve


def test_target_below_current_rejected():
    curve = arc_curve()
    params = SobolevParams(k=2, q=2.0)
    with pytest.raises(ArgumentError):
        bad_reparametrization(curve, params, 0.5 * sobolev_cost(curve, params).total)


@pytest.mark.parametrize("k", [1, 2])
@pytest.mark.parametrize("factor", [1.5, 2.0, 4.0])
def test_reparametrization_hits_target_and_keeps_image(k, factor):
    curve = arc_curve()
    params = SobolevParams(k=k, q=2.0)
    target = factor * sobolev_cost(curve, params).total
    worse = bad_reparametrization(curve, params, target)
    assert sobolev_cost(worse, params).total == pytest.approx(target, rel=0.01)
    assert hausdorff(worse.points, curve.points) < 2 * curve.spacing
