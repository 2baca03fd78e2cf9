import math

import numpy as np
import pytest

from mkfit.errors import ArgumentError
from mkfit.field import (
    BarycenterField,
    discrete_field,
    first_variation,
    kappa_rescale,
    triangle_scalar_moment,
    triangle_vector_moment,
)
from mkfit.functional import objective
from mkfit.geometry import Polygon, sample_in_triangles, voronoi_cells
from mkfit.measure import Empirical, Uniform, nearest_sites, sample, site_hit_mass

UNIT_TRIANGLE = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])


def mc_vector_moment(tri, base, p, n, rng):
    e1, e2 = tri[1] - tri[0], tri[2] - tri[0]
    area = 0.5 * abs(e1[0] * e2[1] - e1[1] * e2[0])
    diff = sample_in_triangles(tri[None], n, rng) - base
    r = np.hypot(diff[:, 0], diff[:, 1])
    values = p * area * diff * (r ** (p - 2.0))[:, None]
    return values.mean(axis=0), values.std(axis=0, ddof=1) / math.sqrt(n)


# ========== triangle moments ==========

def test_p2_unit_triangle_vector_moment():
    assert np.allclose(triangle_vector_moment(UNIT_TRIANGLE, [0.0, 0.0], 2), [1 / 3, 1 / 3], atol=1e-12)


def test_p2_general_formula_matches_quadrature_path(rng):
    # the edge quadrature used for p != 2 must agree with the closed form near p = 2
    tri = rng.uniform(-1, 1, size=(3, 2))
    base = rng.uniform(-1, 1, size=2)
    exact = triangle_vector_moment(tri, base, 2.0)
    near = triangle_vector_moment(tri, base, 2.0 + 1e-9)
    assert np.allclose(near, exact, atol=1e-7)


@pytest.mark.parametrize("p", [1.0, 1.5, 2.0, 3.0, 4.5])
def test_equilateral_centroid_vector_moment_vanishes(p):
    tri = np.array([[0.0, 0.0], [1.0, 0.0], [0.5, math.sqrt(3) / 2]])
    assert np.allclose(triangle_vector_moment(tri, tri.mean(axis=0), p), 0.0, atol=1e-12)


def test_p3_far_base_matches_monte_carlo(rng):
    estimate, sigma = mc_vector_moment(UNIT_TRIANGLE, np.array([2.0, 2.0]), 3.0, 10 ** 6, rng)
    exact = triangle_vector_moment(UNIT_TRIANGLE, [2.0, 2.0], 3.0)
    assert np.all(np.abs(exact - estimate) <= 3 * sigma)


def test_p2_moments_match_monte_carlo(rng):
    outliers = 0
    for _ in range(20):
        tri = rng.uniform(-1, 1, size=(3, 2))
        base = rng.uniform(-1.5, 1.5, size=2)
        estimate, sigma = mc_vector_moment(tri, base, 2.0, 10 ** 5, rng)
        outliers += int(np.count_nonzero(np.abs(triangle_vector_moment(tri, base, 2.0) - estimate) > 3 * sigma))
    assert outliers <= 1


def test_p1_base_inside_triangle_is_finite(rng):
    value = triangle_vector_moment(UNIT_TRIANGLE, [0.2, 0.3], 1.0)
    estimate, sigma = mc_vector_moment(UNIT_TRIANGLE, np.array([0.2, 0.3]), 1.0, 10 ** 6, rng)
    assert np.all(np.isfinite(value))
    assert np.all(np.abs(value - estimate) <= 3 * sigma)


def test_vector_moment_rejects_p_below_one():
    with pytest.raises(ArgumentError):
        triangle_vector_moment(UNIT_TRIANGLE, [0.0, 0.0], 0.5)


def test_p2_unit_triangle_scalar_moment():
    assert triangle_scalar_moment(UNIT_TRIANGLE, [0.0, 0.0], 2) == pytest.approx(1 / 6, abs=1e-15)


def test_scalar_moment_p0_is_area():
    assert triangle_scalar_moment(UNIT_TRIANGLE, [5.0, 5.0], 0) == pytest.approx(0.5)


def test_scalar_moment_of_degenerate_triangle_is_zero():
    flat = np.array([[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]])
    assert triangle_scalar_moment(flat, [0.3, 0.4], 1.7) == 0.0


def test_p1_scalar_moment_square_center(rng):
    halves = np.array([[[0, 0], [1, 0], [1, 1]], [[0, 0], [1, 1], [0, 1]]], dtype=float)
    value = sum(triangle_scalar_moment(t, [0.5, 0.5], 1.0) for t in halves)
    pts = sample_in_triangles(halves, 10 ** 6, rng)
    r = np.hypot(pts[:, 0] - 0.5, pts[:, 1] - 0.5)
    assert abs(value - r.mean()) <= 3 * r.std() / 1000.0
    # closed form for the unit square about its center
    assert value == pytest.approx((math.sqrt(2) + math.asinh(1)) / 6, rel=1e-9)


# ========== discrete_field ==========

def test_centroid_site_of_square_has_zero_field(unit_square):
    field = discrete_field([[0.5, 0.5]], voronoi_cells([[0.5, 0.5]], unit_square), Uniform(unit_square), 2.0)
    assert np.allclose(field.vectors, 0.0, atol=1e-14)
    assert field.masses == pytest.approx([1.0])


def test_empirical_single_atom_field(unit_square):
    rho = Empirical.from_points([[1.0, 0.0]])
    sites = np.array([[0.0, 0.0]])
    field = discrete_field(sites, voronoi_cells(sites, unit_square), rho, 2.0)
    assert np.allclose(field.vectors, [[2.0, 0.0]])
    assert field.masses == pytest.approx([1.0])


def test_uniform_field_matches_monte_carlo(unit_square, rng):
    sites = rng.uniform(0.1, 0.9, size=(5, 2))
    field = discrete_field(sites, voronoi_cells(sites, unit_square), Uniform(unit_square), 2.0)
    n = 10 ** 6
    pts = sample(Uniform(unit_square), n, seed=5)
    owner = nearest_sites(pts, sites)
    for j in range(len(sites)):
        diff = 2.0 * (pts[owner == j] - sites[j])
        sigma = diff.std(axis=0, ddof=1) / math.sqrt(len(diff))
        assert np.all(np.abs(field.vectors[j] - diff.mean(axis=0)) <= 3 * sigma + 1e-12)


@pytest.mark.parametrize("p", [1.5, 2.0, 3.0])
def test_field_is_translation_equivariant(p, unit_square, rng):
    sites = rng.uniform(0.1, 0.9, size=(6, 2))
    shift = np.array([3.0, -2.0])
    moved = unit_square.translated(shift)
    a = discrete_field(sites, voronoi_cells(sites, unit_square), Uniform(unit_square), p)
    b = discrete_field(sites + shift, voronoi_cells(sites + shift, moved), Uniform(moved), p)
    assert np.allclose(a.vectors, b.vectors, atol=1e-9)


@pytest.mark.parametrize("p", [1.5, 2.0, 3.0])
def test_field_scales_with_power_p_minus_one(p, unit_square, rng):
    sites = rng.uniform(0.1, 0.9, size=(6, 2))
    s = 2.5
    big = unit_square.scaled(s)
    a = discrete_field(sites, voronoi_cells(sites, unit_square), Uniform(unit_square), p)
    b = discrete_field(s * sites, voronoi_cells(s * sites, big), Uniform(big), p)
    assert np.allclose(b.vectors, s ** (p - 1) * a.vectors, rtol=1e-8, atol=1e-10)


def test_field_masses_sum_to_one(chevron, rng):
    sites = rng.uniform([-0.8, -0.6], [0.8, 0.6], size=(30, 2))
    field = discrete_field(sites, voronoi_cells(sites, chevron), Uniform(chevron), 2.0)
    assert field.masses.sum() == pytest.approx(1.0, abs=1e-9)


def test_massless_cells_have_zero_field():
    field = BarycenterField(vectors=[[1.0, 2.0], [3.0, 4.0]], masses=[0.0, 1.0], p=2.0)
    assert np.array_equal(field.vectors[0], [0.0, 0.0])


# ========== kappa_rescale ==========

def test_kappa_zero_is_identity():
    field = BarycenterField(vectors=[[1.0, 0.0]], masses=[0.25], p=2.0)
    assert np.array_equal(kappa_rescale(field, 0.0).vectors, field.vectors)


def test_kappa_one_divides_by_mass():
    field = BarycenterField(vectors=[[1.0, 0.0], [1.0, 1.0]], masses=[0.25, 0.75], p=2.0)
    assert np.allclose(kappa_rescale(field, 1.0).vectors[0], [4.0, 0.0])


def test_appendix_kappa_factor():
    field = BarycenterField(vectors=[[1.0, 0.0], [0.0, 0.0]], masses=[0.01, 0.99], p=2.0)
    assert kappa_rescale(field, 0.85).vectors[0, 0] == pytest.approx(0.01 ** -0.85)


def test_kappa_out_of_range():
    field = BarycenterField(vectors=[[1.0, 0.0]], masses=[1.0], p=2.0)
    with pytest.raises(ArgumentError):
        kappa_rescale(field, 1.5)


# ========== first_variation ==========

def test_first_variation_single_atom():
    field = BarycenterField(vectors=[[2.0, 0.0]], masses=[1.0], p=2.0)
    assert first_variation(field, [[1.0, 0.0]], [0.0], 2.0) == pytest.approx(-2.0)


def test_p1_correction_for_site_on_atom_within_1e12(unit_square):
    rho = Empirical.from_points([[0.25, 0.75]])
    sites = np.array([[0.25, 0.75]])
    field = discrete_field(sites, voronoi_cells(sites, unit_square), rho, 1.0)
    value = first_variation(field, [[0.0, 3.0]], site_hit_mass(rho, sites), 1.0)
    assert value == pytest.approx(3.0, abs=1e-9)
    eps = 1e-6
    forward = (objective(sites + eps * np.array([[0.0, 3.0]]), rho, 1.0) - objective(sites, rho, 1.0)) / eps
    assert forward == pytest.approx(value, abs=1e-9)


def test_first_variation_length_mismatch():
    field = BarycenterField(vectors=[[2.0, 0.0]], masses=[1.0], p=2.0)
    with pytest.raises(ArgumentError):
        first_variation(field, [[1.0, 0.0], [0.0, 1.0]], [0.0], 2.0)


@pytest.mark.parametrize("p", [1.5, 2.0, 3.0])
def test_first_variation_matches_central_difference(p, unit_square, rng):
    rho = Uniform(unit_square)
    eps = 1e-5
    for _ in range(4):
        sites = rng.uniform(0.05, 0.95, size=(10, 2))
        xi = rng.normal(size=sites.shape)
        field = discrete_field(sites, voronoi_cells(sites, unit_square), rho, p)
        predicted = first_variation(field, xi, np.zeros(len(sites)), p)
        fd = (objective(sites + eps * xi, rho, p) - objective(sites - eps * xi, rho, p)) / (2 * eps)
        assert fd == pytest.approx(predicted, rel=1e-3, abs=1e-9)


def test_finite_difference_error_shrinks_first_order(unit_square, rng):
    rho = Uniform(unit_square)
    sites = rng.uniform(0.05, 0.95, size=(8, 2))
    xi = rng.normal(size=sites.shape)
    field = discrete_field(sites, voronoi_cells(sites, unit_square), rho, 3.0)
    predicted = first_variation(field, xi, np.zeros(len(sites)), 3.0)
    base = objective(sites, rho, 3.0)
    errors = [abs((objective(sites + eps * xi, rho, 3.0) - base) / eps - predicted) for eps in (1e-2, 1e-3, 1e-4)]
    assert errors[1] < errors[0] and errors[2] < errors[1]


def test_moving_along_field_decreases_objective(unit_square, rng):
    rho = Uniform(unit_square)
    sites = rng.uniform(0.05, 0.95, size=(12, 2))
    field = discrete_field(sites, voronoi_cells(sites, unit_square), rho, 2.0)
    assert objective(sites + 1e-3 * field.vectors, rho, 2.0) < objective(sites, rho, 2.0)


def test_square_as_polygon_centroid():
    assert np.allclose(Polygon.from_vertices([[0, 0], [2, 0], [2, 2], [0, 2]]).centroid, [1.0, 1.0])
