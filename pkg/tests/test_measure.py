import numpy as np
import pytest

from mkfit.errors import ArgumentError
from mkfit.geometry import voronoi_cells
from mkfit.measure import (
    Empirical,
    Uniform,
    cell_mass,
    cell_masses,
    nearest_sites,
    sample,
    site_hit_mass,
    support_domain,
)
from mkfit.functional import objective
from tests.conftest import random_sites_in


def test_single_atom_samples_are_the_atom():
    rho = Empirical.from_points([[0.3, -2.0]])
    assert np.array_equal(sample(rho, 100, seed=1), np.tile([0.3, -2.0], (100, 1)))


def test_uniform_square_sample_mean(unit_square):
    n = 10 ** 6
    points = sample(Uniform(unit_square), n, seed=7)
    sigma = np.sqrt(1.0 / 12.0 / n)
    assert np.all(np.abs(points.mean(axis=0) - 0.5) <= 3 * sigma)
    assert np.all((points >= 0) & (points <= 1))


def test_sampling_is_deterministic(chevron):
    a = sample(Uniform(chevron), 500, seed=3)
    b = sample(Uniform(chevron), 500, seed=3)
    assert np.array_equal(a, b)
    assert chevron.contains(a).all()


def test_sample_count_validated(unit_square):
    with pytest.raises(ArgumentError):
        sample(Uniform(unit_square), 0, seed=0)


def test_empirical_weights_validated():
    with pytest.raises(ArgumentError):
        Empirical(np.array([[0.0, 0.0], [1.0, 1.0]]), np.array([0.5, 0.4]))
    with pytest.raises(ArgumentError):
        Empirical.from_points([[0.0, 0.0], [1.0, 1.0]], [1.0, 0.0])


def test_empirical_from_csv(tmp_path):
    path = tmp_path / "atoms.csv"
    path.write_text("x,y,w\n0,0,1\n1,0,3\n")
    rho = Empirical.from_csv(path)
    assert np.allclose(rho.weights, [0.25, 0.75])
    path.write_text("0,0\n1,0\n2,0\n2,2\n")
    assert np.allclose(Empirical.from_csv(path).weights, 0.25)


def test_whole_domain_cell_has_unit_mass(unit_square):
    cells = voronoi_cells([[0.5, 0.5]], unit_square)
    assert cell_mass(Uniform(unit_square), cells[0]) == pytest.approx(1.0)


def test_half_square_cells(unit_square):
    sites = [[0.25, 0.5], [0.75, 0.5]]
    cells = voronoi_cells(sites, unit_square)
    rho = Uniform(unit_square)
    assert [cell_mass(rho, c) for c in cells] == pytest.approx([0.5, 0.5])


def test_empirical_cell_mass_needs_sites(unit_square):
    rho = Empirical.from_points([[0.1, 0.1]])
    cells = voronoi_cells([[0.2, 0.2]], unit_square)
    with pytest.raises(ArgumentError):
        cell_mass(rho, cells[0])


def test_empirical_ties_go_to_lowest_site():
    sites = np.array([[1.0, 0.0], [-1.0, 0.0]])
    assert nearest_sites([[0.0, 5.0]], sites)[0] == 0
    rho = Empirical.from_points([[0.0, 3.0], [2.0, 0.0]])
    masses = cell_masses(rho, [None, None], sites)
    assert np.allclose(masses, [1.0, 0.0])


def test_chevron_masses_match_monte_carlo(chevron, rng):
    sites = random_sites_in(chevron, 50, rng)
    rho = Uniform(chevron)
    cells = voronoi_cells(sites, chevron)
    masses = cell_masses(rho, cells, sites)
    assert masses.sum() == pytest.approx(1.0, abs=1e-9)

    n = 10 ** 6
    counts = np.bincount(nearest_sites(sample(rho, n, seed=11), sites), minlength=len(sites)) / n
    sigma = np.sqrt(masses * (1 - masses) / n)
    outliers = np.count_nonzero(np.abs(counts - masses) > 3 * sigma + 1e-12)
    # 3 sigma leaves an expected 0.27% of cells outside
    assert outliers <= 1


def test_empirical_masses_converge_to_uniform(unit_square, rng):
    sites = rng.uniform(0.05, 0.95, size=(12, 2))
    cells = voronoi_cells(sites, unit_square)
    exact = cell_masses(Uniform(unit_square), cells, sites)
    errors = []
    for n in (10 ** 3, 10 ** 4, 10 ** 5):
        rho_n = Empirical.from_points(sample(Uniform(unit_square), n, seed=n))
        errors.append(np.abs(cell_masses(rho_n, cells, sites) - exact).max())
    assert errors[0] > errors[1] > errors[2]


def test_empirical_objective_consistency(unit_square, rng):
    # |F(sites, rho_n) - F(sites, rho)| shrinks as n grows, averaged over site sets
    gaps = np.zeros(3)
    for trial in range(10):
        sites = rng.uniform(size=(int(rng.integers(3, 20)), 2))
        exact = objective(sites, Uniform(unit_square), 2.0)
        for k, n in enumerate((10 ** 2, 10 ** 3, 10 ** 4)):
            rho_n = Empirical.from_points(sample(Uniform(unit_square), n, seed=1000 * trial + n))
            gaps[k] += abs(objective(sites, rho_n, 2.0) - exact)
    assert gaps[0] > gaps[1] > gaps[2]


def test_site_hit_mass():
    rho = Empirical.from_points([[0.0, 0.0], [1.0, 1.0]], [1.0, 3.0])
    assert np.allclose(site_hit_mass(rho, [[1.0, 1.0], [0.5, 0.5], [0.0, 1e-14]]), [0.75, 0.0, 0.25])


def test_uniform_site_hit_mass_is_zero(unit_square):
    assert np.array_equal(site_hit_mass(Uniform(unit_square), [[0.5, 0.5]]), [0.0])


def test_support_domain_covers_atoms_and_sites():
    rho = Empirical.from_points([[0.0, 0.0], [1.0, 2.0]])
    box = support_domain(rho, [[3.0, -1.0]])
    assert box.contains([[0.0, 0.0], [1.0, 2.0], [3.0, -1.0]]).all()
