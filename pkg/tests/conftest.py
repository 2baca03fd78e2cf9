import math

import numpy as np
import pytest

from mkfit.geometry import Polygon


def star_polygon(count: int, radii) -> Polygon:
    pairs = [[radii[k % len(radii)], 2.0 * math.pi * k / count] for k in range(count)]
    return Polygon.from_polar(pairs)


@pytest.fixture
def unit_square() -> Polygon:
    return Polygon.from_vertices([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])


@pytest.fixture
def appendix_triangle() -> Polygon:
    return star_polygon(3, [1.0])


@pytest.fixture
def hexagonal_star() -> Polygon:
    return star_polygon(12, [1.0, 0.3])


@pytest.fixture
def chevron() -> Polygon:
    return Polygon.from_vertices([[-1.0, -0.75], [0.0, 0.75], [1.0, -0.75], [0.0, -0.25]])


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240611)


def random_sites_in(domain: Polygon, n: int, rng: np.random.Generator) -> np.ndarray:
    """n points drawn uniformly inside domain by rejection from its bounding box"""
    xmin, ymin, xmax, ymax = domain.bounds
    found = []
    while len(found) < n:
        candidates = rng.uniform([xmin, ymin], [xmax, ymax], size=(4 * n, 2))
        found.extend(candidates[domain.contains(candidates)])
    return np.asarray(found[:n])
