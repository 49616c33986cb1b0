"""Terrain patch and basis function behavior."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from suctionsim.errors import ConfigError, DomainError
from suctionsim.tissue import (
    HeightMap,
    TissueSurface,
    basis_matrix,
    bernstein_basis,
    evaluate_surface,
    generate_surface,
    sample_heightmap,
    surface_height,
)


@given(st.integers(0, 10), st.floats(0.0, 1.0, allow_nan=False))
def test_basis_partition_of_unity(n, x):
    total = sum(bernstein_basis(n, i, x) for i in range(n + 1))
    assert abs(total - 1.0) <= 1e-12


@given(st.integers(0, 10), st.floats(0.0, 1.0, allow_nan=False))
def test_basis_symmetry(n, x):
    for i in range(n + 1):
        assert abs(bernstein_basis(n, i, x) - bernstein_basis(n, n - i, 1.0 - x)) <= 1e-12


@given(st.integers(0, 10), st.floats(0.0, 1.0, allow_nan=False))
def test_basis_nonnegative_and_bounded(n, x):
    for i in range(n + 1):
        v = bernstein_basis(n, i, x)
        assert 0.0 <= v <= 1.0


def test_basis_endpoint_interpolation_exact():
    for n in range(11):
        assert bernstein_basis(n, 0, 0.0) == 1.0
        assert bernstein_basis(n, n, 1.0) == 1.0
        for i in range(1, n + 1):
            assert bernstein_basis(n, i, 0.0) == 0.0
        for i in range(n):
            assert bernstein_basis(n, i, 1.0) == 0.0


def test_basis_degree_one_is_linear():
    for x in np.linspace(0, 1, 17):
        assert bernstein_basis(1, 0, x) == pytest.approx(1 - x, abs=1e-15)
        assert bernstein_basis(1, 1, x) == pytest.approx(x, abs=1e-15)


def test_basis_domain_errors():
    with pytest.raises(DomainError):
        bernstein_basis(3, 4, 0.5)
    with pytest.raises(DomainError):
        bernstein_basis(3, -1, 0.5)
    with pytest.raises(DomainError):
        bernstein_basis(3, 0, 1.5)
    with pytest.raises(DomainError):
        bernstein_basis(3, 0, -0.1)


def test_basis_matrix_matches_scalar():
    xs = np.linspace(0, 1, 33)
    mat = basis_matrix(5, xs)
    assert mat.shape == (33, 6)
    for r, x in enumerate(xs):
        for i in range(6):
            assert mat[r, i] == pytest.approx(bernstein_basis(5, i, x), abs=1e-15)
    assert np.max(np.abs(mat.sum(axis=1) - 1.0)) <= 1e-12


def test_surface_corner_interpolation_exact():
    surface = generate_surface(42)
    cp = surface.control_points
    assert np.array_equal(evaluate_surface(surface, 0.0, 0.0), cp[0, 0])
    assert np.array_equal(evaluate_surface(surface, 1.0, 0.0), cp[-1, 0])
    assert np.array_equal(evaluate_surface(surface, 0.0, 1.0), cp[0, -1])
    assert np.array_equal(evaluate_surface(surface, 1.0, 1.0), cp[-1, -1])


@given(st.floats(0.0, 1.0, allow_nan=False), st.floats(0.0, 1.0, allow_nan=False))
@settings(max_examples=60)
def test_surface_stays_in_control_hull(u, v):
    surface = generate_surface(7)
    point = evaluate_surface(surface, u, v)
    lo, hi = surface.z_range
    assert lo - 1e-12 <= point[2] <= hi + 1e-12
    cp = surface.control_points
    assert cp[:, :, 0].min() - 1e-12 <= point[0] <= cp[:, :, 0].max() + 1e-12
    assert cp[:, :, 1].min() - 1e-12 <= point[1] <= cp[:, :, 1].max() + 1e-12


def test_surface_height_matches_patch_z():
    surface = generate_surface(3)
    (x0, x1), (y0, y1) = surface.extent
    for u in (0.0, 0.25, 0.6, 1.0):
        for v in (0.0, 0.4, 1.0):
            x = x0 + u * (x1 - x0)
            y = y0 + v * (y1 - y0)
            z = evaluate_surface(surface, u, v)[2]
            assert float(surface_height(surface, x, y)) == pytest.approx(z, abs=1e-12)


def test_surface_height_clamps_outside_extent():
    surface = generate_surface(3)
    inside = float(surface_height(surface, 0.0, 0.0))
    outside = float(surface_height(surface, -5.0, -5.0))
    assert inside == outside


def test_evaluate_surface_domain_error():
    surface = generate_surface(3)
    with pytest.raises(DomainError):
        evaluate_surface(surface, 1.2, 0.5)


def test_generate_surface_deterministic_and_seed_sensitive():
    a = generate_surface(9)
    b = generate_surface(9)
    c = generate_surface(10)
    assert np.array_equal(a.control_points, b.control_points)
    assert not np.array_equal(a.control_points, c.control_points)


def test_generate_surface_amplitude_bound():
    surface = generate_surface(5, amplitude=0.02)
    assert np.all(np.abs(surface.control_points[:, :, 2]) <= 0.02)
    flat = generate_surface(5, amplitude=0.0)
    assert np.all(flat.control_points[:, :, 2] == 0.0)


def test_generate_surface_validation():
    with pytest.raises(ConfigError):
        generate_surface(1, degree_n=0)
    with pytest.raises(ConfigError):
        generate_surface(1, amplitude=-0.1)
    with pytest.raises(ConfigError):
        generate_surface(1, extent=((0.0, 0.0), (0.0, 1.0)))


def test_control_grid_shape_checked():
    with pytest.raises(ConfigError):
        TissueSurface(np.zeros((3, 3, 3)), degree_n=3, degree_m=2, seed=0)


def test_heightmap_lookup_and_validation():
    heights = np.array([[0.0, 1.0], [2.0, 3.0]])
    hm = HeightMap(heights, ((0.0, 1.0), (0.0, 1.0)))
    assert hm.height_at(0.0, 0.0) == 0.0
    assert hm.height_at(1.0, 0.0) == 1.0
    assert hm.height_at(0.0, 1.0) == 2.0
    assert hm.height_at(10.0, 10.0) == 3.0
    with pytest.raises(ConfigError):
        HeightMap(np.zeros((1, 2)), ((0.0, 1.0), (0.0, 1.0)))
    with pytest.raises(ConfigError):
        HeightMap(np.array([[0.0, np.nan], [0.0, 0.0]]), ((0.0, 1.0), (0.0, 1.0)))


def test_sample_heightmap_matches_surface_height():
    surface = generate_surface(21)
    hm = sample_heightmap(surface, (17, 13))
    (x0, x1), (y0, y1) = surface.extent
    xs = np.linspace(x0, x1, 13)
    ys = np.linspace(y0, y1, 17)
    for r, y in enumerate(ys):
        for c, x in enumerate(xs):
            assert hm.heights[r, c] == pytest.approx(float(surface_height(surface, x, y)), abs=1e-12)
    with pytest.raises(ConfigError):
        sample_heightmap(surface, (1, 8))
