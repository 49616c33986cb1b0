"""Procedural tissue terrain: random Bezier patches and height queries."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .config import DEFAULT_EXTENT, DEFAULT_SURFACE_AMPLITUDE, DEFAULT_SURFACE_DEGREE
from .errors import ConfigError, DomainError

Extent = tuple[tuple[float, float], tuple[float, float]]


def bernstein_basis(n: int, i: int, x: float) -> float:
    """Degree-n Bernstein polynomial B_{n,i} evaluated at x in [0, 1]."""
    if not 0 <= i <= n:
        raise DomainError(f"basis index {i} outside 0..{n}")
    if not 0.0 <= x <= 1.0:
        raise DomainError(f"parameter {x} outside [0, 1]")
    return math.comb(n, i) * x**i * (1.0 - x) ** (n - i)


def basis_matrix(n: int, x: np.ndarray) -> np.ndarray:
    """All n+1 Bernstein values per sample; shape x.shape + (n+1,)."""
    x = np.asarray(x, dtype=float)
    out = np.empty(x.shape + (n + 1,))
    for i in range(n + 1):
        out[..., i] = math.comb(n, i) * x**i * (1.0 - x) ** (n - i)
    return out


@dataclass(frozen=True)
class TissueSurface:
    """Bezier patch over the workspace rectangle.

    control_points has shape (degree_n+1, degree_m+1, 3); the x/y
    coordinates form a regular lattice so height lookup at (x, y) is an
    affine map into parameter space, never an inversion.
    """

    control_points: np.ndarray
    degree_n: int
    degree_m: int
    seed: int
    extent: Extent = DEFAULT_EXTENT

    def __post_init__(self):
        cp = self.control_points
        if cp.shape != (self.degree_n + 1, self.degree_m + 1, 3):
            raise ConfigError(f"control grid shape {cp.shape} does not match degrees")

    @property
    def z_range(self) -> tuple[float, float]:
        z = self.control_points[:, :, 2]
        return float(z.min()), float(z.max())


def evaluate_surface(surface: TissueSurface, u: float, v: float) -> np.ndarray:
    """Point on the patch at parameters (u, v) in [0, 1]^2."""
    if not (0.0 <= u <= 1.0 and 0.0 <= v <= 1.0):
        raise DomainError(f"(u, v)=({u}, {v}) outside the unit square")
    bu = basis_matrix(surface.degree_n, np.asarray(u))
    bv = basis_matrix(surface.degree_m, np.asarray(v))
    return np.einsum("i,j,ijk->k", bu, bv, surface.control_points)


def surface_height(surface: TissueSurface, x, y) -> np.ndarray:
    """Vectorized terrain height at workspace coordinates (clamped to the extent)."""
    (x0, x1), (y0, y1) = surface.extent
    u = np.clip((np.asarray(x, dtype=float) - x0) / (x1 - x0), 0.0, 1.0)
    v = np.clip((np.asarray(y, dtype=float) - y0) / (y1 - y0), 0.0, 1.0)
    bu = basis_matrix(surface.degree_n, u)
    bv = basis_matrix(surface.degree_m, v)
    return np.einsum("...i,...j,ij->...", bu, bv, surface.control_points[:, :, 2])


def generate_surface(
    seed: int,
    degree_n: int = DEFAULT_SURFACE_DEGREE,
    degree_m: int = DEFAULT_SURFACE_DEGREE,
    extent: Extent = DEFAULT_EXTENT,
    amplitude: float = DEFAULT_SURFACE_AMPLITUDE,
) -> TissueSurface:
    """Random patch: x/y control lattice regular, z uniform in [-amplitude, amplitude]."""
    if degree_n < 1 or degree_m < 1:
        raise ConfigError("surface degrees must be >= 1")
    if amplitude < 0:
        raise ConfigError("amplitude must be non-negative")
    (x0, x1), (y0, y1) = extent
    if x1 <= x0 or y1 <= y0:
        raise ConfigError(f"degenerate workspace extent {extent}")
    rng = np.random.default_rng(np.random.SeedSequence([int(seed) & (2**64 - 1), 0x7155]))
    xs = np.linspace(x0, x1, degree_n + 1)
    ys = np.linspace(y0, y1, degree_m + 1)
    cp = np.empty((degree_n + 1, degree_m + 1, 3))
    cp[:, :, 0] = xs[:, None]
    cp[:, :, 1] = ys[None, :]
    cp[:, :, 2] = rng.uniform(-amplitude, amplitude, size=(degree_n + 1, degree_m + 1))
    return TissueSurface(cp, degree_n, degree_m, int(seed), extent)


@dataclass(frozen=True)
class HeightMap:
    """Regular grid of terrain heights over the workspace rectangle."""

    heights: np.ndarray  # (rows, cols)
    extent: Extent

    def __post_init__(self):
        r, c = self.heights.shape
        if r < 2 or c < 2:
            raise ConfigError("height map needs at least 2x2 cells")
        if not np.isfinite(self.heights).all():
            raise ConfigError("height map contains non-finite cells")

    @property
    def resolution(self) -> tuple[int, int]:
        return self.heights.shape

    def height_at(self, x: float, y: float) -> float:
        """Nearest-cell height lookup at workspace coordinates."""
        (x0, x1), (y0, y1) = self.extent
        rows, cols = self.heights.shape
        c = int(np.clip(round((x - x0) / (x1 - x0) * (cols - 1)), 0, cols - 1))
        r = int(np.clip(round((y - y0) / (y1 - y0) * (rows - 1)), 0, rows - 1))
        return float(self.heights[r, c])


def sample_heightmap(surface: TissueSurface, resolution: tuple[int, int]) -> HeightMap:
    """Sample the patch on a uniform (u, v) grid; row r tracks v, column c tracks u."""
    rows, cols = resolution
    if rows < 2 or cols < 2:
        raise ConfigError("resolution must be at least 2x2")
    u = np.linspace(0.0, 1.0, cols)
    v = np.linspace(0.0, 1.0, rows)
    bu = basis_matrix(surface.degree_n, u)   # (cols, n+1)
    bv = basis_matrix(surface.degree_m, v)   # (rows, m+1)
    z = np.einsum("ci,rj,ij->rc", bu, bv, surface.control_points[:, :, 2])
    return HeightMap(z, surface.extent)
