"""Observation lattices and vertical profiles extracted from snapshots.

A snapshot grid is resampled onto an X-by-Y lattice spanning the region
above the air-impermeable disk; each lattice column (fixed x, all Y
samples) becomes one profile, and profiles are the nodes of the
similarity networks.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .solver import GridGeometry


class RegionBoundsError(ValueError):
    """Requested resampling region extends outside the domain."""


@dataclass(frozen=True, eq=False)
class ProfileSet:
    """N vertical profiles of L samples each for one field at one time."""

    field_name: str
    t: float
    values: np.ndarray       # (N, L)
    x_positions: np.ndarray  # (N,), cm

    def __post_init__(self):
        v = np.asarray(self.values)
        if v.ndim != 2 or v.shape[0] < 2 or v.shape[1] < 3:
            raise ValueError("need N >= 2 profiles of L >= 3 samples")
        if not np.all(np.isfinite(v)):
            raise ValueError("profiles must be finite")

    @property
    def n_profiles(self) -> int:
        return self.values.shape[0]

    @property
    def n_samples(self) -> int:
        return self.values.shape[1]


def default_region(geom: GridGeometry) -> tuple:
    """The column cross-section above the disk: (x0, x1, y0, y1) in cm."""
    return (0.0, geom.column_width, geom.disk_thickness, geom.column_height)


def resample(grid: np.ndarray, geom: GridGeometry, nx_lattice: int,
             ny_lattice: int, region: tuple | None = None) -> np.ndarray:
    """Bilinear resampling from cell centers onto a regular lattice.

    Returns a (ny_lattice, nx_lattice) array whose [j, i] entry is the
    value at (x_i, y_j); the lattice spans the region exactly, with
    linear extrapolation beyond the outermost cell centers so constant
    and linear fields are reproduced to machine precision.
    """
    if nx_lattice < 2 or ny_lattice < 2:
        raise ValueError("lattice must be at least 2x2")
    grid = np.asarray(grid, dtype=float)
    if grid.shape != (geom.ny, geom.nx):
        raise ValueError(f"grid shape {grid.shape} != geometry "
                         f"({geom.ny}, {geom.nx})")
    if region is None:
        region = default_region(geom)
    x0, x1, y0, y1 = region
    if not (0.0 <= x0 < x1 <= geom.column_width
            and 0.0 <= y0 < y1 <= geom.column_height):
        raise RegionBoundsError(f"region {region} outside domain")

    xs = np.linspace(x0, x1, nx_lattice)
    ys = np.linspace(y0, y1, ny_lattice)

    def frac_index(coords, first_center, spacing, count):
        u = (coords - first_center) / spacing
        i0 = np.clip(np.floor(u).astype(int), 0, count - 2)
        return i0, u - i0

    ix, wx = frac_index(xs, 0.5 * geom.dx, geom.dx, geom.nx)
    iy, wy = frac_index(ys, 0.5 * geom.dy, geom.dy, geom.ny)

    g00 = grid[np.ix_(iy, ix)]
    g01 = grid[np.ix_(iy, ix + 1)]
    g10 = grid[np.ix_(iy + 1, ix)]
    g11 = grid[np.ix_(iy + 1, ix + 1)]
    wxr = wx[None, :]
    wyr = wy[:, None]
    return ((1 - wyr) * ((1 - wxr) * g00 + wxr * g01)
            + wyr * ((1 - wxr) * g10 + wxr * g11))


def extract_profiles(lattice: np.ndarray, field_name: str, t: float,
                     x_positions: np.ndarray | None = None) -> ProfileSet:
    """Turn lattice columns into profiles: N = lattice width, L = height."""
    lattice = np.asarray(lattice, dtype=float)
    if lattice.ndim != 2:
        raise ValueError("lattice must be 2D")
    n = lattice.shape[1]
    if x_positions is None:
        x_positions = np.arange(n, dtype=float)
    return ProfileSet(field_name=field_name, t=float(t), values=lattice.T.copy(),
                      x_positions=np.asarray(x_positions, dtype=float))


def normalize_unit_interval(values: np.ndarray) -> np.ndarray:
    """Scale values to [0, 1]; an all-equal input maps to all zeros."""
    v = np.asarray(values, dtype=float)
    if v.size == 0 or not np.any(np.isfinite(v)):
        raise ValueError("need at least one finite value")
    lo, hi = np.min(v), np.max(v)
    if hi == lo:
        return np.zeros_like(v)
    return (v - lo) / (hi - lo)
