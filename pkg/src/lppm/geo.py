"""Rectangular discretization of a lat/lon region into grid cells, plus
Manhattan distances in kilometres between cell centers.

Cell ids are row-major: id = row * cols + col, with row 0 at the southern
edge and col 0 at the western edge. Degrees are converted to kilometres with
an equirectangular approximation anchored at the region's mid-latitude.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

KM_PER_DEG_LAT = 111.32


@dataclass(frozen=True)
class Region:
    """Axis-aligned lat/lon box split into rows x cols cells."""

    lat_min: float
    lat_max: float
    lon_min: float
    lon_max: float
    rows: int
    cols: int

    def __post_init__(self) -> None:
        if not (self.lat_min < self.lat_max):
            raise ValueError(f"lat_min must be < lat_max, got [{self.lat_min}, {self.lat_max}]")
        if not (self.lon_min < self.lon_max):
            raise ValueError(f"lon_min must be < lon_max, got [{self.lon_min}, {self.lon_max}]")
        if self.rows < 1 or self.cols < 1:
            raise ValueError(f"rows and cols must be >= 1, got {self.rows}x{self.cols}")

    @property
    def n_cells(self) -> int:
        return self.rows * self.cols


# Default evaluation region: the San Francisco box, 25 latitude rows by 10
# longitude columns (roughly square ~1.1 km cells).
SAN_FRANCISCO = Region(
    lat_min=37.5500, lat_max=37.8010, lon_min=-122.5153, lon_max=-122.3789, rows=25, cols=10
)


@dataclass(frozen=True)
class Grid:
    """A built grid: cell centers and the degree->km conversion factors."""

    region: Region
    cell_centers: np.ndarray  # (n_cells, 2) rows of (lat, lon)
    km_per_deg_lat: float
    km_per_deg_lon: float

    @property
    def n_cells(self) -> int:
        return self.region.n_cells

    @property
    def cell_height_deg(self) -> float:
        r = self.region
        return (r.lat_max - r.lat_min) / r.rows

    @property
    def cell_width_deg(self) -> float:
        r = self.region
        return (r.lon_max - r.lon_min) / r.cols


def build_grid(region: Region) -> Grid:
    """Discretize ``region`` into rows*cols cells with row-major ids."""

    mid_lat = 0.5 * (region.lat_min + region.lat_max)
    km_lat = KM_PER_DEG_LAT
    km_lon = KM_PER_DEG_LAT * math.cos(math.radians(mid_lat))

    dlat = (region.lat_max - region.lat_min) / region.rows
    dlon = (region.lon_max - region.lon_min) / region.cols
    row_lats = region.lat_min + (np.arange(region.rows) + 0.5) * dlat
    col_lons = region.lon_min + (np.arange(region.cols) + 0.5) * dlon
    lat_grid, lon_grid = np.meshgrid(row_lats, col_lons, indexing="ij")
    centers = np.column_stack([lat_grid.ravel(), lon_grid.ravel()])
    centers.setflags(write=False)
    return Grid(region=region, cell_centers=centers, km_per_deg_lat=km_lat, km_per_deg_lon=km_lon)


def _axis_index(value: float, lo: float, hi: float, k: int) -> int | None:
    """Index of the 1-D cell containing ``value``; edge points go to the
    lower-index cell; values outside [lo, hi] map to None."""

    if value < lo or value > hi:
        return None
    t = (value - lo) / (hi - lo) * k
    i = math.ceil(t) - 1
    return min(max(i, 0), k - 1)


def quantize(grid: Grid, lat: float, lon: float) -> int | None:
    """Cell id containing (lat, lon), or None when outside the region."""

    r = grid.region
    row = _axis_index(lat, r.lat_min, r.lat_max, r.rows)
    col = _axis_index(lon, r.lon_min, r.lon_max, r.cols)
    if row is None or col is None:
        return None
    return row * r.cols + col


def manhattan_km(grid: Grid, a: int, b: int) -> float:
    """Manhattan distance in km between the centers of cells ``a`` and ``b``."""

    n = grid.n_cells
    if not (0 <= a < n and 0 <= b < n):
        raise ValueError(f"cell ids must be in [0, {n}), got {a}, {b}")
    (lat_a, lon_a), (lat_b, lon_b) = grid.cell_centers[a], grid.cell_centers[b]
    return abs(lat_a - lat_b) * grid.km_per_deg_lat + abs(lon_a - lon_b) * grid.km_per_deg_lon


def distance_matrix(grid: Grid) -> np.ndarray:
    """Full pairwise Manhattan-km matrix over cell ids (symmetric, zero diag)."""

    lats = grid.cell_centers[:, 0]
    lons = grid.cell_centers[:, 1]
    d = np.abs(lats[:, None] - lats[None, :]) * grid.km_per_deg_lat
    d += np.abs(lons[:, None] - lons[None, :]) * grid.km_per_deg_lon
    return d
