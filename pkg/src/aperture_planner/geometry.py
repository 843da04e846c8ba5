"""Shared ground-plane geometry: scene extents and georeferenced rasters.

Raster convention used everywhere in the package: row 0 is the northern
(max y) edge, column 0 the western (min x) edge, cells are addressed
row-major.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class AreaSpec:
    """Axis-aligned rectangle on the ground plane (z = 0).

    ``origin`` is the south-west (min x, min y) corner in meters.
    """

    width_m: float = 32.0
    depth_m: float = 32.0
    origin: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        if not (self.width_m > 0 and self.depth_m > 0):
            raise ValueError("area width and depth must be positive")
        if not all(math.isfinite(v) for v in self.origin):
            raise ValueError("area origin must be finite")

    @property
    def x_min(self) -> float:
        return float(self.origin[0])

    @property
    def y_min(self) -> float:
        return float(self.origin[1])

    @property
    def x_max(self) -> float:
        return self.x_min + self.width_m

    @property
    def y_max(self) -> float:
        return self.y_min + self.depth_m

    @property
    def center(self) -> tuple[float, float]:
        return (self.x_min + 0.5 * self.width_m, self.y_min + 0.5 * self.depth_m)

    @property
    def hectares(self) -> float:
        return self.width_m * self.depth_m / 10_000.0

    def contains(self, x, y, tol: float = 1e-9):
        """Vectorized closed-rectangle membership test."""
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        return (
            (x >= self.x_min - tol)
            & (x <= self.x_max + tol)
            & (y >= self.y_min - tol)
            & (y <= self.y_max + tol)
        )


@dataclass(frozen=True)
class RasterGrid:
    """A regular grid of cells lying in the horizontal plane ``z``.

    ``x0``/``y_top`` locate the outer north-west corner of cell (0, 0);
    ``dx``/``dy`` are positive cell sizes.
    """

    x0: float
    y_top: float
    dx: float
    dy: float
    rows: int
    cols: int
    z: float = 0.0

    @classmethod
    def over_area(cls, area: AreaSpec, rows: int, cols: int | None = None, z: float = 0.0):
        cols = rows if cols is None else cols
        return cls(area.x_min, area.y_max, area.width_m / cols, area.depth_m / rows, rows, cols, z)

    @classmethod
    def unit(cls, rows: int, cols: int):
        """Grid with 1 m cells whose centers sit at (col, -row)."""
        return cls(-0.5, 0.5, 1.0, 1.0, rows, cols, 0.0)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.rows, self.cols)

    @property
    def size(self) -> int:
        return self.rows * self.cols

    def cell_center(self, row, col):
        row = np.asarray(row, dtype=float)
        col = np.asarray(col, dtype=float)
        return self.x0 + (col + 0.5) * self.dx, self.y_top - (row + 0.5) * self.dy

    def cell_of(self, x, y):
        """Cell (row, col) containing world point(s); may be out of range."""
        col = np.floor((np.asarray(x, dtype=float) - self.x0) / self.dx).astype(np.int64)
        row = np.floor((self.y_top - np.asarray(y, dtype=float)) / self.dy).astype(np.int64)
        return row, col

    def in_bounds(self, row, col):
        row = np.asarray(row)
        col = np.asarray(col)
        return (row >= 0) & (row < self.rows) & (col >= 0) & (col < self.cols)

    def centers(self) -> tuple[np.ndarray, np.ndarray]:
        """Meshgrid of all cell centers, each of shape ``(rows, cols)``."""
        xs = self.x0 + (np.arange(self.cols) + 0.5) * self.dx
        ys = self.y_top - (np.arange(self.rows) + 0.5) * self.dy
        return np.meshgrid(xs, ys)
