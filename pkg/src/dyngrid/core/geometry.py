"""Grid geometry and coordinate conversion."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class GridGeometry:
    """Square grid of ``cells_per_side`` x ``cells_per_side`` cells.

    Cells are indexed row-major, ``index = iy * cells_per_side + ix``.
    ``origin_offset`` is the world position of the lower-left corner of cell
    (0, 0); ``ego_residual`` is the sub-cell part of ego motion that has not
    been scrolled into the grid yet.
    """

    cell_size: float
    cells_per_side: int
    origin_offset: tuple[float, float] = (0.0, 0.0)
    ego_residual: tuple[float, float] = field(default=(0.0, 0.0))

    def __post_init__(self):
        if self.cell_size <= 0:
            raise ValueError("cell_size must be positive")
        if self.cells_per_side <= 0:
            raise ValueError("cells_per_side must be positive")
        for r in self.ego_residual:
            if not 0.0 <= r < self.cell_size:
                raise ValueError(f"ego residual {r} outside [0, cell_size)")

    @classmethod
    def from_side_length(cls, side_length: float, cell_size: float, origin_offset=(0.0, 0.0)):
        n = int(round(side_length / cell_size))
        if abs(n * cell_size - side_length) > 0.5 * cell_size:
            raise ValueError("side_length is not a multiple of cell_size")
        return cls(cell_size=cell_size, cells_per_side=n, origin_offset=tuple(origin_offset))

    @property
    def side_length(self) -> float:
        return self.cells_per_side * self.cell_size

    @property
    def n_cells(self) -> int:
        return self.cells_per_side * self.cells_per_side

    @property
    def sentinel(self) -> int:
        """Cell index for out-of-grid positions; sorts after every valid index."""
        return self.n_cells

    def local_to_cell(self, x, y):
        """Cell index of grid-local coordinates (meters from the cell (0,0) corner).

        Works on scalars and arrays. Out-of-grid positions map to ``sentinel``.
        """
        n = self.cells_per_side
        ix = np.floor(np.asarray(x, dtype=np.float64) / self.cell_size)
        iy = np.floor(np.asarray(y, dtype=np.float64) / self.cell_size)
        inside = (ix >= 0) & (ix < n) & (iy >= 0) & (iy < n)
        idx = np.where(inside, iy * n + ix, self.sentinel)
        idx = np.where(np.isfinite(idx), idx, self.sentinel).astype(np.int64)
        if idx.ndim == 0:
            return int(idx)
        return idx

    def world_to_local(self, x, y):
        return (np.asarray(x, dtype=np.float64) - self.origin_offset[0],
                np.asarray(y, dtype=np.float64) - self.origin_offset[1])

    def local_to_world(self, x, y):
        return (np.asarray(x, dtype=np.float64) + self.origin_offset[0],
                np.asarray(y, dtype=np.float64) + self.origin_offset[1])

    def cell_xy(self, index):
        """(ix, iy) of a flat index."""
        index = np.asarray(index)
        return index % self.cells_per_side, index // self.cells_per_side

    def cell_centers_local(self):
        """Grid-local centers of all cells, flattened row-major."""
        c = (np.arange(self.cells_per_side) + 0.5) * self.cell_size
        xx, yy = np.meshgrid(c, c)
        return xx.ravel(), yy.ravel()

    def contains_world(self, x: float, y: float) -> bool:
        lx, ly = self.world_to_local(x, y)
        return bool(0.0 <= lx < self.side_length and 0.0 <= ly < self.side_length)


def world_to_cell(geom: GridGeometry, x, y):
    """Flat cell index of a world position, or ``geom.sentinel`` when outside.

    Cell boundaries are lower-inclusive: a point exactly on the boundary
    between cells k-1 and k belongs to cell k.
    """
    lx, ly = geom.world_to_local(x, y)
    return geom.local_to_cell(lx, ly)


def split_displacement(total: float, cell_size: float) -> tuple[int, float]:
    """Split a displacement into whole cells and a residual in [0, cell_size)."""
    n = math.floor(total / cell_size)
    residual = total - n * cell_size
    # guard against residual == cell_size from rounding
    if residual >= cell_size:
        n += 1
        residual -= cell_size
    if residual < 0.0:
        residual = 0.0
    return n, residual
