"""Measurement grids from simulated lidar and radar, plus ego-motion scrolling.

A measurement grid holds, per cell, the observed occupancy BBA and optional
radar Doppler data (radial direction, radial speed, speed SD, association
probability).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .core.evidence import Bba, combine_arrays, pignistic_arrays
from .core.geometry import GridGeometry, split_displacement, world_to_cell
from .core.state import EMPTY, GridMap, ParticleStore
from . import io as dio

_SQRT_2PI = math.sqrt(2.0 * math.pi)


@dataclass(frozen=True)
class LidarModel:
    """Inverse sensor model masses (configuration, not calibrated values)."""

    occ_mass: float = 0.95
    free_mass: float = 0.7


@dataclass(frozen=True)
class RadarModel:
    occ_mass: float = 0.6
    neighbor_factor: float = 0.5


@dataclass(frozen=True)
class LidarBeam:
    azimuth: float  # relative to the sensor heading
    range: float
    hit: bool
    max_range: float


@dataclass(frozen=True)
class LidarScan:
    sensor_pose: tuple[float, float, float]  # world x, y, heading
    beams: tuple[LidarBeam, ...]

    def __post_init__(self):
        az = [b.azimuth for b in self.beams]
        if any(a2 < a1 for a1, a2 in zip(az, az[1:])):
            raise ValueError("beams must be sorted by azimuth")
        for b in self.beams:
            if b.hit and not 0.0 < b.range <= b.max_range:
                raise ValueError(f"hit range {b.range} outside (0, {b.max_range}]")


@dataclass(frozen=True)
class RadarDetection:
    x: float
    y: float
    radial_speed: float  # projection of world velocity on the line of sight; < 0 approaching
    radial_dir: tuple[float, float]  # unit vector sensor -> target
    doppler_sd: float


@dataclass(frozen=True)
class MeasurementCell:
    bba: Bba
    has_doppler: bool = False
    radial_dir: tuple[float, float] = (1.0, 0.0)
    radial_speed: float = 0.0
    doppler_sd: float = 1.0
    p_assoc: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.p_assoc <= 1.0:
            raise ValueError("p_assoc outside [0, 1]")
        if self.has_doppler and self.doppler_sd <= 0:
            raise ValueError("doppler_sd must be positive")
        if not self.has_doppler and self.p_assoc != 0.0:
            raise ValueError("p_assoc must be 0 without Doppler")


@dataclass
class MeasurementGrid:
    geometry: GridGeometry
    m_occ: np.ndarray
    m_free: np.ndarray
    has_doppler: np.ndarray
    dir_x: np.ndarray
    dir_y: np.ndarray
    radial_speed: np.ndarray
    doppler_sd: np.ndarray
    p_assoc: np.ndarray
    diagnostics: dict = field(default_factory=dict)

    _ARRAYS = ("m_occ", "m_free", "has_doppler", "dir_x", "dir_y", "radial_speed",
               "doppler_sd", "p_assoc")

    @classmethod
    def vacuous(cls, geometry: GridGeometry) -> "MeasurementGrid":
        c = geometry.n_cells
        z = lambda: np.zeros(c, dtype=np.float64)  # noqa: E731
        return cls(geometry, z(), z(), np.zeros(c, dtype=bool), np.ones(c), z(), z(),
                   np.ones(c), z())

    def copy(self) -> "MeasurementGrid":
        return MeasurementGrid(self.geometry, *(getattr(self, k).copy() for k in self._ARRAYS),
                               diagnostics=dict(self.diagnostics))

    def cell(self, i: int) -> MeasurementCell:
        return MeasurementCell(Bba(float(self.m_occ[i]), float(self.m_free[i])),
                               bool(self.has_doppler[i]),
                               (float(self.dir_x[i]), float(self.dir_y[i])),
                               float(self.radial_speed[i]), float(self.doppler_sd[i]),
                               float(self.p_assoc[i]))

    def set_cell(self, i: int, cell: MeasurementCell):
        self.m_occ[i], self.m_free[i] = cell.bba.m_occ, cell.bba.m_free
        self.has_doppler[i] = cell.has_doppler
        self.dir_x[i], self.dir_y[i] = cell.radial_dir
        self.radial_speed[i] = cell.radial_speed
        self.doppler_sd[i] = cell.doppler_sd
        self.p_assoc[i] = cell.p_assoc

    def equals(self, other: "MeasurementGrid") -> bool:
        return all(np.array_equal(getattr(self, k), getattr(other, k)) for k in self._ARRAYS)

    def pignistic(self) -> np.ndarray:
        return pignistic_arrays(self.m_occ, self.m_free)


# ---------------------------------------------------------------------------
# ray traversal


def traverse_cells(geom: GridGeometry, x0: float, y0: float, x1: float, y1: float) -> list[int]:
    """Cells visited by the segment (x0, y0) -> (x1, y1), grid-local coordinates.

    Exact grid walk: at each step advance across whichever cell boundary is
    reached first. The start cell comes first; the walk stops at the end
    cell or where the segment leaves the grid.
    """
    h = geom.cell_size
    n = geom.cells_per_side
    ix, iy = math.floor(x0 / h), math.floor(y0 / h)
    ex, ey = math.floor(x1 / h), math.floor(y1 / h)
    dx, dy = x1 - x0, y1 - y0
    sx = 1 if dx > 0 else -1
    sy = 1 if dy > 0 else -1
    inf = math.inf
    t_max_x = ((ix + (sx > 0)) * h - x0) / dx if dx != 0 else inf
    t_max_y = ((iy + (sy > 0)) * h - y0) / dy if dy != 0 else inf
    t_dx = h / abs(dx) if dx != 0 else inf
    t_dy = h / abs(dy) if dy != 0 else inf
    out = []
    if 0 <= ix < n and 0 <= iy < n:
        out.append(iy * n + ix)
    else:
        return out
    for _ in range(abs(ex - ix) + abs(ey - iy)):
        if ix == ex:
            step_x = False
        elif iy == ey:
            step_x = True
        else:
            step_x = t_max_x < t_max_y
        if step_x:
            ix += sx
            t_max_x += t_dx
        else:
            iy += sy
            t_max_y += t_dy
        if not (0 <= ix < n and 0 <= iy < n):
            break
        out.append(iy * n + ix)
    return out


def _combine_touches(geom, free_cells, free_mass, occ_cells, occ_mass):
    """Dempster-combine per-beam simple BBAs touching each cell.

    Simple BBAs that all support the same hypothesis combine without
    conflict to 1 - prod(1 - m); the occupied and free aggregates are then
    combined with Dempster's rule.
    """
    c = geom.n_cells
    free_keep = np.ones(c)
    occ_keep = np.ones(c)
    if len(free_cells):
        np.multiply.at(free_keep, np.asarray(free_cells, dtype=np.int64), 1.0 - free_mass)
    if len(occ_cells):
        np.multiply.at(occ_keep, np.asarray(occ_cells, dtype=np.int64), 1.0 - occ_mass)
    m_o, m_f, conflict = combine_arrays(1.0 - occ_keep, 0.0, 0.0, 1.0 - free_keep)
    if conflict.any():  # only reachable with masses of exactly 1
        m_o = np.where(conflict, 0.0, m_o)
        m_f = np.where(conflict, 0.0, m_f)
    return m_o, m_f


def lidar_to_measurement_grid(scan: LidarScan, geom: GridGeometry,
                              model: LidarModel = LidarModel()) -> MeasurementGrid:
    sx, sy, heading = scan.sensor_pose
    if not geom.contains_world(sx, sy):
        raise ValueError(f"sensor pose ({sx}, {sy}) outside the grid")
    lx, ly = (float(v) for v in geom.world_to_local(sx, sy))
    n = geom.cells_per_side
    free_cells: list[int] = []
    occ_cells: list[int] = []
    for beam in scan.beams:
        a = heading + beam.azimuth
        r = beam.range if beam.hit else beam.max_range
        ex, ey = lx + r * math.cos(a), ly + r * math.sin(a)
        cells = traverse_cells(geom, lx, ly, ex, ey)
        end_inside = 0 <= math.floor(ex / geom.cell_size) < n and 0 <= math.floor(ey / geom.cell_size) < n
        if beam.hit and end_inside:
            occ_cells.append(cells[-1])
            free_cells.extend(cells[1:-1])
        else:
            free_cells.extend(cells[1:])
    m_o, m_f = _combine_touches(geom, free_cells, model.free_mass, occ_cells, model.occ_mass)
    out = MeasurementGrid.vacuous(geom)
    out.m_occ[:] = m_o
    out.m_free[:] = m_f
    return out


def radar_overlay(grid: MeasurementGrid, detections, p_assoc: float,
                  model: RadarModel = RadarModel()) -> MeasurementGrid:
    """Attach Doppler data to the detection cell and its 8 neighbours.

    Neighbours get ``neighbor_factor * p_assoc``; where several detections
    touch one cell the higher association probability wins (first one on
    ties). Only the detection cell has its occupancy combined with the radar
    hit mass. Detections outside the grid are skipped and counted in
    ``diagnostics["radar_skipped"]``.
    """
    out = grid.copy()
    if not detections:
        return out
    geom = grid.geometry
    n = geom.cells_per_side
    skipped = 0
    for det in detections:
        c = world_to_cell(geom, det.x, det.y)
        if c == geom.sentinel:
            skipped += 1
            continue
        o, f, conflict = combine_arrays(out.m_occ[c], out.m_free[c], model.occ_mass, 0.0)
        if not bool(conflict):
            out.m_occ[c], out.m_free[c] = float(o), float(f)
        cx, cy = c % n, c // n
        for oy in (-1, 0, 1):
            for ox in (-1, 0, 1):
                x, y = cx + ox, cy + oy
                if not (0 <= x < n and 0 <= y < n):
                    continue
                k = y * n + x
                p = p_assoc if (ox == 0 and oy == 0) else model.neighbor_factor * p_assoc
                if out.has_doppler[k] and out.p_assoc[k] >= p:
                    continue
                out.has_doppler[k] = True
                out.dir_x[k], out.dir_y[k] = det.radial_dir
                out.radial_speed[k] = det.radial_speed
                out.doppler_sd[k] = det.doppler_sd
                out.p_assoc[k] = p
    out.diagnostics["radar_skipped"] = out.diagnostics.get("radar_skipped", 0) + skipped
    return out


def doppler_residual_sq(dir_x, dir_y, radial_speed, doppler_sd, vx, vy):
    """Squared normalized residual of the projected velocity, elementwise."""
    e = (vx * dir_x + vy * dir_y - radial_speed) / doppler_sd
    return e * e


def doppler_likelihood_arrays(dir_x, dir_y, radial_speed, doppler_sd, vx, vy):
    """Gaussian density of the projected-velocity residual, elementwise."""
    return doppler_density(doppler_residual_sq(dir_x, dir_y, radial_speed, doppler_sd, vx, vy), doppler_sd)


def doppler_density(r2, doppler_sd):
    return np.exp(-0.5 * r2) / (doppler_sd * _SQRT_2PI)


def doppler_likelihood(cell: MeasurementCell, velocity) -> float:
    if not cell.has_doppler:
        raise ValueError("cell has no Doppler measurement")
    vx, vy = velocity
    return float(doppler_likelihood_arrays(cell.radial_dir[0], cell.radial_dir[1],
                                           cell.radial_speed, cell.doppler_sd, vx, vy))


# ---------------------------------------------------------------------------
# ego motion


def _shift_cells(arr: np.ndarray, n: int, nx: int, ny: int, fill):
    """new[iy, ix] = old[iy + ny, ix + nx], ``fill`` where that is off-grid."""
    img = arr.reshape(n, n)
    out = np.full_like(img, fill)
    ys_dst = slice(max(0, -ny), min(n, n - ny))
    xs_dst = slice(max(0, -nx), min(n, n - nx))
    ys_src = slice(max(0, ny), min(n, n + ny))
    xs_src = slice(max(0, nx), min(n, n + nx))
    out[ys_dst, xs_dst] = img[ys_src, xs_src]
    return out.ravel()


def ego_scroll(grid: GridMap, particles: ParticleStore, delta) -> tuple[GridMap, ParticleStore]:
    """Move the grid window with the ego vehicle by ``delta`` (world meters).

    The window moves by the whole-cell part of delta plus the stored
    residual; world-fixed content therefore shifts by the opposite number
    of cells. Cells entering the window are vacuous and empty; particles are
    kept in grid-local coordinates and translated by the same whole-cell
    amount.
    """
    geom = grid.geometry
    dx, dy = float(delta[0]), float(delta[1])
    half = 0.5 * geom.side_length
    if abs(dx) >= half or abs(dy) >= half:
        raise ValueError("displacement too large; re-initialize the grid")
    nx, rx = split_displacement(dx + geom.ego_residual[0], geom.cell_size)
    ny, ry = split_displacement(dy + geom.ego_residual[1], geom.cell_size)
    new_geom = replace(geom, ego_residual=(rx, ry),
                       origin_offset=(geom.origin_offset[0] + nx * geom.cell_size,
                                      geom.origin_offset[1] + ny * geom.cell_size))
    if nx == 0 and ny == 0:
        g = grid.copy()
        g.geometry = new_geom
        return g, particles.copy()
    n = geom.cells_per_side
    g = grid.copy()
    g.geometry = new_geom
    for name, arr in grid.cell_arrays().items():
        if name in ("start_idx", "end_idx"):
            fill = EMPTY
        elif name == "moments_valid":
            fill = False
        else:
            fill = 0.0
        setattr(g, name, _shift_cells(arr, n, nx, ny, fill))
    p = particles.copy()
    if p.count:
        p.pos_x = p.pos_x - nx * geom.cell_size
        p.pos_y = p.pos_y - ny * geom.cell_size
        p.cell_index = new_geom.local_to_cell(p.pos_x, p.pos_y)
    return g, p


# ---------------------------------------------------------------------------
# exporters


def export_measurement_pgm(grid: MeasurementGrid, path, seed=None, scenario_hash=None):
    img = dio.probability_to_gray(grid.pignistic()).reshape(grid.geometry.cells_per_side, -1)
    dio.write_pgm(path, img, dio.header_line(seed, scenario_hash))


MEASUREMENT_CSV_COLUMNS = ["cell", "m_occ", "m_free", "has_doppler", "dir_x", "dir_y",
                           "radial_speed", "doppler_sd", "p_assoc"]


def export_measurement_csv(grid: MeasurementGrid, path, seed=None, scenario_hash=None):
    rows = ((i, grid.m_occ[i], grid.m_free[i], bool(grid.has_doppler[i]), grid.dir_x[i],
             grid.dir_y[i], grid.radial_speed[i], grid.doppler_sd[i], grid.p_assoc[i])
            for i in range(grid.geometry.n_cells))
    dio.write_csv(path, MEASUREMENT_CSV_COLUMNS, rows, seed, scenario_hash)
