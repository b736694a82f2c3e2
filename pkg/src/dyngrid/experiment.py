"""Closed-loop runs: simulate, build measurement grids, filter, evaluate."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core.geometry import GridGeometry
from .core.state import FilterParams, GridMap
from .evaluation import ClusterStats, cluster_stats
from .filter.pipeline import DynamicGridFilter
from .measurement import LidarModel, RadarModel, lidar_to_measurement_grid, radar_overlay
from .simulator.scenario import Scenario
from .simulator.sensors import GroundTruth, simulate_step


@dataclass
class StepRecord:
    step: int
    t: float
    truth: GroundTruth
    stats: ClusterStats | None
    total_mass: float
    occupied_cells: int
    timings: dict
    diagnostics: dict
    grid: GridMap | None = None


@dataclass
class RunResult:
    scenario: Scenario
    params: FilterParams
    radar: bool
    records: list[StepRecord] = field(default_factory=list)

    def window(self, name: str, settle: float = 0.0):
        a, b = self.scenario.phase(name)
        return [r for r in self.records if a + settle - 1e-9 <= r.t <= b + 1e-9]

    def velocity_errors(self, records=None) -> np.ndarray:
        recs = self.records if records is None else records
        return np.array([r.stats.mean_vx - r.truth.cluster_vx if r.stats else math.nan for r in recs])


def initial_geometry(sc: Scenario) -> GridGeometry:
    """Grid window centered on the ego start position."""
    geom = GridGeometry.from_side_length(sc.grid.side_length, sc.grid.cell_size)
    ex, ey, _ = sc.ego.pose(0.0)
    half = 0.5 * geom.side_length
    return GridGeometry(geom.cell_size, geom.cells_per_side, (ex - half, ey - half))


def run_scenario(sc: Scenario, params: FilterParams, radar: bool = True, strict: bool = False,
                 threads: int = 1, steps: int | None = None, keep_grids: bool = False,
                 on_step=None) -> RunResult:
    """Run the filter over the scenario, one step per ``sc.dt``.

    ``on_step(k, filt, meas, truth)`` is called after each filter step.
    """
    filt = DynamicGridFilter(initial_geometry(sc), params, strict=strict, threads=threads)
    lid_model = LidarModel(sc.lidar.occ_mass, sc.lidar.free_mass)
    rad_model = RadarModel(sc.radar.occ_mass)
    n = sc.n_steps if steps is None else min(steps, sc.n_steps)
    res = RunResult(sc, params, radar)
    prev = sc.ego.pose(0.0)
    try:
        for k in range(n):
            t = k * sc.dt
            pose = sc.ego.pose(t)
            if k:
                filt.scroll((pose[0] - prev[0], pose[1] - prev[1]))
            prev = pose
            geom = filt.geometry
            scan, dets, truth = simulate_step(sc, t, geom, k)
            meas = lidar_to_measurement_grid(scan, geom, lid_model)
            if radar and sc.radar.enabled:
                meas = radar_overlay(meas, dets, sc.radar.p_assoc, rad_model)
            g = filt.step(meas, sc.dt)
            stats = None
            if truth.labels is not None and sc.moving_objects:
                stats = cluster_stats(g, truth.dynamic_cells(), truth.cluster_vx)
            occ = g.occupancy()
            res.records.append(StepRecord(k, t, truth, stats, float(g.m_occ_up.sum()),
                                          int((occ > 0.6).sum()), dict(filt.last_timings),
                                          dict(g.diagnostics), g.copy() if keep_grids else None))
            if on_step is not None:
                on_step(k, filt, meas, truth)
    finally:
        filt.close()
    return res
