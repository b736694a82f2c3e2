"""Cluster velocity statistics, NEES, Mahalanobis classification, ROC and timing."""

from __future__ import annotations

import statistics
import time
from dataclasses import dataclass

import numpy as np

from .core.geometry import GridGeometry
from .core.state import FilterParams, GridMap
from . import io as dio

CHI2_95_1DOF = 3.84
MAHALANOBIS_REG = 1e-6
SINGULAR_DET = 1e-12
CLUSTER_MIN_OCCUPANCY = 0.6


@dataclass(frozen=True)
class ClusterStats:
    mean_vx: float
    mean_vy: float
    var_vx: float
    nees: float
    cell_count: int


@dataclass(frozen=True)
class RocCurve:
    points: list  # (threshold, tpr, fpr)
    auc: float

    def best_tpr_at(self, max_fpr: float) -> float:
        ok = [tpr for _, tpr, fpr in self.points if fpr <= max_fpr]
        return max(ok) if ok else 0.0


def _cells(cells) -> np.ndarray:
    idx = np.asarray(cells)
    if idx.dtype == bool:
        idx = np.flatnonzero(idx)
    if idx.size == 0:
        raise ValueError("empty cell set")
    return idx


def _check_valid(grid, idx):
    if not np.all(grid.moments_valid[idx]):
        raise ValueError("cluster contains cells without valid moments")


def cluster_mean(grid, cells) -> float:
    """Unweighted average of the per-cell mean x velocity."""
    idx = _cells(cells)
    _check_valid(grid, idx)
    return float(np.mean(np.asarray(grid.mean_vx)[idx]))


def cluster_variance(grid, cells) -> float:
    """Second moment of the equal-weight Gaussian mixture of the cells, minus the squared mean."""
    idx = _cells(cells)
    _check_valid(grid, idx)
    m = np.asarray(grid.mean_vx)[idx]
    v = np.asarray(grid.var_vx)[idx]
    return float(max(np.mean(v + m * m) - np.mean(m) ** 2, 0.0))


def nees(mean: float, variance: float, truth: float) -> float:
    if not variance > 0:
        raise ValueError("variance must be positive")
    return (mean - truth) ** 2 / variance


def nees_consistent(value: float, bound: float = CHI2_95_1DOF) -> bool:
    return value <= bound


def cluster_cells(grid, labels_dynamic: np.ndarray, min_occupancy: float = CLUSTER_MIN_OCCUPANCY):
    """Ground-truth dynamic cells with valid moments and occupancy above the threshold."""
    o = np.asarray(grid.m_occ_up)
    f = np.asarray(grid.m_free_up)
    occ = o + 0.5 * (1.0 - o - f)
    return np.flatnonzero(labels_dynamic & grid.moments_valid & (occ > min_occupancy))


def cluster_stats(grid, labels_dynamic, truth_vx: float) -> ClusterStats | None:
    idx = cluster_cells(grid, labels_dynamic)
    if idx.size == 0:
        return None
    m = cluster_mean(grid, idx)
    var = cluster_variance(grid, idx)
    e = nees(m, var, truth_vx) if var > 0 else float("inf")
    return ClusterStats(m, float(np.mean(np.asarray(grid.mean_vy)[idx])), var, e, int(idx.size))


def mahalanobis_arrays(mean_vx, mean_vy, var_vx, var_vy, cov_vxy):
    """v P^-1 v^T per cell; P gets lambda I added where det(P) <= 1e-12."""
    a, b, d = (np.asarray(x, dtype=np.float64) for x in (var_vx, cov_vxy, var_vy))
    det = a * d - b * b
    sing = det <= SINGULAR_DET
    a = np.where(sing, a + MAHALANOBIS_REG, a)
    d = np.where(sing, d + MAHALANOBIS_REG, d)
    det = a * d - b * b
    x, y = np.asarray(mean_vx, dtype=np.float64), np.asarray(mean_vy, dtype=np.float64)
    return np.maximum((d * x * x - 2.0 * b * x * y + a * y * y) / det, 0.0)


def mahalanobis_cell(grid, cell: int) -> float:
    if not grid.moments_valid[cell]:
        raise ValueError("cell has no valid moments")
    return float(mahalanobis_arrays(grid.mean_vx[cell], grid.mean_vy[cell], grid.var_vx[cell],
                                    grid.var_vy[cell], grid.cov_vxy[cell]))


def default_thresholds(n: int = 64) -> np.ndarray:
    return np.logspace(-3, 3, n)


def roc_from_scores(dynamic_scores, static_scores, thresholds=None) -> RocCurve:
    """TPR / FPR of 'm >= threshold means dynamic' and the trapezoid AUC.

    The AUC integrates over the sampled points plus the end points (0, 0)
    and (1, 1).
    """
    dyn = np.sort(np.asarray(dynamic_scores, dtype=np.float64))
    sta = np.sort(np.asarray(static_scores, dtype=np.float64))
    if dyn.size == 0 or sta.size == 0:
        raise ValueError("ROC needs both dynamic and static cells")
    th = default_thresholds() if thresholds is None else np.asarray(thresholds, dtype=np.float64)
    tpr = 1.0 - np.searchsorted(dyn, th, side="left") / dyn.size
    fpr = 1.0 - np.searchsorted(sta, th, side="left") / sta.size
    pts = [(float(t), float(a), float(b)) for t, a, b in zip(th, tpr, fpr)]
    xs = np.concatenate([[0.0], fpr, [1.0]])
    ys = np.concatenate([[0.0], tpr, [1.0]])
    order = np.lexsort((ys, xs))
    xs, ys = xs[order], ys[order]
    auc = float(np.sum(np.diff(xs) * (ys[1:] + ys[:-1]) * 0.5))
    return RocCurve(pts, auc)


def roc_scores(grid, labels, min_occupancy: float = CLUSTER_MIN_OCCUPANCY):
    """Mahalanobis scores of the (dynamic, static) labeled cells that enter the ROC.

    A cell enters when it has valid moments and occupancy above ``min_occupancy``.
    """
    from .simulator.sensors import DYNAMIC, STATIC

    o, f = np.asarray(grid.m_occ_up), np.asarray(grid.m_free_up)
    ok = grid.moments_valid & (o + 0.5 * (1.0 - o - f) > min_occupancy)
    m = mahalanobis_arrays(grid.mean_vx, grid.mean_vy, grid.var_vx, grid.var_vy, grid.cov_vxy)
    return m[ok & (labels == DYNAMIC)], m[ok & (labels == STATIC)]


def roc(grids, truths, thresholds=None, min_occupancy: float = CLUSTER_MIN_OCCUPANCY) -> RocCurve:
    """ROC over a sequence of grids with aligned ground-truth label arrays."""
    dyn, sta = [], []
    for g, lab in zip(grids, truths):
        d, s_ = roc_scores(g, lab, min_occupancy)
        dyn.append(d)
        sta.append(s_)
    return roc_from_scores(np.concatenate(dyn) if dyn else [], np.concatenate(sta) if sta else [],
                           thresholds)


# ---------------------------------------------------------------------------
# runtime scaling


@dataclass(frozen=True)
class BenchRow:
    nu: int
    step_ms: float
    sort_assign_ms: float


def bench_recursion(counts, cells_per_side: int = 256, repetitions: int = 5, threads: int = 1,
                    warmup: int = 1, seed: int = 0, occupied_fraction: float = 0.1) -> list[BenchRow]:
    """Median wall-clock of a full step and of the sort/assign stage per particle count."""
    from .filter.pipeline import DynamicGridFilter
    from .measurement import MeasurementGrid

    counts = list(counts)
    if counts != sorted(counts):
        raise ValueError("counts must be ascending")
    geom = GridGeometry(0.1, cells_per_side)
    rng = np.random.default_rng(seed)
    meas = MeasurementGrid.vacuous(geom)
    occ = rng.random(geom.n_cells) < occupied_fraction
    meas.m_occ[:] = np.where(occ, 0.8, 0.0)
    meas.m_free[:] = np.where(occ, 0.0, 0.6)
    rows = []
    for nu in counts:
        params = FilterParams(nu=nu, nu_b=max(1, nu // 10), seed=seed)
        filt = DynamicGridFilter(geom, params, threads=threads)
        steps, sorts = [], []
        for r in range(warmup + repetitions):
            filt.step(meas, 0.1)
            if r >= warmup:
                steps.append(filt.last_timings["total"] * 1e3)
                sorts.append(filt.last_timings["sort_assign"] * 1e3)
        filt.close()
        rows.append(BenchRow(nu, statistics.median(steps), statistics.median(sorts)))
    return rows


def machine_descriptor() -> str:
    import os
    import platform

    return f"{platform.machine()} {platform.processor() or platform.system()} cpus={os.cpu_count()}"


# ---------------------------------------------------------------------------
# emitters


def write_velocity_csv(path, rows, seed=None, scenario_hash=None):
    """rows: (step, t, truth_vx, mean_vx, var_vx, cells)."""
    dio.write_csv(path, ["step", "t", "truth_vx", "mean_vx", "var_vx", "cells"], rows, seed, scenario_hash)


def write_nees_csv(path, rows, seed=None, scenario_hash=None):
    """rows: (step, t, nees, consistent)."""
    dio.write_csv(path, ["step", "t", "nees", "within_bound"], rows, seed, scenario_hash)


def write_roc_csv(path, curve: RocCurve, seed=None, scenario_hash=None):
    dio.write_csv(path, ["threshold", "tpr", "fpr"], curve.points, seed, scenario_hash)


def write_bench_csv(path, rows, seed=None):
    dio.write_csv(path, ["nu", "step_ms", "sort_assign_ms"],
                  [(r.nu, r.step_ms, r.sort_assign_ms) for r in rows], seed)


def write_mahalanobis_pgm(path, grid: GridMap, scale: float = 10.0, comment=None):
    """Heatmap with m / (m + scale) mapped to gray; cells without moments black."""
    m = mahalanobis_arrays(grid.mean_vx, grid.mean_vy, grid.var_vx, grid.var_vy, grid.cov_vxy)
    p = np.where(grid.moments_valid, m / (m + scale), 0.0)
    dio.write_pgm(path, dio.probability_to_gray(p).reshape(grid.geometry.cells_per_side, -1), comment)


def timed(fn, *args, **kw):
    t0 = time.perf_counter()
    out = fn(*args, **kw)
    return out, time.perf_counter() - t0
