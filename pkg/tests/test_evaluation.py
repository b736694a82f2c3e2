import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from dyngrid import io as dio
from dyngrid.core import GridGeometry, GridMap
from dyngrid.evaluation import (bench_recursion, cluster_mean, cluster_stats, cluster_variance,
                                default_thresholds, mahalanobis_arrays, mahalanobis_cell, nees,
                                nees_consistent, roc, roc_from_scores, write_bench_csv,
                                write_mahalanobis_pgm, write_roc_csv)
from dyngrid.simulator import DYNAMIC, STATIC


def grid_with(means, variances=None, n=3):
    g = GridMap.vacuous(GridGeometry(0.1, n))
    k = len(means)
    g.mean_vx[:k] = means
    if variances is not None:
        g.var_vx[:k] = variances
    g.moments_valid[:k] = True
    return g


def test_cluster_mean_examples():
    assert cluster_mean(grid_with([1.0, 2.0, 3.0]), [0, 1, 2]) == 2.0
    assert cluster_mean(grid_with([4.5]), [0]) == 4.5
    assert cluster_mean(grid_with([0.7] * 5), range(5)) == pytest.approx(0.7)


def test_cluster_mean_rejects_invalid():
    g = grid_with([1.0])
    with pytest.raises(ValueError):
        cluster_mean(g, [0, 1])
    with pytest.raises(ValueError):
        cluster_mean(g, [])


def test_cluster_variance_examples():
    assert cluster_variance(grid_with([1.0, 3.0], [0.0, 0.0]), [0, 1]) == pytest.approx(1.0)
    assert cluster_variance(grid_with([2.0, 2.0], [0.3, 0.3]), [0, 1]) == pytest.approx(0.3)
    assert cluster_variance(grid_with([2.0], [0.4]), [0]) == pytest.approx(0.4)


@given(st.lists(st.tuples(st.floats(-50, 50), st.floats(0, 10)), min_size=1, max_size=9))
def test_cluster_variance_nonnegative(cells):
    g = grid_with([c[0] for c in cells], [c[1] for c in cells])
    v = cluster_variance(g, range(len(cells)))
    assert v >= 0
    assert v >= min(c[1] for c in cells) - 1e-9


def test_nees_examples():
    assert nees(5.0, 1.0, 5.0) == 0.0
    assert nees(6.0, 1.0, 5.0) == 1.0
    assert nees(6.0, 0.25, 5.0) == 4.0
    assert nees_consistent(3.84) and not nees_consistent(3.85)
    with pytest.raises(ValueError):
        nees(1.0, 0.0, 0.0)


def test_cluster_stats_uses_occupied_dynamic_cells():
    g = grid_with([1.0, 3.0, 9.0], [0.1, 0.1, 0.1])
    g.m_occ_up[:3] = [0.9, 0.9, 0.1]
    labels = np.zeros(9, dtype=bool)
    labels[:3] = True
    s = cluster_stats(g, labels, 2.0)
    assert s.cell_count == 2 and s.mean_vx == 2.0
    assert cluster_stats(g, np.zeros(9, dtype=bool), 2.0) is None


def test_mahalanobis_examples():
    g = GridMap.vacuous(GridGeometry(0.1, 2))
    g.moments_valid[:] = True
    g.var_vx[:] = 1.0
    g.var_vy[:] = 1.0
    assert mahalanobis_cell(g, 0) == 0.0
    g.mean_vx[1] = 2.0
    assert mahalanobis_cell(g, 1) == pytest.approx(4.0)
    g.var_vx[1] = g.var_vy[1] = 4.0
    assert mahalanobis_cell(g, 1) == pytest.approx(1.0)
    g.moments_valid[2] = False
    with pytest.raises(ValueError):
        mahalanobis_cell(g, 2)


def test_mahalanobis_singular_regularized():
    m = mahalanobis_arrays(1e-3, 0.0, 0.0, 0.0, 0.0)
    assert m == pytest.approx(1e-6 / 1e-6)


@given(st.floats(-10, 10), st.floats(-10, 10), st.floats(0.1, 5), st.floats(0.1, 5), st.floats(-0.9, 0.9),
       st.floats(0, 2 * math.pi))
def test_mahalanobis_rotation_invariant(vx, vy, sx, sy, rho, theta):
    P = np.array([[sx * sx, rho * sx * sy], [rho * sx * sy, sy * sy]])
    R = np.array([[math.cos(theta), -math.sin(theta)], [math.sin(theta), math.cos(theta)]])
    v2 = R @ np.array([vx, vy])
    P2 = R @ P @ R.T
    a = mahalanobis_arrays(vx, vy, P[0, 0], P[1, 1], P[0, 1])
    b = mahalanobis_arrays(v2[0], v2[1], P2[0, 0], P2[1, 1], P2[0, 1])
    assert a == pytest.approx(b, rel=1e-9, abs=1e-9)


def test_roc_extremes_and_separation():
    c = roc_from_scores([10.0] * 5, [0.1] * 7, [0.0, 1.0, 1e9])
    assert c.points[0][1:] == (1.0, 1.0)
    assert c.points[2][1:] == (0.0, 0.0)
    assert c.auc == 1.0
    assert c.best_tpr_at(0.0) == 1.0


@given(st.lists(st.floats(0, 100), min_size=1, max_size=30), st.lists(st.floats(0, 100), min_size=1, max_size=30))
def test_roc_monotone(dyn, sta):
    c = roc_from_scores(dyn, sta)
    tpr = [p[1] for p in c.points]
    fpr = [p[2] for p in c.points]
    assert all(a >= b for a, b in zip(tpr, tpr[1:]))
    assert all(a >= b for a, b in zip(fpr, fpr[1:]))
    assert 0.0 <= c.auc <= 1.0


def test_roc_from_grids():
    g = GridMap.vacuous(GridGeometry(0.1, 2))
    g.moments_valid[:] = True
    g.m_occ_up[:] = 0.9
    g.var_vx[:] = g.var_vy[:] = 1.0
    g.mean_vx[:] = [3.0, 3.0, 0.1, 0.0]
    labels = np.array([DYNAMIC, DYNAMIC, STATIC, STATIC])
    c = roc([g], [labels])
    assert c.auc == 1.0
    assert len(c.points) == len(default_thresholds())
    with pytest.raises(ValueError):
        roc([g], [np.full(4, STATIC)])


def test_bench_structure(tmp_path):
    rows = bench_recursion([2000, 4000], cells_per_side=32, repetitions=2)
    assert [r.nu for r in rows] == [2000, 4000]
    assert all(r.step_ms > 0 and r.sort_assign_ms <= r.step_ms for r in rows)
    write_bench_csv(tmp_path / "b.csv", rows, seed=0)
    _, cols, body = dio.read_csv(tmp_path / "b.csv")
    assert cols == ["nu", "step_ms", "sort_assign_ms"] and len(body) == 2
    with pytest.raises(ValueError):
        bench_recursion([4000, 2000], cells_per_side=8)


def test_emitters(tmp_path):
    c = roc_from_scores([1.0, 2.0], [0.5])
    write_roc_csv(tmp_path / "r.csv", c, seed=2, scenario_hash="x")
    comment, cols, body = dio.read_csv(tmp_path / "r.csv")
    assert "seed=2" in comment and len(body) == 64
    g = grid_with([1.0])
    g.var_vx[0] = g.var_vy[0] = 1.0
    write_mahalanobis_pgm(tmp_path / "m.pgm", g)
    img = dio.read_pgm(tmp_path / "m.pgm")
    assert img.shape == (3, 3) and img[0, 0] > 0 and img[1, 1] == 0
