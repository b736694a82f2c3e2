"""Ray-cast lidar, beam-sampled Doppler radar and ground-truth rasterization."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..core.geometry import GridGeometry
from ..core.rng import Stage, draw_random_block
from ..measurement import LidarBeam, LidarScan, RadarDetection, traverse_cells

UNOBSERVED, FREE, STATIC, DYNAMIC = 0, 1, 2, 3
LABEL_NAMES = {UNOBSERVED: "unobserved", FREE: "free", STATIC: "static", DYNAMIC: "dynamic"}


def raycast(rects, ox: float, oy: float, angles: np.ndarray):
    """Distance to the first rectangle along each ray and the index hit (-1: none).

    Slab test of all rays against all rectangles; a ray starting inside a
    rectangle ignores that rectangle.
    """
    angles = np.asarray(angles, dtype=np.float64)
    dist = np.full(angles.shape, np.inf)
    who = np.full(angles.shape, -1, dtype=np.int64)
    if not rects:
        return dist, who
    b = np.array([r.bounds for r in rects])  # (m, 4)
    dx = np.cos(angles)[:, None]
    dy = np.sin(angles)[:, None]
    with np.errstate(divide="ignore", invalid="ignore"):
        inv_x = np.where(dx != 0, 1.0 / dx, np.inf)
        inv_y = np.where(dy != 0, 1.0 / dy, np.inf)
        tx1 = (b[None, :, 0] - ox) * inv_x
        tx2 = (b[None, :, 2] - ox) * inv_x
        ty1 = (b[None, :, 1] - oy) * inv_y
        ty2 = (b[None, :, 3] - oy) * inv_y
    # rays parallel to a slab: inside the slab means unbounded, outside means no hit
    par_x = np.broadcast_to(dx == 0, tx1.shape)
    in_x = np.broadcast_to((b[None, :, 0] <= ox) & (ox <= b[None, :, 2]), tx1.shape)
    par_y = np.broadcast_to(dy == 0, ty1.shape)
    in_y = np.broadcast_to((b[None, :, 1] <= oy) & (oy <= b[None, :, 3]), ty1.shape)
    tmin_x = np.where(par_x, np.where(in_x, -np.inf, np.inf), np.minimum(tx1, tx2))
    tmax_x = np.where(par_x, np.where(in_x, np.inf, -np.inf), np.maximum(tx1, tx2))
    tmin_y = np.where(par_y, np.where(in_y, -np.inf, np.inf), np.minimum(ty1, ty2))
    tmax_y = np.where(par_y, np.where(in_y, np.inf, -np.inf), np.maximum(ty1, ty2))
    t_in = np.maximum(tmin_x, tmin_y)
    t_out = np.minimum(tmax_x, tmax_y)
    hit = (t_in <= t_out) & (t_in > 0)
    t = np.where(hit, t_in, np.inf)
    who_all = np.argmin(t, axis=1)
    dist = t[np.arange(t.shape[0]), who_all]
    who = np.where(np.isfinite(dist), who_all, -1)
    return dist, who


@dataclass
class GroundTruth:
    t: float
    step: int
    ego_pose: tuple[float, float, float]
    object_states: list  # (x, y, vx, vy) per moving object
    labels: np.ndarray | None  # per cell, one of UNOBSERVED/FREE/STATIC/DYNAMIC
    cluster_vx: float  # true x velocity of the first moving object (nan if none)
    cluster_vy: float

    def dynamic_cells(self) -> np.ndarray:
        return self.labels == DYNAMIC

    def static_cells(self) -> np.ndarray:
        return self.labels == STATIC


def rasterize_labels(geom: GridGeometry, rects, dynamic, free_cells) -> np.ndarray:
    """Footprint cells by cell-center containment; traversed cells free."""
    labels = np.full(geom.n_cells, UNOBSERVED, dtype=np.int8)
    if len(free_cells):
        labels[np.asarray(free_cells, dtype=np.int64)] = FREE
    n, h = geom.cells_per_side, geom.cell_size
    ox, oy = geom.origin_offset
    # static first so a mover overlapping a parked car stays dynamic
    for want in (False, True):
        for r, d in zip(rects, dynamic):
            if d != want:
                continue
            x0, y0, x1, y1 = r.bounds
            i0 = max(0, math.ceil((x0 - ox) / h - 0.5))
            i1 = min(n - 1, math.floor((x1 - ox) / h - 0.5))
            j0 = max(0, math.ceil((y0 - oy) / h - 0.5))
            j1 = min(n - 1, math.floor((y1 - oy) / h - 0.5))
            if i0 > i1 or j0 > j1:
                continue
            cols = np.arange(i0, i1 + 1)
            for j in range(j0, j1 + 1):
                labels[j * n + cols] = DYNAMIC if d else STATIC
    return labels


def simulate_step(scenario, t: float, geom: GridGeometry | None = None, step: int | None = None,
                  with_labels: bool = True):
    """Lidar scan, radar detections and ground truth at time t.

    ``step`` keys the random streams (default: round(t / dt)). Without a
    geometry the labels are omitted.
    """
    if not 0.0 <= t <= scenario.duration + 1e-9:
        raise ValueError(f"t={t} outside [0, {scenario.duration}]")
    k = int(round(t / scenario.dt)) if step is None else step
    seed = scenario.seed
    ex, ey, yaw = scenario.ego.pose(t)
    rects, dyn, vel = scenario.rects_at(t)

    lid = scenario.lidar
    az = lid.azimuths()
    true_range, _ = raycast(rects, ex, ey, yaw + az)
    noise = draw_random_block(seed, k, Stage.SIM_LIDAR_RANGE, 0, az.size, "normal")
    rng = true_range + lid.range_sd * noise
    hit = true_range <= lid.max_range
    rng = np.where(hit, np.clip(rng, 1e-3, lid.max_range), lid.max_range)
    beams = tuple(LidarBeam(float(a), float(r), bool(hh), lid.max_range) for a, r, hh in zip(az, rng, hit))
    scan = LidarScan((ex, ey, yaw), beams)

    dets = []
    rad = scenario.radar
    if rad.enabled:
        raz = rad.azimuths()
        r_dist, r_who = raycast(rects, ex, ey, yaw + raz)
        u = draw_random_block(seed, k, Stage.SIM_RADAR_DETECT, 0, raz.size)
        dn = draw_random_block(seed, k, Stage.SIM_RADAR_DOPPLER, 0, raz.size, "normal")
        pn = draw_random_block(seed, k, Stage.SIM_RADAR_POS, 0, 2 * raz.size, "normal")
        for i, (a, d, w) in enumerate(zip(raz, r_dist, r_who)):
            if w < 0 or d > rad.max_range or u[i] >= rad.p_detect:
                continue
            ang = yaw + a
            ux, uy = math.cos(ang), math.sin(ang)
            vx, vy = vel[w]
            speed = vx * ux + vy * uy + rad.doppler_sd * dn[i]
            dets.append(RadarDetection(ex + d * ux + rad.pos_sd * pn[2 * i],
                                       ey + d * uy + rad.pos_sd * pn[2 * i + 1],
                                       float(speed), (ux, uy), rad.doppler_sd))

    states = [obj.trajectory.state(t) for obj in scenario.moving_objects]
    cvx, cvy = (states[0][2], states[0][3]) if states else (math.nan, math.nan)
    labels = None
    if geom is not None and with_labels:
        free = []
        lx, ly = (float(v) for v in geom.world_to_local(ex, ey))
        for a, r, hh in zip(az, np.minimum(true_range, lid.max_range), hit):
            ang = yaw + a
            cells = traverse_cells(geom, lx, ly, lx + r * math.cos(ang), ly + r * math.sin(ang))
            free.extend(cells[1:-1] if hh else cells[1:])
        labels = rasterize_labels(geom, rects, dyn, free)
    gt = GroundTruth(t, k, (ex, ey, yaw), states, labels, cvx, cvy)
    return scan, dets, gt


GT_COLUMNS = ["step", "t", "ego_x", "ego_y", "ego_yaw", "object", "x", "y", "vx", "vy",
              "static_cells", "dynamic_cells", "free_cells"]


def ground_truth_rows(gt: GroundTruth):
    lab = gt.labels
    counts = ((lab == STATIC).sum(), (lab == DYNAMIC).sum(), (lab == FREE).sum()) if lab is not None else (0, 0, 0)
    for i, (x, y, vx, vy) in enumerate(gt.object_states or [(math.nan,) * 4]):
        yield [gt.step, gt.t, *gt.ego_pose, i, x, y, vx, vy, *counts]
