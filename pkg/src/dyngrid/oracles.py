"""Simple sequential reference implementations used as test oracles.

* ``bbf_update``: generalized binary Bayes update of one cell.
* ``phdmib_reference_step``: the full particle PHD/MIB recursion (per-cell
  Bernoulli update with measurement / no-measurement branches) on small grids.
* ``sequential_ds_step``: per-cell loop mirror of ``filter.step`` in strict
  mode, written with plain Python scalars and ``math.fsum`` so that it can be
  compared bitwise.
"""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass, field

import numpy as np

from .core.evidence import combine_arrays, pignistic_arrays
from .core.geometry import GridGeometry
from .core.rng import Stage, draw_random_block
from .core.state import EMPTY, FilterParams, GridMap, ParticleStore
from .filter.pipeline import MOMENT_MIN_MASS, equal_weights
from .measurement import MeasurementGrid, doppler_density, doppler_likelihood_arrays, doppler_residual_sq

BBF_CLAMP = 1e-6
MAX_CELLS_PER_SIDE = 64
MAX_PARTICLES_PER_CELL = 10_000
DETECTION_SCALE = 0.9


# ---------------------------------------------------------------------------
# binary Bayes filter


@dataclass(frozen=True)
class BbfCell:
    p_occ: float = 0.5

    def __post_init__(self):
        if not 0.0 < self.p_occ < 1.0:
            raise ValueError("p_occ must be in (0, 1)")


def bbf_update(cell: BbfCell, alpha: float) -> BbfCell:
    """p' = a p / (a p + 1 - p), clamped to [1e-6, 1 - 1e-6]."""
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    p = cell.p_occ
    q = alpha * p / (alpha * p + (1.0 - p))
    return BbfCell(min(max(q, BBF_CLAMP), 1.0 - BBF_CLAMP))


def bbf_alpha(occurred: bool, p_tp: float, p_fp: float) -> float:
    """Odds factor of the detection model for one cell."""
    if occurred:
        return p_tp / p_fp
    return (1.0 - p_tp) / (1.0 - p_fp)


# ---------------------------------------------------------------------------
# full particle PHD/MIB


@dataclass
class ReferenceMeasurement:
    """Per-cell observation for the full recursion.

    ``likelihood(cells, vx, vy)`` returns the spatial likelihood of each
    particle for the measurement in its cell; ``None`` means uniform with
    the same density as the clutter.
    """

    occurred: np.ndarray
    p_tp: np.ndarray
    p_fp: np.ndarray
    clutter: np.ndarray
    likelihood: object = None

    @classmethod
    def from_grid(cls, meas: MeasurementGrid, kappa: float = DETECTION_SCALE,
                  clutter: float = 1.0) -> "ReferenceMeasurement":
        """Maps pignistic probability q to p_TP = q kappa, p_FP = (1 - q) kappa.

        A cell counts as measured when its BBA is not vacuous; the odds
        factor of a measured cell is then q / (1 - q). Vacuous cells take
        the no-measurement branch with p_TP = p_FP, which leaves them unchanged.
        """
        q = pignistic_arrays(meas.m_occ, meas.m_free)
        c = meas.geometry.n_cells
        like = None
        if meas.has_doppler.any():
            def like(cells, vx, vy, m=meas, theta=clutter):
                out = np.full(cells.shape, theta)
                d = m.has_doppler[cells]
                k = cells[d]
                out[d] = doppler_likelihood_arrays(m.dir_x[k], m.dir_y[k], m.radial_speed[k],
                                                   m.doppler_sd[k], vx[d], vy[d])
                return out
        return cls((meas.m_occ + meas.m_free) > 0, q * kappa, (1.0 - q) * kappa, np.full(c, float(clutter)), like)


@dataclass
class ReferenceState:
    geometry: GridGeometry
    particles: ParticleStore
    occupancy: np.ndarray  # per-cell posterior existence probability
    step_index: int = 0
    diagnostics: dict = field(default_factory=dict)

    @classmethod
    def from_occupancy(cls, geometry: GridGeometry, r0: np.ndarray, per_cell: int,
                       velocities=None, seed: int = 0) -> "ReferenceState":
        """Cells with r0 > 0 get ``per_cell`` equal-weight particles summing to r0."""
        _check_scale(geometry, per_cell)
        r0 = np.asarray(r0, dtype=np.float64)
        cells = np.repeat(np.flatnonzero(r0 > 0), per_cell)
        n = cells.size
        ix, iy = geometry.cell_xy(cells)
        h = geometry.cell_size
        px = (ix + draw_random_block(seed, 0, Stage.ORACLE, 0, n)) * h
        py = (iy + draw_random_block(seed, 0, Stage.ORACLE, n, 2 * n)) * h
        if velocities is None:
            vx, vy = np.zeros(n), np.zeros(n)
        else:
            vx, vy = (np.full(n, float(v)) for v in velocities)
        w = r0[cells] / per_cell
        p = ParticleStore(px, py, vx, vy, w, cells.astype(np.int64), np.zeros(n, dtype=bool))
        return cls(geometry, p, r0.copy())


def _check_scale(geometry: GridGeometry, per_cell: int):
    if geometry.cells_per_side > MAX_CELLS_PER_SIDE:
        raise ValueError(f"oracle grid limited to {MAX_CELLS_PER_SIDE} cells per side")
    if per_cell > MAX_PARTICLES_PER_CELL:
        raise ValueError(f"oracle limited to {MAX_PARTICLES_PER_CELL} particles per cell")


def _group_sums(cells: np.ndarray, values: np.ndarray, n_cells: int) -> np.ndarray:
    return np.bincount(cells, weights=values, minlength=n_cells)[:n_cells]


def _systematic_counts(w: np.ndarray, n: int, u: float) -> np.ndarray:
    """Copy counts of systematic resampling via floor differences of the scaled CDF."""
    cdf = np.cumsum(w)
    total = cdf[-1]
    edges = np.floor(cdf * (n / total) - u)
    counts = np.diff(np.concatenate([[np.floor(-u)], edges])).astype(np.int64)
    counts[-1] += n - counts.sum()
    return counts


def phdmib_reference_step(state: ReferenceState, meas: ReferenceMeasurement, params: FilterParams,
                          T: float, births_per_cell: int = 0, n_out: int | None = None,
                          resample: bool = True) -> ReferenceState:
    """One recursion of the particle PHD/MIB filter.

    Births: ``births_per_cell`` particles per cell carrying
    r_b = p_B (1 - r_p). With ``resample`` the joint posterior set is
    resampled to ``n_out`` (default: current count) equal-weight particles.
    """
    geom = state.geometry
    C = geom.n_cells
    _check_scale(geom, births_per_cell)
    k = state.step_index
    seed = params.seed
    p = state.particles
    n = p.count

    # prediction of persistent particles
    if n:
        # joint resampling moves particles between cells, so the bound is on the grid mean
        if n > MAX_PARTICLES_PER_CELL * C:
            raise ValueError("too many particles for the oracle grid")
    sp, sv = params.sigma_proc_pos * T, params.sigma_proc_vel * T
    nrm = lambda off: draw_random_block(seed, k, Stage.ORACLE, off * n, (off + 1) * n, "normal")  # noqa: E731
    px = p.pos_x + p.vel_x * T + (sp * nrm(0) if sp else 0.0)
    py = p.pos_y + p.vel_y * T + (sp * nrm(1) if sp else 0.0)
    vx = p.vel_x + (sv * nrm(2) if sv else 0.0)
    vy = p.vel_y + (sv * nrm(3) if sv else 0.0)
    cell = np.asarray(geom.local_to_cell(px, py), dtype=np.int64).reshape(n)
    inside = cell < C
    px, py, vx, vy, cell = px[inside], py[inside], vx[inside], vy[inside], cell[inside]
    w = p.weight[inside] * params.p_s

    # truncation of the predicted existence probability
    r_p = _group_sums(cell, w, C)
    over = r_p > 1.0
    if over.any():
        w = np.where(over[cell], w / r_p[cell], w)
        r_p = np.where(over, 1.0, r_p)

    # new-born particles
    r_b = params.p_b * (1.0 - r_p)
    if births_per_cell and params.p_b > 0:
        bc = np.repeat(np.arange(C), births_per_cell)
        nb = bc.size
        ix, iy = geom.cell_xy(bc)
        h = geom.cell_size
        base = 4 * n
        u = lambda off: draw_random_block(seed, k, Stage.ORACLE, base + off * nb, base + (off + 1) * nb)  # noqa: E731
        g = lambda off: draw_random_block(seed, k, Stage.ORACLE, base + off * nb, base + (off + 1) * nb, "normal")  # noqa: E731
        px = np.concatenate([px, (ix + u(0)) * h])
        py = np.concatenate([py, (iy + u(1)) * h])
        vx = np.concatenate([vx, params.sigma_birth_vel * g(2)])
        vy = np.concatenate([vy, params.sigma_birth_vel * g(3)])
        w = np.concatenate([w, r_b[bc] / births_per_cell])
        cell = np.concatenate([cell, bc])
    else:
        r_b = np.zeros(C)
    r_pred = r_p + r_b

    # update: measurement / no-measurement branch per cell
    occ = np.asarray(meas.occurred, dtype=bool)
    p_tp, p_fp = np.asarray(meas.p_tp), np.asarray(meas.p_fp)
    clutter = np.asarray(meas.clutter, dtype=np.float64)
    if meas.likelihood is None:
        g_i = clutter[cell]
    else:
        g_i = meas.likelihood(cell, vx, vy)
    w_tilde = p_tp[cell] * g_i * w
    mu_z = p_fp * clutter * (1.0 - r_pred) + _group_sums(cell, w_tilde, C)
    mu_empty = (1.0 - p_tp) * r_pred + (1.0 - p_fp) * (1.0 - r_pred)
    w_meas = np.where(mu_z[cell] > 0, w_tilde / np.where(mu_z[cell] > 0, mu_z[cell], 1.0), 0.0)
    w_none = np.where(mu_empty[cell] > 0,
                      (1.0 - p_tp[cell]) * w / np.where(mu_empty[cell] > 0, mu_empty[cell], 1.0), 0.0)
    w = np.where(occ[cell], w_meas, w_none)
    r_post = _group_sums(cell, w, C)

    nxt = ParticleStore(px, py, vx, vy, w, cell, np.zeros(cell.size, dtype=bool))
    total = float(w.sum())
    if resample and total > 0:
        m = n if n_out is None else n_out
        uu = float(draw_random_block(seed, k, Stage.RESAMPLE, 0, 1)[0])
        idx = np.repeat(np.arange(w.size), _systematic_counts(w, m, uu))
        nxt = nxt.take(idx)
        nxt.weight = np.full(m, total / m)
    return ReferenceState(geom, nxt, r_post, k + 1, dict(state.diagnostics))


# ---------------------------------------------------------------------------
# sequential DS-PHD/MIB mirror


def _f(x) -> float:
    return float(x)


def _cell_of(x: float, y: float, geom: GridGeometry) -> int:
    n = geom.cells_per_side
    ix, iy = math.floor(x / geom.cell_size), math.floor(y / geom.cell_size)
    if 0 <= ix < n and 0 <= iy < n:
        return iy * n + ix
    return geom.sentinel


def _allocate_slots(born: list[float], nu_b: int, total: float) -> list[int]:
    slots = [0] * len(born)
    if nu_b == 0 or total <= 0:
        return slots
    rems = []
    for c, b in enumerate(born):
        share = (b / total) * nu_b
        base = math.floor(share)
        slots[c] = base
        if b > 0:
            rems.append((-(share - base), c))
    left = nu_b - sum(slots)
    rems.sort()
    i = 0
    while left > 0 and rems:
        slots[rems[i % len(rems)][1]] += 1
        left -= 1
        i += 1
    while left < 0:
        c = max(range(len(slots)), key=lambda j: (slots[j], -j))
        slots[c] -= 1
        left += 1
    return slots


def _sequential_reset(meas: MeasurementGrid, params: FilterParams, geom: GridGeometry,
                      k: int) -> ParticleStore:
    nu, seed, h = params.nu, params.seed, geom.cell_size
    cand = [c for c in range(geom.n_cells) if meas.m_occ[c] > 0] or list(range(geom.n_cells))
    uc = draw_random_block(seed, k, Stage.RESET_CELL, 0, nu).tolist()
    ux = draw_random_block(seed, k, Stage.RESET_POS_X, 0, nu).tolist()
    uy = draw_random_block(seed, k, Stage.RESET_POS_Y, 0, nu).tolist()
    gx = draw_random_block(seed, k, Stage.RESET_VEL_X, 0, nu, "normal").tolist()
    gy = draw_random_block(seed, k, Stage.RESET_VEL_Y, 0, nu, "normal").tolist()
    res = ParticleStore.empty(nu, geom.sentinel)
    sb = params.sigma_birth_vel
    for i in range(nu):
        c = cand[min(int(uc[i] * len(cand)), len(cand) - 1)]
        res.pos_x[i] = (c % geom.cells_per_side + ux[i]) * h
        res.pos_y[i] = (c // geom.cells_per_side + uy[i]) * h
        res.vel_x[i], res.vel_y[i] = sb * gx[i], sb * gy[i]
        res.cell_index[i] = c
    return res


def sequential_ds_step(grid: GridMap, particles: ParticleStore, meas: MeasurementGrid,
                       params: FilterParams, T: float):
    """Single-threaded per-cell mirror of ``filter.step(..., strict=True)``."""
    geom = grid.geometry
    C = geom.n_cells
    h = geom.cell_size
    k = grid.step_index
    seed = params.seed
    n = particles.count

    # 1. predict
    sp = params.sigma_proc_pos * T
    sv = params.sigma_proc_vel * T
    nx_ = draw_random_block(seed, k, Stage.PRED_POS_X, 0, n, "normal").tolist()
    ny_ = draw_random_block(seed, k, Stage.PRED_POS_Y, 0, n, "normal").tolist()
    nvx = draw_random_block(seed, k, Stage.PRED_VEL_X, 0, n, "normal").tolist()
    nvy = draw_random_block(seed, k, Stage.PRED_VEL_Y, 0, n, "normal").tolist()
    P = []
    for i in range(n):
        x = _f(particles.pos_x[i]) + _f(particles.vel_x[i]) * T + sp * nx_[i]
        y = _f(particles.pos_y[i]) + _f(particles.vel_y[i]) * T + sp * ny_[i]
        vx = _f(particles.vel_x[i]) + sv * nvx[i]
        vy = _f(particles.vel_y[i]) + sv * nvy[i]
        c = _cell_of(x, y, geom)
        w = _f(particles.weight[i]) * params.p_s
        if c == geom.sentinel:
            w = 0.0
        P.append([x, y, vx, vy, w, c])

    # 2. sort and assign
    P = [P[i] for i in sorted(range(n), key=lambda i: P[i][5])]
    members: list[list[int]] = [[] for _ in range(C)]
    for i, rec in enumerate(P):
        if rec[5] < C:
            members[rec[5]].append(i)

    out = GridMap.vacuous(geom)
    out.step_index = k + 1
    alpha = params.free_discount(T)

    # 3. occupancy
    for c in range(C):
        idx = members[c]
        if idx:
            out.start_idx[c], out.end_idx[c] = idx[0], idx[-1]
        m_pred = math.fsum(P[i][4] for i in idx)
        if m_pred > 1.0:
            for i in idx:
                P[i][4] = P[i][4] / m_pred
            m_pred = 1.0
        m_free_pred = min(alpha * _f(grid.m_free_up[c]), 1.0 - m_pred)
        zo, zf = _f(meas.m_occ[c]), _f(meas.m_free[c])
        o, f, conflict = combine_arrays(m_pred, m_free_pred, zo, zf)
        if bool(conflict):
            m_pred, m_free_pred, o, f = 0.0, 0.0, zo, zf
        o, f = float(o), float(f)
        nb = params.p_b * (1.0 - m_pred)
        den = m_pred + nb
        rho_b = o * nb / den if den > 0 else 0.0
        out.m_occ_pred[c], out.m_free_pred[c] = m_pred, m_free_pred
        out.m_occ_up[c], out.m_free_up[c] = o, f
        out.rho_b[c], out.rho_p[c] = rho_b, o - rho_b

    # 4. persistent update
    for c in range(C):
        idx = members[c]
        rho_p = _f(out.rho_p[c])
        dop = bool(meas.has_doppler[c])
        p_a = _f(meas.p_assoc[c]) if dop else 0.0
        r2 = [float(doppler_residual_sq(meas.dir_x[c], meas.dir_y[c], meas.radial_speed[c],
                                        meas.doppler_sd[c], P[i][2], P[i][3])) for i in idx] if dop else []
        best = min(r2) if r2 else 0.0
        tilde = []
        for j, i in enumerate(idx):
            like = float(np.exp(-0.5 * (r2[j] - best))) if dop else 1.0
            tilde.append(like * P[i][4])
        s = math.fsum(tilde)
        peak = float(doppler_density(best, meas.doppler_sd[c])) if dop else 1.0
        gated = dop and idx and peak == 0.0
        if dop and (gated or s <= 0.0) and p_a > 0 and idx:
            p_a = 0.0
        mu_a = rho_p / s if s > 0 else 0.0
        mp = _f(out.m_occ_pred[c])
        mu_ua = rho_p / mp if mp > 0 else 0.0
        out.mu_a[c], out.mu_ua[c] = (mu_a / peak if dop and not gated else mu_a), mu_ua
        for i, wt in zip(idx, tilde):
            P[i][4] = p_a * mu_a * wt + (1.0 - p_a) * mu_ua * P[i][4]

    # 5. births
    born = [(_f(out.rho_b[c]) if meas.m_occ[c] > 0 else 0.0) for c in range(C)]
    slots = _allocate_slots(born, params.nu_b, math.fsum(born))
    used = sum(slots)
    ux = draw_random_block(seed, k, Stage.BIRTH_POS_X, 0, used).tolist()
    uy = draw_random_block(seed, k, Stage.BIRTH_POS_Y, 0, used).tolist()
    gx = draw_random_block(seed, k, Stage.BIRTH_VEL_X, 0, used, "normal").tolist()
    gy = draw_random_block(seed, k, Stage.BIRTH_VEL_Y, 0, used, "normal").tolist()
    gr = draw_random_block(seed, k, Stage.BIRTH_RADIAL, 0, used, "normal").tolist()
    gt = draw_random_block(seed, k, Stage.BIRTH_TANGENT, 0, used, "normal").tolist()
    sb = params.sigma_birth_vel
    B = []
    j = 0
    for c in range(C):
        s = slots[c]
        if not s:
            continue
        p_a = _f(meas.p_assoc[c]) if meas.has_doppler[c] else 0.0
        n_a = math.floor(p_a * s + 0.5)
        n_u = s - n_a
        rho_b = _f(out.rho_b[c])
        if n_u == 0:
            w_a, w_u = rho_b / n_a, 0.0
        elif n_a == 0:
            w_a, w_u = 0.0, rho_b / n_u
        else:
            w_a, w_u = p_a * rho_b / n_a, (1.0 - p_a) * rho_b / n_u
        ix, iy = c % geom.cells_per_side, c // geom.cells_per_side
        for r in range(s):
            x, y = (ix + ux[j]) * h, (iy + uy[j]) * h
            if r < n_a:
                dx, dy = _f(meas.dir_x[c]), _f(meas.dir_y[c])
                radial = _f(meas.radial_speed[c]) + _f(meas.doppler_sd[c]) * gr[j]
                tangent = sb * gt[j]
                B.append([x, y, radial * dx - tangent * dy, radial * dy + tangent * dx, w_a, c, True])
            else:
                B.append([x, y, sb * gx[j], sb * gy[j], w_u, c, False])
            j += 1
    for _ in range(params.nu_b - used):
        B.append([0.0, 0.0, 0.0, 0.0, 0.0, geom.sentinel, False])

    # 6. moments
    for c in range(C):
        idx = members[c]
        rho = _f(out.rho_p[c])
        if rho < MOMENT_MIN_MASS or not idx:
            continue
        sx = math.fsum(P[i][4] * P[i][2] for i in idx)
        sy = math.fsum(P[i][4] * P[i][3] for i in idx)
        sxx = math.fsum(P[i][4] * P[i][2] * P[i][2] for i in idx)
        syy = math.fsum(P[i][4] * P[i][3] * P[i][3] for i in idx)
        sxy = math.fsum(P[i][4] * P[i][2] * P[i][3] for i in idx)
        mx, my = sx / rho, sy / rho
        var_x = max(sxx / rho - mx * mx, 0.0)
        var_y = max(syy / rho - my * my, 0.0)
        bound = math.sqrt(var_x * var_y)
        cov = min(max(sxy / rho - mx * my, -bound), bound)
        out.mean_vx[c], out.mean_vy[c] = mx, my
        out.var_vx[c], out.var_vy[c], out.cov_vxy[c] = var_x, var_y, cov
        out.moments_valid[c] = True

    # 7. resample
    joint = [rec[:6] + [False] for rec in P] + B
    weights = [rec[4] for rec in joint]
    total = math.fsum(weights)
    nu = params.nu
    if not total > 0:
        return out, _sequential_reset(meas, params, geom, k)
    cum = []
    acc = 0.0
    last = 0
    for i, wt in enumerate(weights):
        prev = acc
        acc += wt
        cum.append(acc)
        if acc > prev:
            last = i
    u = float(draw_random_block(seed, k, Stage.RESAMPLE, 0, 1)[0])
    eq = equal_weights(total, nu)
    res = ParticleStore.empty(nu, geom.sentinel)
    for i in range(nu):
        point = (i + u) * total / nu
        j = min(bisect.bisect_right(cum, point), last)
        rec = joint[j]
        res.pos_x[i], res.pos_y[i], res.vel_x[i], res.vel_y[i] = rec[0], rec[1], rec[2], rec[3]
        res.cell_index[i] = rec[5]
    res.weight[:] = eq
    return out, res
