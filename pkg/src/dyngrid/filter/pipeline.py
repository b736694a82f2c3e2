"""The DS-PHD/MIB recursion as seven data-parallel stages.

Stages, in order: particle prediction, sort and cell assignment, cell
occupancy update, persistent particle update, new-born particle
initialization, per-cell velocity moments, systematic resampling.

Every per-cell sum over a contiguous particle group is read off an
inclusive prefix scan as the difference of two entries. In strict mode the
scans are exact (see ``scan.PrefixSum``) and the whole step is bitwise
reproducible regardless of the thread count.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from ..core.evidence import combine_arrays
from ..core.geometry import GridGeometry
from ..core.rng import Stage, draw_random_block
from ..core.state import EMPTY, FilterParams, GridMap, ParticleStore
from ..measurement import MeasurementGrid, doppler_density, doppler_residual_sq
from .scan import SERIAL, PrefixSum, Workers, plain_cumsum

MOMENT_MIN_MASS = 1e-9


@dataclass
class PipelineScratch:
    strict: bool = False
    workers: Workers = SERIAL
    weight_array: np.ndarray | None = None
    weight_accum: PrefixSum | None = None
    born_masses: np.ndarray | None = None
    particle_orders_accum: np.ndarray | None = None
    velocity_accum: dict = field(default_factory=dict)
    birth_particles: ParticleStore | None = None
    diagnostics: dict = field(default_factory=dict)

    def scan(self, values) -> PrefixSum:
        return PrefixSum(values, exact=self.strict, workers=self.workers)

    def total(self, values) -> float:
        values = np.asarray(values, dtype=np.float64)
        if self.strict:
            return math.fsum(values.tolist())
        return self.scan(values).total()

    def count(self, key, n=1):
        self.diagnostics[key] = self.diagnostics.get(key, 0) + n


def _normals(seed, step, stage, n):
    return draw_random_block(seed, step, stage, 0, n, "normal")


def _uniforms(seed, step, stage, n):
    return draw_random_block(seed, step, stage, 0, n, "uniform")


def _padded(cell_values: np.ndarray, fill=0.0) -> np.ndarray:
    """Per-cell array with one extra entry for the out-of-grid sentinel."""
    return np.append(cell_values, fill)


# ---------------------------------------------------------------------------
# stage 1


def predict_particles(particles: ParticleStore, params: FilterParams, T: float,
                      geom: GridGeometry, step: int = 0) -> ParticleStore:
    """Constant-velocity prediction with additive Gaussian noise.

    Noise SDs are ``sigma * T`` (T in seconds). Weights are scaled by p_S;
    particles leaving the grid get the sentinel cell and weight 0.
    """
    if T <= 0:
        raise ValueError("T must be positive")
    n = particles.count
    seed = params.seed
    sp = params.sigma_proc_pos * T
    sv = params.sigma_proc_vel * T
    px = particles.pos_x + particles.vel_x * T + sp * _normals(seed, step, Stage.PRED_POS_X, n)
    py = particles.pos_y + particles.vel_y * T + sp * _normals(seed, step, Stage.PRED_POS_Y, n)
    vx = particles.vel_x + sv * _normals(seed, step, Stage.PRED_VEL_X, n)
    vy = particles.vel_y + sv * _normals(seed, step, Stage.PRED_VEL_Y, n)
    cell = geom.local_to_cell(px, py)
    cell = np.asarray(cell, dtype=np.int64).reshape(n)
    w = particles.weight * params.p_s
    w = np.where(cell == geom.sentinel, 0.0, w)
    return ParticleStore(px, py, vx, vy, w, cell, np.zeros(n, dtype=bool))


# ---------------------------------------------------------------------------
# stage 2


def sort_and_assign(particles: ParticleStore, geom: GridGeometry):
    """Stable sort by cell index; returns (sorted store, start_idx, end_idx).

    Cells without particles get ``EMPTY`` for both indices. Out-of-grid
    particles (sentinel index) end up after every valid group.
    """
    order = np.argsort(particles.cell_index, kind="stable")
    p = particles.take(order)
    cells = np.arange(geom.n_cells)
    lo = np.searchsorted(p.cell_index, cells, side="left")
    hi = np.searchsorted(p.cell_index, cells, side="right") - 1
    empty = hi < lo
    start = np.where(empty, EMPTY, lo).astype(np.int64)
    end = np.where(empty, EMPTY, hi).astype(np.int64)
    return p, start, end


# ---------------------------------------------------------------------------
# stage 3


def birth_split(m_occ_up, m_occ_pred, p_b):
    """New-born share of the updated occupied mass: (rho_b, rho_p)."""
    m_occ_up = np.asarray(m_occ_up, dtype=np.float64)
    m_occ_pred = np.asarray(m_occ_pred, dtype=np.float64)
    nb = p_b * (1.0 - m_occ_pred)
    den = m_occ_pred + nb
    safe = np.where(den > 0, den, 1.0)
    rho_b = np.where(den > 0, m_occ_up * nb / safe, 0.0)
    return rho_b, m_occ_up - rho_b


def update_cell_occupancy(grid: GridMap, particles: ParticleStore, start, end,
                          meas: MeasurementGrid, scratch: PipelineScratch,
                          params: FilterParams, T: float):
    """Predicted and updated occupancy BBA per cell and the persistent/new-born split.

    Returns ``(new_grid, particles)``; particle weights change only in cells
    whose predicted mass exceeded 1 (rescaled to sum to 1).
    """
    g = grid.copy()
    g.start_idx, g.end_idx = start, end
    w = particles.weight
    acc = scratch.scan(w)
    m_pred = acc.range_sum(start, end)
    capped = m_pred > 1.0
    if capped.any():
        scale = _padded(np.where(capped, m_pred, 1.0), 1.0)[particles.cell_index]
        in_capped = _padded(capped, False)[particles.cell_index]
        w = np.where(in_capped, w / scale, w)
        particles = ParticleStore(particles.pos_x, particles.pos_y, particles.vel_x,
                                  particles.vel_y, w, particles.cell_index, particles.assoc)
        m_pred = np.where(capped, 1.0, m_pred)
        acc = scratch.scan(w)
        scratch.count("capped_cells", int(capped.sum()))
    scratch.weight_array = w
    scratch.weight_accum = acc

    alpha = params.free_discount(T)
    m_free_pred = np.minimum(alpha * grid.m_free_up, 1.0 - m_pred)
    m_o, m_f, conflict = combine_arrays(m_pred, m_free_pred, meas.m_occ, meas.m_free)
    if conflict.any():
        # contradictory prediction: drop it for this cell, keep the measurement
        m_pred = np.where(conflict, 0.0, m_pred)
        m_free_pred = np.where(conflict, 0.0, m_free_pred)
        m_o = np.where(conflict, meas.m_occ, m_o)
        m_f = np.where(conflict, meas.m_free, m_f)
        scratch.count("conflict_resets", int(conflict.sum()))
    rho_b, rho_p = birth_split(m_o, m_pred, params.p_b)
    g.m_occ_pred, g.m_free_pred = m_pred, m_free_pred
    g.m_occ_up, g.m_free_up = m_o, m_f
    g.rho_b, g.rho_p = rho_b, rho_p
    scratch.born_masses = rho_b
    return g, particles


# ---------------------------------------------------------------------------
# stage 4


def update_persistent_particles(particles: ParticleStore, grid: GridMap,
                                meas: MeasurementGrid, scratch: PipelineScratch) -> ParticleStore:
    """Posterior persistent weights; per-cell sums equal rho_p."""
    ci = particles.cell_index
    w_pred = particles.weight
    dop = _padded(meas.has_doppler, False)[ci]
    like = np.ones_like(w_pred)
    best = np.full(grid.n_cells, np.inf)
    if dop.any():
        k = ci[dop]
        r2 = doppler_residual_sq(meas.dir_x[k], meas.dir_y[k], meas.radial_speed[k],
                                 meas.doppler_sd[k], particles.vel_x[dop], particles.vel_y[dop])
        # likelihood scaled to 1 at the best particle of each cell; the posterior
        # is unchanged and small likelihoods do not drown in the range sums
        np.minimum.at(best, k, r2)
        like[dop] = np.exp(-0.5 * (r2 - best[k]))
    w_tilde = like * w_pred
    sum_tilde = scratch.scan(w_tilde).range_sum(grid.start_idx, grid.end_idx)
    rho_p = grid.rho_p
    p_a = np.where(meas.has_doppler, meas.p_assoc, 0.0)
    # a Doppler value no particle can explain (unscaled density underflows) is ignored
    peak = doppler_density(best, np.where(meas.has_doppler, meas.doppler_sd, 1.0))
    gated = peak == 0.0
    fallback = meas.has_doppler & (gated | (sum_tilde <= 0.0)) & (p_a > 0) & (grid.start_idx != EMPTY)
    if fallback.any():
        scratch.count("doppler_fallbacks", int(fallback.sum()))
        p_a = np.where(fallback, 0.0, p_a)
    mu_a = np.where(sum_tilde > 0, rho_p / np.where(sum_tilde > 0, sum_tilde, 1.0), 0.0)
    mp = grid.m_occ_pred
    mu_ua = np.where(mp > 0, rho_p / np.where(mp > 0, mp, 1.0), 0.0)
    # reported against the unscaled likelihood
    with np.errstate(over="ignore"):
        grid.mu_a = np.where(meas.has_doppler & ~gated, mu_a / np.where(gated, 1.0, peak), mu_a)
    grid.mu_ua = mu_ua
    pa_i = _padded(p_a)[ci]
    w = pa_i * _padded(mu_a)[ci] * w_tilde + (1.0 - pa_i) * _padded(mu_ua)[ci] * w_pred
    return ParticleStore(particles.pos_x, particles.pos_y, particles.vel_x, particles.vel_y,
                         w, ci, particles.assoc)


# ---------------------------------------------------------------------------
# stage 5


def allocate_birth_slots(born: np.ndarray, nu_b: int, total: float) -> np.ndarray:
    """Integer slot counts proportional to ``born`` summing to ``nu_b``.

    Floor of the proportional share, then the leftover slots go to the
    largest remainders (ties to the lower cell index).
    """
    slots = np.zeros(born.shape[0], dtype=np.int64)
    if nu_b == 0 or total <= 0:
        return slots
    share = (born / total) * nu_b
    base = np.floor(share)
    slots[:] = base.astype(np.int64)
    left = nu_b - int(slots.sum())
    if left > 0:
        cand = np.flatnonzero(born > 0)
        rem = (share - base)[cand]
        order = cand[np.argsort(-rem, kind="stable")]
        picks = np.resize(order, left)
        np.add.at(slots, picks, 1)
    elif left < 0:
        # only reachable through rounding of share; take from the largest cells
        order = np.argsort(-slots, kind="stable")
        np.subtract.at(slots, np.resize(order, -left), 1)
    return slots


def associated_count(p_a, slots):
    """Round-half-up of p_A times the cell's slot count."""
    return np.floor(np.asarray(p_a) * slots + 0.5).astype(np.int64)


def birth_weights(rho_b, p_a, n_a, n_u):
    """Per-particle weights of the associated and unassociated birth sets."""
    rho_b = np.asarray(rho_b, dtype=np.float64)
    p_a = np.asarray(p_a, dtype=np.float64)
    n_a = np.asarray(n_a)
    n_u = np.asarray(n_u)
    mass_a = np.where(n_u == 0, rho_b, np.where(n_a == 0, 0.0, p_a * rho_b))
    mass_u = np.where(n_a == 0, rho_b, np.where(n_u == 0, 0.0, (1.0 - p_a) * rho_b))
    w_a = np.where(n_a > 0, mass_a / np.maximum(n_a, 1), 0.0)
    w_u = np.where(n_u > 0, mass_u / np.maximum(n_u, 1), 0.0)
    return w_a, w_u


def initialize_new_particles(grid: GridMap, meas: MeasurementGrid, scratch: PipelineScratch,
                             params: FilterParams) -> ParticleStore:
    geom = grid.geometry
    nu_b = params.nu_b
    sentinel = geom.sentinel
    eligible = meas.m_occ > 0
    born = np.where(eligible, grid.rho_b, 0.0)
    lost = grid.rho_b[~eligible & (grid.rho_b > 0)]
    if lost.size:
        scratch.count("unrepresented_birth_cells", int(lost.size))
    total = scratch.total(born)
    scratch.particle_orders_accum = plain_cumsum(born)
    slots = allocate_birth_slots(born, nu_b, total)
    zero_slot = (born > 0) & (slots == 0)
    if zero_slot.any():
        scratch.count("unrepresented_birth_cells", int(zero_slot.sum()))
    out = ParticleStore.empty(nu_b, sentinel)
    used = int(slots.sum())
    if used == 0:
        scratch.birth_particles = out
        return out
    cells = np.repeat(np.arange(geom.n_cells), slots)
    first = np.repeat(np.cumsum(slots) - slots, slots)
    rank = np.arange(used) - first
    p_a = np.where(meas.has_doppler, meas.p_assoc, 0.0)
    n_a = associated_count(p_a, slots)
    n_u = slots - n_a
    w_a, w_u = birth_weights(grid.rho_b, p_a, n_a, n_u)
    assoc = rank < n_a[cells]

    seed, step, h = params.seed, grid.step_index, geom.cell_size
    ix, iy = geom.cell_xy(cells)
    ux = draw_random_block(seed, step, Stage.BIRTH_POS_X, 0, used)
    uy = draw_random_block(seed, step, Stage.BIRTH_POS_Y, 0, used)
    px = (ix + ux) * h
    py = (iy + uy) * h
    sb = params.sigma_birth_vel
    vx = sb * draw_random_block(seed, step, Stage.BIRTH_VEL_X, 0, used, "normal")
    vy = sb * draw_random_block(seed, step, Stage.BIRTH_VEL_Y, 0, used, "normal")
    if assoc.any():
        k = cells[assoc]
        dx, dy = meas.dir_x[k], meas.dir_y[k]
        radial = meas.radial_speed[k] + meas.doppler_sd[k] * draw_random_block(
            seed, step, Stage.BIRTH_RADIAL, 0, used, "normal")[assoc]
        tangent = sb * draw_random_block(seed, step, Stage.BIRTH_TANGENT, 0, used, "normal")[assoc]
        vx[assoc] = radial * dx - tangent * dy
        vy[assoc] = radial * dy + tangent * dx
    out.pos_x[:used] = px
    out.pos_y[:used] = py
    out.vel_x[:used] = vx
    out.vel_y[:used] = vy
    out.weight[:used] = np.where(assoc, w_a[cells], w_u[cells])
    out.cell_index[:used] = cells
    out.assoc[:used] = assoc
    scratch.birth_particles = out
    return out


# ---------------------------------------------------------------------------
# stage 6


def compute_cell_moments(particles: ParticleStore, grid: GridMap, scratch: PipelineScratch) -> GridMap:
    """Weighted velocity mean, variances and covariance per cell (persistent particles)."""
    w, vx, vy = particles.weight, particles.vel_x, particles.vel_y
    start, end = grid.start_idx, grid.end_idx
    terms = {"vx": w * vx, "vy": w * vy, "vx2": w * vx * vx, "vy2": w * vy * vy, "vxy": w * vx * vy}
    sums = {}
    for name, arr in terms.items():
        acc = scratch.scan(arr)
        scratch.velocity_accum[name] = acc
        sums[name] = acc.range_sum(start, end)
    rho = grid.rho_p
    valid = (rho >= MOMENT_MIN_MASS) & (start != EMPTY)
    r = np.where(valid, rho, 1.0)
    mx = sums["vx"] / r
    my = sums["vy"] / r
    var_x = np.maximum(sums["vx2"] / r - mx * mx, 0.0)
    var_y = np.maximum(sums["vy2"] / r - my * my, 0.0)
    bound = np.sqrt(var_x * var_y)
    cov = np.clip(sums["vxy"] / r - mx * my, -bound, bound)
    zero = lambda a: np.where(valid, a, 0.0)  # noqa: E731
    grid.mean_vx, grid.mean_vy = zero(mx), zero(my)
    grid.var_vx, grid.var_vy, grid.cov_vxy = zero(var_x), zero(var_y), zero(cov)
    grid.moments_valid = valid
    return grid


# ---------------------------------------------------------------------------
# stage 7


def equal_weights(total: float, n: int) -> np.ndarray:
    """``n`` weights of about total/n whose exact sum is ``total``.

    A few entries are moved by one ulp so that the exactly rounded sum of
    the output (``math.fsum``) reproduces ``total``.
    """
    w0 = total / n
    out = np.full(n, w0)
    if total == 0.0 or not math.isfinite(w0) or w0 == 0.0:
        return out
    resid = Fraction(total) - n * Fraction(w0)
    if resid == 0:
        return out
    toward = math.inf if resid > 0 else 0.0
    nudged = math.nextafter(w0, toward)
    step = Fraction(nudged) - Fraction(w0)
    k = resid / step
    if k.denominator != 1 or not 0 < k <= n:
        return out
    out[: int(k)] = nudged
    return out


def _birth_prior_reset(meas: MeasurementGrid, params: FilterParams, geom: GridGeometry,
                       step: int) -> ParticleStore:
    """Zero-weight particles spread over observed-occupied cells (whole grid if none)."""
    nu = params.nu
    seed = params.seed
    cand = np.flatnonzero(meas.m_occ > 0)
    if cand.size == 0:
        cand = np.arange(geom.n_cells)
    u = draw_random_block(seed, step, Stage.RESET_CELL, 0, nu)
    cells = cand[np.minimum((u * cand.size).astype(np.int64), cand.size - 1)]
    ix, iy = geom.cell_xy(cells)
    h = geom.cell_size
    px = (ix + draw_random_block(seed, step, Stage.RESET_POS_X, 0, nu)) * h
    py = (iy + draw_random_block(seed, step, Stage.RESET_POS_Y, 0, nu)) * h
    sb = params.sigma_birth_vel
    vx = sb * draw_random_block(seed, step, Stage.RESET_VEL_X, 0, nu, "normal")
    vy = sb * draw_random_block(seed, step, Stage.RESET_VEL_Y, 0, nu, "normal")
    return ParticleStore(px, py, vx, vy, np.zeros(nu), cells.astype(np.int64),
                         np.zeros(nu, dtype=bool))


def systematic_indices(cum: np.ndarray, total: float, n: int, u: float) -> np.ndarray:
    """Indices selected by the points (i + u) * total / n on the cumulative weights."""
    points = (np.arange(n) + u) * total / n
    idx = np.searchsorted(cum, points, side="right")
    last = int(np.flatnonzero(np.diff(np.concatenate([[0.0], cum])) > 0)[-1])
    return np.minimum(idx, last)


def resample(particles: ParticleStore, birth: ParticleStore, scratch: PipelineScratch,
             params: FilterParams, step: int = 0, meas: MeasurementGrid | None = None,
             geom: GridGeometry | None = None) -> ParticleStore:
    joint = ParticleStore.concatenate(particles, birth)
    nu = params.nu
    total = scratch.total(joint.weight)
    if not total > 0:
        scratch.count("empty_world_resets")
        if meas is None or geom is None:
            raise ValueError("total weight is zero and no measurement grid given for reset")
        return _birth_prior_reset(meas, params, geom, step)
    cum = plain_cumsum(joint.weight, SERIAL if scratch.strict else scratch.workers)
    u = float(draw_random_block(params.seed, step, Stage.RESAMPLE, 0, 1)[0])
    idx = systematic_indices(cum, total, nu, u)
    out = joint.take(idx)
    out.weight = equal_weights(total, nu)
    out.assoc = np.zeros(nu, dtype=bool)
    return out


# ---------------------------------------------------------------------------
# full step


def step(grid: GridMap, particles: ParticleStore, meas: MeasurementGrid, params: FilterParams,
         T: float, strict: bool = False, workers: Workers = SERIAL, timings: dict | None = None,
         trace: dict | None = None):
    """One recursion; returns ``(grid, particles)`` for the next time step.

    The returned grid carries the updated masses and the velocity moments.
    Its particle index ranges refer to the sorted pre-resampling particle
    set of this step, which is stored as ``trace["persistent"]`` (next to
    ``trace["birth"]``) when a trace dict is given.
    """
    geom = grid.geometry
    if meas.geometry.n_cells != geom.n_cells:
        raise ValueError("measurement grid and filter grid differ in size")
    k = grid.step_index
    scratch = PipelineScratch(strict=strict, workers=workers)
    clock = time.perf_counter
    t = {}

    t0 = clock()
    pred = predict_particles(particles, params, T, geom, k)
    scratch.count("out_of_grid", int((pred.cell_index == geom.sentinel).sum()))
    t1 = clock()
    pred, start, end = sort_and_assign(pred, geom)
    t2 = clock()
    g, pred = update_cell_occupancy(grid, pred, start, end, meas, scratch, params, T)
    t3 = clock()
    post = update_persistent_particles(pred, g, meas, scratch)
    t4 = clock()
    birth = initialize_new_particles(g, meas, scratch, params)
    t5 = clock()
    g = compute_cell_moments(post, g, scratch)
    t6 = clock()
    nxt = resample(post, birth, scratch, params, k, meas, geom)
    t7 = clock()

    t.update(predict=t1 - t0, sort_assign=t2 - t1, occupancy=t3 - t2, persistent=t4 - t3,
             birth=t5 - t4, moments=t6 - t5, resample=t7 - t6, total=t7 - t0)
    if timings is not None:
        timings.update(t)
    if trace is not None:
        trace.update(persistent=post, birth=birth)
    g.step_index = k + 1
    g.diagnostics = dict(scratch.diagnostics)
    return g, nxt


class DynamicGridFilter:
    """Owns the filter state between steps."""

    def __init__(self, geometry: GridGeometry, params: FilterParams, strict: bool = False,
                 threads: int = 1):
        self.params = params
        self.strict = strict
        self.workers = Workers(threads)
        self.grid = GridMap.vacuous(geometry)
        self.particles = ParticleStore.empty(0, geometry.sentinel)
        self.last_timings: dict = {}

    @property
    def geometry(self) -> GridGeometry:
        return self.grid.geometry

    def step(self, meas: MeasurementGrid, T: float) -> GridMap:
        self.last_timings = {}
        self.grid, self.particles = step(self.grid, self.particles, meas, self.params, T,
                                         self.strict, self.workers, self.last_timings)
        return self.grid

    def scroll(self, delta):
        from ..measurement import ego_scroll
        self.grid, self.particles = ego_scroll(self.grid, self.particles, delta)

    def close(self):
        self.workers.close()
