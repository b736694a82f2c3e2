"""Synthetic worlds: rectangles, piecewise kinematics, ego motion, sensor configs."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class Rect:
    """Axis-aligned rectangle given by its center and full extents."""

    cx: float
    cy: float
    length: float  # along x
    width: float  # along y

    def __post_init__(self):
        if not (self.length > 0 and self.width > 0):
            raise ValueError("degenerate rectangle")

    @property
    def bounds(self):
        hx, hy = 0.5 * self.length, 0.5 * self.width
        return self.cx - hx, self.cy - hy, self.cx + hx, self.cy + hy

    def moved(self, cx: float, cy: float) -> "Rect":
        return Rect(cx, cy, self.length, self.width)


@dataclass(frozen=True)
class Segment:
    duration: float
    ax: float = 0.0
    ay: float = 0.0


@dataclass(frozen=True)
class Trajectory:
    """Piecewise-constant acceleration; constant velocity after the last segment."""

    x0: float
    y0: float
    vx0: float = 0.0
    vy0: float = 0.0
    segments: tuple[Segment, ...] = ()

    def _knots(self):
        t, x, y, vx, vy = 0.0, self.x0, self.y0, self.vx0, self.vy0
        out = []
        for s in self.segments:
            out.append((t, x, y, vx, vy, s))
            d = s.duration
            x += vx * d + 0.5 * s.ax * d * d
            y += vy * d + 0.5 * s.ay * d * d
            vx += s.ax * d
            vy += s.ay * d
            t += d
        out.append((t, x, y, vx, vy, None))
        return out

    def state(self, t: float):
        """(x, y, vx, vy) at time t, by exact integration."""
        if t < 0:
            raise ValueError("t < 0")
        for t0, x, y, vx, vy, seg in self._knots():
            if seg is None or t < t0 + seg.duration:
                d = t - t0
                ax = seg.ax if seg else 0.0
                ay = seg.ay if seg else 0.0
                return (x + vx * d + 0.5 * ax * d * d, y + vy * d + 0.5 * ay * d * d,
                        vx + ax * d, vy + ay * d)
        raise AssertionError("unreachable")

    @property
    def duration(self) -> float:
        return sum(s.duration for s in self.segments)


@dataclass(frozen=True)
class MovingObject:
    footprint: Rect  # extents; center is taken from the trajectory
    trajectory: Trajectory

    def rect_at(self, t: float) -> Rect:
        x, y, _, _ = self.trajectory.state(t)
        return self.footprint.moved(x, y)


@dataclass(frozen=True)
class EgoSegment:
    duration: float
    speed: float  # m/s along the heading (negative: reversing)
    yaw_rate: float = 0.0  # rad/s


@dataclass(frozen=True)
class EgoTrajectory:
    x0: float = 0.0
    y0: float = 0.0
    yaw0: float = 0.0
    segments: tuple[EgoSegment, ...] = ()

    def pose(self, t: float):
        """(x, y, yaw) at time t; stands still after the last segment."""
        x, y, yaw, t0 = self.x0, self.y0, self.yaw0, 0.0
        for s in self.segments:
            d = min(max(t - t0, 0.0), s.duration)
            if d > 0:
                if abs(s.yaw_rate) < 1e-12:
                    x += s.speed * d * math.cos(yaw)
                    y += s.speed * d * math.sin(yaw)
                else:
                    r = s.speed / s.yaw_rate
                    yaw1 = yaw + s.yaw_rate * d
                    x += r * (math.sin(yaw1) - math.sin(yaw))
                    y -= r * (math.cos(yaw1) - math.cos(yaw))
                    yaw = yaw1
            t0 += s.duration
            if t < t0:
                break
        return x, y, yaw


@dataclass(frozen=True)
class LidarConfig:
    fov_deg: float = 120.0
    beams: int = 481
    max_range: float = 20.0
    range_sd: float = 0.02
    occ_mass: float = 0.95
    free_mass: float = 0.7

    def azimuths(self) -> np.ndarray:
        half = math.radians(self.fov_deg) / 2
        if self.beams == 1:
            return np.zeros(1)
        return np.linspace(-half, half, self.beams)


@dataclass(frozen=True)
class RadarConfig:
    enabled: bool = True
    fov_deg: float = 90.0
    beam_step_deg: float = 1.0
    max_range: float = 8.0
    p_detect: float = 0.9
    doppler_sd: float = 0.25
    pos_sd: float = 0.0
    p_assoc: float = 0.9
    occ_mass: float = 0.6

    def azimuths(self) -> np.ndarray:
        half = math.radians(self.fov_deg) / 2
        n = max(1, int(round(self.fov_deg / self.beam_step_deg)) + 1)
        return np.linspace(-half, half, n)


@dataclass(frozen=True)
class GridConfig:
    side_length: float = 24.0
    cell_size: float = 0.1


@dataclass(frozen=True)
class Scenario:
    name: str
    duration: float
    dt: float
    static_obstacles: tuple[Rect, ...] = ()
    moving_objects: tuple[MovingObject, ...] = ()
    ego: EgoTrajectory = field(default_factory=EgoTrajectory)
    lidar: LidarConfig = field(default_factory=LidarConfig)
    radar: RadarConfig = field(default_factory=RadarConfig)
    grid: GridConfig = field(default_factory=GridConfig)
    seed: int = 0
    # time windows (start, end) of trajectory phases, for evaluation
    phases: tuple[tuple[str, float, float], ...] = ()

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.duration < 0:
            raise ValueError("duration must be >= 0")

    @property
    def n_steps(self) -> int:
        return int(math.floor(self.duration / self.dt + 1e-9)) + 1

    def times(self) -> np.ndarray:
        return np.arange(self.n_steps) * self.dt

    def rects_at(self, t: float):
        """(rects, is_dynamic, velocities) of every object at time t."""
        rects = list(self.static_obstacles)
        dyn = [False] * len(rects)
        vel = [(0.0, 0.0)] * len(rects)
        for obj in self.moving_objects:
            x, y, vx, vy = obj.trajectory.state(t)
            rects.append(obj.footprint.moved(x, y))
            dyn.append(True)
            vel.append((vx, vy))
        return rects, dyn, vel

    def phase(self, name: str):
        for n, a, b in self.phases:
            if n == name:
                return a, b
        raise KeyError(name)


# ---------------------------------------------------------------------------
# built-in scenarios


@dataclass(frozen=True)
class SegwayParams:
    accel_time: float = 4.0
    cruise_time: float = 6.0
    decel_time: float = 2.0
    cruise_speed: float = 5.0
    start_distance: float = 7.0
    ego_speed: float = -3.5  # reversing away from the approaching object
    size: float = 0.6
    dt: float = 0.1
    lateral_offset: float = 0.0


def segway_scenario(p: SegwayParams = SegwayParams(), seed: int = 0) -> Scenario:
    """Small object approaching the ego head-on: accelerate, cruise, brake hard.

    The ego reverses so that the whole run fits into a desk-scale grid; the
    object closes in relative terms only during the cruise phase, which
    brings it into the short radar range mid-run.
    """
    total = p.accel_time + p.cruise_time + p.decel_time
    a_up = -p.cruise_speed / p.accel_time
    a_down = p.cruise_speed / p.decel_time
    traj = Trajectory(p.start_distance, p.lateral_offset, 0.0, 0.0,
                      (Segment(p.accel_time, a_up), Segment(p.cruise_time), Segment(p.decel_time, a_down)))
    seg = MovingObject(Rect(0.0, 0.0, p.size, p.size), traj)
    ego = EgoTrajectory(0.0, 0.0, 0.0, (EgoSegment(total, p.ego_speed),))
    # a few parked objects along the route give static structure
    static = tuple(Rect(-40.0 + 9.0 * i, 4.5, 4.5, 1.8) for i in range(6))
    phases = (("accel", 0.0, p.accel_time),
              ("cruise", p.accel_time, p.accel_time + p.cruise_time),
              ("decel", p.accel_time + p.cruise_time, total))
    return Scenario("segway", total, p.dt, static, (seg,), ego, LidarConfig(), RadarConfig(),
                    GridConfig(), seed, phases)


@dataclass(frozen=True)
class FollowParams:
    mover_speed: float = 1.0
    ego_speed: float = 1.0
    mover_gap: float = 6.0
    mover_length: float = 2.0
    mover_width: float = 1.0
    car_length: float = 4.5
    car_width: float = 1.8
    lane_half_width: float = 2.6
    car_spacing: float = 6.0
    duration: float = 8.0
    dt: float = 0.1


def follow_scenario(p: FollowParams = FollowParams(), seed: int = 0) -> Scenario:
    """Object driving between two rows of parked cars, ego following behind."""
    mover = MovingObject(Rect(0.0, 0.0, p.mover_length, p.mover_width),
                         Trajectory(p.mover_gap, 0.0, p.mover_speed, 0.0, (Segment(p.duration),)))
    ego = EgoTrajectory(0.0, 0.0, 0.0, (EgoSegment(p.duration, p.ego_speed),))
    cars = []
    x = -12.0
    end = p.duration * max(p.ego_speed, p.mover_speed) + p.mover_gap + 20.0
    while x < end:
        for side in (-1, 1):
            cars.append(Rect(x, side * p.lane_half_width + side * 0.5 * p.car_width, p.car_length, p.car_width))
        x += p.car_spacing
    return Scenario("corridor", p.duration, p.dt, tuple(cars), (mover,), ego,
                    LidarConfig(fov_deg=180.0, beams=721), RadarConfig(fov_deg=120.0, max_range=15.0),
                    GridConfig(), seed, (("all", 0.0, p.duration),))
