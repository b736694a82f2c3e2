"""Reading and writing scenario files.

A scenario file uses the ``[section]`` / ``key = value`` format of
``dyngrid.keyvalue``. Sections:

``[world]``      name, duration, dt, seed, grid_side, cell_size
``[ego]``        x, y, yaw, segments
``[object.N]``   kind (static | moving), x, y, length, width, and for movers vx, vy, segments
``[lidar]``      fov_deg, beams, max_range, range_sd, occ_mass, free_mass
``[radar]``      enabled, fov_deg, beam_step_deg, max_range, p_detect, doppler_sd, pos_sd,
                 p_assoc, occ_mass
``[phases]``     <name> = <start> <end>

``segments`` is a ``;``-separated list of whitespace-separated numbers:
``duration speed yaw_rate`` for the ego, ``duration ax ay`` for movers.
Angles are radians except the ``*_deg`` keys.
"""

from __future__ import annotations

from dataclasses import fields
from pathlib import Path

from ..keyvalue import ConfigError, Section, dump, parse, parse_bool
from .scenario import (EgoSegment, EgoTrajectory, GridConfig, LidarConfig, MovingObject, RadarConfig,
                       Rect, Scenario, Segment, Trajectory)


def _segments(raw: str, n: int):
    out = []
    for part in raw.split(";"):
        part = part.strip()
        if not part:
            continue
        nums = [float(v) for v in part.split()]
        if len(nums) != n:
            raise ValueError(f"segment {part!r} needs {n} numbers")
        out.append(nums)
    return out


def _config(sec: Section, cls):
    kw = {}
    for f in fields(cls):
        conv = {"bool": parse_bool, "int": int}.get(str(f.type), float)
        v = sec.take(f.name, conv)
        if v is not None:
            kw[f.name] = v
    return cls(**kw)


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    return repr(v) if isinstance(v, float) else str(v)


def loads(text: str, path="<string>") -> Scenario:
    secs = {s.name: s for s in parse(text, path)}
    if "world" not in secs:
        raise ConfigError(path, 0, "missing [world] section")
    w = secs.pop("world")
    name = w.take("name", str, "scenario")
    duration = w.take("duration", float, required=True)
    dt = w.take("dt", float, required=True)
    seed = w.take("seed", int, 0)
    grid = GridConfig(w.take("grid_side", float, 24.0), w.take("cell_size", float, 0.1))
    w.finish()

    ego = EgoTrajectory()
    if "ego" in secs:
        e = secs.pop("ego")
        segs = e.take("segments", lambda r: _segments(r, 3), [])
        ego = EgoTrajectory(e.take("x", float, 0.0), e.take("y", float, 0.0), e.take("yaw", float, 0.0),
                            tuple(EgoSegment(*s) for s in segs))
        e.finish()

    static, moving = [], []
    for key in sorted((k for k in secs if k.startswith("object.")), key=lambda k: secs[k].line):
        o = secs.pop(key)
        kind = o.take("kind", str, required=True)
        x, y = o.take("x", float, required=True), o.take("y", float, required=True)
        rect_args = (o.take("length", float, required=True), o.take("width", float, required=True))
        try:
            if kind == "static":
                static.append(Rect(x, y, *rect_args))
            elif kind == "moving":
                segs = o.take("segments", lambda r: _segments(r, 3), [])
                traj = Trajectory(x, y, o.take("vx", float, 0.0), o.take("vy", float, 0.0),
                                  tuple(Segment(*s) for s in segs))
                moving.append(MovingObject(Rect(0.0, 0.0, *rect_args), traj))
            else:
                raise ConfigError(path, o.line, f"[{key}] kind must be static or moving")
        except ValueError as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(path, o.line, f"[{key}] {exc}") from None
        o.finish()

    lidar = LidarConfig()
    if "lidar" in secs:
        s = secs.pop("lidar")
        lidar = _config(s, LidarConfig)
        s.finish()
    radar = RadarConfig()
    if "radar" in secs:
        s = secs.pop("radar")
        radar = _config(s, RadarConfig)
        s.finish()
    phases = []
    if "phases" in secs:
        s = secs.pop("phases")
        for key in list(s.values):
            a, b = s.take(key, lambda r: [float(v) for v in r.split()])
            phases.append((key, a, b))
    for name, s in secs.items():
        raise ConfigError(path, s.line, f"unknown section [{name}]")
    return Scenario(name, duration, dt, tuple(static), tuple(moving), ego, lidar, radar, grid, seed,
                    tuple(phases))


def load(path) -> Scenario:
    p = Path(path)
    return loads(p.read_text(), str(p))


def dumps(sc: Scenario) -> str:
    secs = [("world", [("name", sc.name), ("duration", _fmt(sc.duration)), ("dt", _fmt(sc.dt)),
                       ("seed", sc.seed), ("grid_side", _fmt(sc.grid.side_length)),
                       ("cell_size", _fmt(sc.grid.cell_size))])]
    e = sc.ego
    segs = "; ".join(f"{_fmt(s.duration)} {_fmt(s.speed)} {_fmt(s.yaw_rate)}" for s in e.segments)
    secs.append(("ego", [("x", _fmt(e.x0)), ("y", _fmt(e.y0)), ("yaw", _fmt(e.yaw0)), ("segments", segs)]))
    i = 0
    for r in sc.static_obstacles:
        secs.append((f"object.{i}", [("kind", "static"), ("x", _fmt(r.cx)), ("y", _fmt(r.cy)),
                                     ("length", _fmt(r.length)), ("width", _fmt(r.width))]))
        i += 1
    for m in sc.moving_objects:
        t = m.trajectory
        segs = "; ".join(f"{_fmt(s.duration)} {_fmt(s.ax)} {_fmt(s.ay)}" for s in t.segments)
        secs.append((f"object.{i}", [("kind", "moving"), ("x", _fmt(t.x0)), ("y", _fmt(t.y0)),
                                     ("length", _fmt(m.footprint.length)), ("width", _fmt(m.footprint.width)),
                                     ("vx", _fmt(t.vx0)), ("vy", _fmt(t.vy0)), ("segments", segs)]))
        i += 1
    for name, cfg in (("lidar", sc.lidar), ("radar", sc.radar)):
        secs.append((name, [(f.name, _fmt(getattr(cfg, f.name))) for f in fields(cfg)]))
    if sc.phases:
        secs.append(("phases", [(n, f"{_fmt(a)} {_fmt(b)}") for n, a, b in sc.phases]))
    return dump(secs)


def save(sc: Scenario, path):
    Path(path).write_text(dumps(sc))
