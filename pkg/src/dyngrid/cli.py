"""Command line: ``run``, ``eval``, ``bench`` and ``export``.

Exit codes: 0 success, 1 runtime failure, 2 usage or input errors
(missing files, malformed configuration).
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import math
import sys
import time
from pathlib import Path
from types import SimpleNamespace

import numpy as np

from . import __version__
from . import io as dio
from .config import RunManifest, apply_env, load_params
from .core.state import FilterParams
from .evaluation import (CHI2_95_1DOF, bench_recursion, cluster_stats, machine_descriptor, roc,
                         write_bench_csv, write_nees_csv, write_roc_csv, write_velocity_csv)
from .experiment import initial_geometry, run_scenario
from .filter.snapshot import FIELDS, export_csv, export_pgm, parse_snapshot, read_snapshot, snapshot_bytes
from .keyvalue import ConfigError, parse
from .simulator import scenario_file
from .simulator.sensors import GT_COLUMNS, ground_truth_rows

log = logging.getLogger("dyngrid")

SNAPSHOT_DIR = "snapshots"
SUMMARY = "summary.jsonl"
MANIFEST = "manifest.cfg"
GROUND_TRUTH = "ground_truth.csv"
LABELS = "labels.bin"


class _JsonFormatter(logging.Formatter):
    def format(self, record):
        out = {"level": record.levelname.lower(), "msg": record.getMessage()}
        out.update(getattr(record, "fields", {}))
        return json.dumps(out, sort_keys=True)


def _setup_logging(verbose: bool):
    h = logging.StreamHandler(sys.stderr)
    h.setFormatter(_JsonFormatter())
    log.handlers[:] = [h]
    log.setLevel(logging.DEBUG if verbose else logging.INFO)
    log.propagate = False


def _info(msg, **fields):
    log.info(msg, extra={"fields": fields})


def snapshot_name(step: int) -> str:
    return f"step_{step:05d}.dgrd"


# ---------------------------------------------------------------------------
# labels file: one text header line, "<cells_per_side> <steps>", then int8 labels


def write_labels(path, labels: list[np.ndarray], cells_per_side: int, seed, scenario_hash):
    head = f"{dio.header_line(seed, scenario_hash)}\n{cells_per_side} {len(labels)}\n"
    body = np.stack(labels).astype(np.int8).tobytes() if labels else b""
    Path(path).write_bytes(head.encode() + body)


def read_labels(path) -> np.ndarray:
    data = Path(path).read_bytes()
    first = data.index(b"\n")
    second = data.index(b"\n", first + 1)
    n, steps = (int(v) for v in data[first + 1:second].split())
    return np.frombuffer(data[second + 1:], dtype=np.int8).reshape(steps, n * n)


# ---------------------------------------------------------------------------
# run


def build_manifest(args) -> RunManifest:
    params = FilterParams()
    if args.params:
        if not Path(args.params).is_file():
            raise FileNotFoundError(f"params file not found: {args.params}")
        params = load_params(args.params)
    params = apply_env(params)
    seed = params.seed if args.seed is None else args.seed
    params = params.with_(seed=seed)
    m = RunManifest(Path(args.scenario), params, Path(args.out), seed, args.strict_determinism,
                    args.threads, args.steps, not args.lidar_only, not args.no_snapshots, args.csv, args.pgm)
    m.check()
    return m


def cmd_run(m: RunManifest) -> int:
    text = Path(m.scenario_path).read_text()
    sc = scenario_file.loads(text, str(m.scenario_path))
    sc = dataclasses.replace(sc, seed=m.seed)
    sc_hash = dio.text_hash(text)
    out = Path(m.out_dir)
    snap_dir = out / SNAPSHOT_DIR
    snap_dir.mkdir(parents=True, exist_ok=True)
    (out / MANIFEST).write_text(m.to_text(sc_hash))
    head = dio.header_line(m.seed, sc_hash)
    labels, gt_rows = [], []
    summary = open(out / SUMMARY, "w")
    summary.write(json.dumps({"header": head[2:], "scenario": sc.name, "steps": sc.n_steps}) + "\n")
    t_start = time.perf_counter()

    def on_step(k, filt, meas, truth):
        g = filt.grid
        name = snapshot_name(k)
        data = snapshot_bytes(g)
        if m.snapshots:
            (snap_dir / name).write_bytes(data)
        if m.csv or m.pgm:
            snap = parse_snapshot(data)
            if m.csv:
                export_csv(snap, snap_dir / name.replace(".dgrd", ".csv"), m.seed, sc_hash)
            if m.pgm:
                export_pgm(snap, snap_dir / name.replace(".dgrd", ".pgm"), head)
        labels.append(truth.labels)
        gt_rows.extend(ground_truth_rows(truth))
        occ = g.occupancy()
        rec = {"step": k, "t": round(k * sc.dt, 9), "total_mass": float(g.m_occ_up.sum()),
               "particles": filt.particles.count, "occupied_cells": int((occ > 0.6).sum()),
               "particle_cells": int((g.start_idx >= 0).sum()), "valid_moment_cells": int(g.moments_valid.sum()),
               "timings_ms": {key: round(v * 1e3, 3) for key, v in filt.last_timings.items()},
               "diagnostics": g.diagnostics}
        summary.write(json.dumps(rec, sort_keys=True) + "\n")
        summary.flush()

    try:
        res = run_scenario(sc, m.params, radar=m.radar, strict=m.strict, threads=m.threads, steps=m.steps,
                           on_step=on_step)
    finally:
        summary.close()
    dio.write_csv(out / GROUND_TRUTH, GT_COLUMNS, gt_rows, m.seed, sc_hash)
    write_labels(out / LABELS, labels, initial_geometry(sc).cells_per_side, m.seed, sc_hash)
    _info("run finished", steps=len(res.records), seconds=round(time.perf_counter() - t_start, 3),
          out=str(out))
    return 0


# ---------------------------------------------------------------------------
# eval


def _run_info(run_dir: Path):
    man = run_dir / MANIFEST
    if not man.is_file():
        raise FileNotFoundError(f"not a run directory (no {MANIFEST}): {run_dir}")
    secs = {s.name: s for s in parse(man.read_text(), str(man))}
    run = {k: v for k, (v, _) in secs["run"].values.items()}
    return int(run["seed"]), run["scenario_hash"]


def _snapshot_view(snap):
    fields = {name: snap.field(name) for name in FIELDS if name != "moments_valid"}
    return SimpleNamespace(moments_valid=snap.valid(), **fields)


def _truth_vx(run_dir: Path):
    path = run_dir / GROUND_TRUTH
    if not path.is_file():
        raise FileNotFoundError(f"ground truth missing: {path}")
    _, cols, rows = dio.read_csv(path)
    s, t, o, vx = cols.index("step"), cols.index("t"), cols.index("object"), cols.index("vx")
    out = {}
    for r in rows:
        if int(r[o]) == 0:
            out[int(r[s])] = (float(r[t]), float(r[vx]))
    return out


def cmd_eval(run_dir, which: str) -> list[Path]:
    run_dir = Path(run_dir)
    seed, sc_hash = _run_info(run_dir)
    truth = _truth_vx(run_dir)
    label_path = run_dir / LABELS
    if not label_path.is_file():
        raise FileNotFoundError(f"ground truth labels missing: {label_path}")
    labels = read_labels(label_path)
    snaps = sorted((run_dir / SNAPSHOT_DIR).glob("step_*.dgrd"))
    if not snaps:
        raise FileNotFoundError(f"no snapshots in {run_dir / SNAPSHOT_DIR}")
    from .simulator.sensors import DYNAMIC

    written = []
    if which in ("velocity", "nees"):
        vel, nee = [], []
        for path in snaps:
            k = int(path.stem.split("_")[1])
            t, tvx = truth[k]
            view = _snapshot_view(read_snapshot(path))
            st = cluster_stats(view, labels[k] == DYNAMIC, tvx)
            if st is None:
                vel.append((k, t, tvx, math.nan, math.nan, 0))
                nee.append((k, t, math.nan, 0))
            else:
                vel.append((k, t, tvx, st.mean_vx, st.var_vx, st.cell_count))
                nee.append((k, t, st.nees, st.nees <= CHI2_95_1DOF))
        if which == "velocity":
            p = run_dir / "velocity.csv"
            write_velocity_csv(p, vel, seed, sc_hash)
        else:
            p = run_dir / "nees.csv"
            write_nees_csv(p, nee, seed, sc_hash)
        written.append(p)
    elif which == "roc":
        views = [_snapshot_view(read_snapshot(p_)) for p_ in snaps]
        lab = [labels[int(p_.stem.split("_")[1])] for p_ in snaps]
        curve = roc(views, lab)
        p = run_dir / "roc.csv"
        write_roc_csv(p, curve, seed, sc_hash)
        _info("roc", auc=curve.auc, tpr_at_5pct_fpr=curve.best_tpr_at(0.05))
        written.append(p)
    else:
        raise ValueError(f"unknown evaluation {which!r}")
    return written


# ---------------------------------------------------------------------------
# bench / export


def cmd_bench(counts, cells: int, reps: int, threads: int, out: Path | None, seed: int = 0):
    rows = bench_recursion(counts, cells, reps, threads, seed=seed)
    desc = machine_descriptor()
    print(f"# {desc} threads={threads} grid={cells}x{cells} reps={reps}")
    print(f"{'nu':>10} {'step_ms':>12} {'sort_assign_ms':>15}")
    for r in rows:
        print(f"{r.nu:>10d} {r.step_ms:>12.2f} {r.sort_assign_ms:>15.2f}")
    if out is not None:
        out = Path(out)
        out.mkdir(parents=True, exist_ok=True)
        write_bench_csv(out / "bench.csv", rows, seed)
        (out / "bench_machine.txt").write_text(f"{dio.header_line(seed)}\n{desc}\nthreads={threads}\n")
    return rows


def cmd_export(snapshot, fmt: str, out) -> Path:
    snap = read_snapshot(snapshot)
    out = Path(out) if out else Path(snapshot).with_suffix("." + fmt)
    if fmt == "pgm":
        export_pgm(snap, out, dio.header_line())
    elif fmt == "csv":
        export_csv(snap, out)
    else:
        raise ValueError(f"unknown export format {fmt!r}")
    return out


# ---------------------------------------------------------------------------


def _counts(raw: str):
    return [int(float(v)) for v in raw.split(",") if v.strip()]


def make_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="dyngrid", description="Dynamic occupancy grid particle filter")
    ap.add_argument("--version", action="version", version=f"dyngrid {__version__}")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="simulate a scenario and filter it")
    r.add_argument("--scenario", required=True, help="scenario file")
    r.add_argument("--params", help="filter parameter file ([filter] section)")
    r.add_argument("--seed", type=int, help="seed for simulator and filter (default: params seed)")
    r.add_argument("--out", required=True, help="output directory")
    r.add_argument("--strict-determinism", action="store_true", help="bitwise reproducible scans")
    r.add_argument("--threads", type=int, default=1)
    r.add_argument("--steps", type=int, help="stop after N steps")
    r.add_argument("--lidar-only", action="store_true", help="skip the radar overlay")
    r.add_argument("--no-snapshots", action="store_true")
    r.add_argument("--csv", action="store_true", help="also write a CSV per snapshot")
    r.add_argument("--pgm", action="store_true", help="also write an occupancy PGM per snapshot")

    e = sub.add_parser("eval", help="evaluate a run directory")
    e.add_argument("run_dir")
    e.add_argument("which", choices=["velocity", "nees", "roc"])

    b = sub.add_parser("bench", help="time full recursions for several particle counts")
    b.add_argument("--counts", type=_counts, default=[250_000, 500_000, 1_000_000])
    b.add_argument("--cells", type=int, default=256, help="cells per grid side")
    b.add_argument("--reps", type=int, default=5)
    b.add_argument("--threads", type=int, default=1)
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--out", help="directory for bench.csv")

    x = sub.add_parser("export", help="convert a snapshot to PGM or CSV")
    x.add_argument("snapshot")
    x.add_argument("--format", required=True, choices=["pgm", "csv"])
    x.add_argument("--out", help="output file (default: snapshot path with new suffix)")
    return ap


def main(argv=None) -> int:
    ap = make_parser()
    args = ap.parse_args(argv)
    _setup_logging(args.verbose)
    try:
        if args.command == "run":
            return cmd_run(build_manifest(args))
        if args.command == "eval":
            for p in cmd_eval(args.run_dir, args.which):
                _info("wrote", path=str(p))
            return 0
        if args.command == "bench":
            cmd_bench(args.counts, args.cells, args.reps, args.threads, args.out, args.seed)
            return 0
        if args.command == "export":
            _info("wrote", path=str(cmd_export(args.snapshot, args.format, args.out)))
            return 0
    except (FileNotFoundError, ConfigError) as exc:
        log.error(str(exc), extra={"fields": {"kind": type(exc).__name__}})
        return 2
    except Exception as exc:  # any stage failure
        log.error(str(exc), extra={"fields": {"kind": type(exc).__name__}})
        if args.verbose:
            raise
        return 1
    return 2


if __name__ == "__main__":
    sys.exit(main())
