"""Corridor static/dynamic separation, lidar+radar against lidar only.

    python scripts/run_roc.py --seeds 0 1 2 --out roc_out
"""

import argparse
from pathlib import Path

import numpy as np

from dyngrid.core import FilterParams
from dyngrid.evaluation import roc_from_scores, roc_scores, write_roc_csv
from dyngrid.experiment import run_scenario
from dyngrid.simulator import follow_scenario


def curve(seed, radar, nu, nu_b):
    dyn, sta = [], []

    def collect(k, filt, meas, truth):
        d, s = roc_scores(filt.grid, truth.labels)
        dyn.append(d)
        sta.append(s)

    run_scenario(follow_scenario(seed=seed), FilterParams(p_b=0.02, nu=nu, nu_b=nu_b, seed=seed),
                 radar=radar, on_step=collect)
    return roc_from_scores(np.concatenate(dyn), np.concatenate(sta))


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    ap.add_argument("--nu", type=int, default=200_000)
    ap.add_argument("--nu-b", type=int, default=20_000)
    ap.add_argument("--out", type=Path)
    args = ap.parse_args()

    print(f"{'seed':>4} {'auc radar':>10} {'auc lidar':>10} {'tpr@5% radar':>13} {'tpr@5% lidar':>13}")
    for seed in args.seeds:
        r = curve(seed, True, args.nu, args.nu_b)
        l = curve(seed, False, args.nu, args.nu_b)
        print(f"{seed:4d} {r.auc:10.5f} {l.auc:10.5f} {r.best_tpr_at(0.05):13.3f} {l.best_tpr_at(0.05):13.3f}")
        if args.out:
            args.out.mkdir(parents=True, exist_ok=True)
            write_roc_csv(args.out / f"roc_radar_seed{seed}.csv", r, seed)
            write_roc_csv(args.out / f"roc_lidar_seed{seed}.csv", l, seed)


if __name__ == "__main__":
    main()
