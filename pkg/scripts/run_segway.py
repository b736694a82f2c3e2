"""Segway velocity experiment: cruise-phase bias, hit rate and NEES per birth probability.

    python scripts/run_segway.py --p-b 0.005 0.02 0.1 --seeds 0 --out segway_out
"""

import argparse
import math
from pathlib import Path

import numpy as np

from dyngrid.core import FilterParams
from dyngrid.evaluation import CHI2_95_1DOF, write_nees_csv, write_velocity_csv
from dyngrid.experiment import run_scenario
from dyngrid.simulator import segway_scenario


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--p-b", type=float, nargs="+", default=[0.005, 0.02, 0.1])
    ap.add_argument("--seeds", type=int, nargs="+", default=[0])
    ap.add_argument("--nu", type=int, default=200_000)
    ap.add_argument("--nu-b", type=int, default=20_000)
    ap.add_argument("--lidar-only", action="store_true")
    ap.add_argument("--settle", type=float, default=1.0, help="seconds skipped at the start of cruise")
    ap.add_argument("--out", type=Path)
    args = ap.parse_args()

    print(f"{'p_B':>7} {'seed':>4} {'bias':>8} {'within10%':>9} {'nees_ok':>8} {'rms':>6}")
    for p_b in args.p_b:
        for seed in args.seeds:
            params = FilterParams(p_b=p_b, nu=args.nu, nu_b=args.nu_b, seed=seed)
            res = run_scenario(segway_scenario(seed=seed), params, radar=not args.lidar_only)
            recs = res.window("cruise", args.settle)
            est = np.array([r.stats.mean_vx if r.stats else math.nan for r in recs])
            truth = np.array([r.truth.cluster_vx for r in recs])
            nees = np.array([r.stats.nees if r.stats else math.inf for r in recs])
            rms = math.sqrt(np.nanmean(res.velocity_errors() ** 2))
            print(f"{p_b:7.3f} {seed:4d} {np.nanmean(est - truth):+8.4f} "
                  f"{np.mean(np.abs(est - truth) <= 0.1 * np.abs(truth)):9.2f} "
                  f"{np.mean(nees <= CHI2_95_1DOF):8.2f} {rms:6.3f}")
            if args.out:
                args.out.mkdir(parents=True, exist_ok=True)
                tag = f"pb{p_b:g}_seed{seed}"
                write_velocity_csv(args.out / f"velocity_{tag}.csv",
                                   [(r.step, r.t, r.truth.cluster_vx, *(
                                       (r.stats.mean_vx, r.stats.var_vx, r.stats.cell_count) if r.stats
                                       else (math.nan, math.nan, 0))) for r in res.records], seed)
                write_nees_csv(args.out / f"nees_{tag}.csv",
                               [(r.step, r.t, r.stats.nees if r.stats else math.nan,
                                 int(bool(r.stats) and r.stats.nees <= CHI2_95_1DOF)) for r in res.records], seed)


if __name__ == "__main__":
    main()
