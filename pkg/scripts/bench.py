"""Step time against particle count; same measurement as ``dyngrid bench``.

    python scripts/bench.py 250000 500000 1000000 2000000
"""

import argparse

from dyngrid.evaluation import bench_recursion, machine_descriptor


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("counts", type=int, nargs="*", default=[250_000, 500_000, 1_000_000])
    ap.add_argument("--cells", type=int, default=256)
    ap.add_argument("--reps", type=int, default=5)
    ap.add_argument("--threads", type=int, default=1)
    args = ap.parse_args()

    print(machine_descriptor())
    prev = None
    for row in bench_recursion(sorted(args.counts), args.cells, args.reps, args.threads):
        ratio = f"{row.step_ms / prev:5.2f}" if prev else "    -"
        print(f"{row.nu:>9d} {row.step_ms:9.1f} ms  sort {row.sort_assign_ms:7.1f} ms  ratio {ratio}")
        prev = row.step_ms


if __name__ == "__main__":
    main()
