"""Measured vs predicted alignment-op savings of constrained discovery.

Sweeps the pruning ratio and window half-width on a toy set, with a fixed
candidate length so the full-scan cost per evaluation is exactly L - l + 1.

    python3 scripts/complexity_bench.py --n 100 --len 128 --fixed-len 16 --window 0 1 2
"""

import argparse
import sys

from shapecond.bench import bench_csv, bench_sweep
from shapecond.shapelets import DiscoveryConfig
from shapecond.toy import gen_toy


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--n", type=int, default=100)
    ap.add_argument("--len", dest="length", type=int, default=128)
    ap.add_argument("--fixed-len", type=int, default=16)
    ap.add_argument("--prune", type=float, nargs="+", default=[0.0, 0.5, 0.7, 0.9])
    ap.add_argument("--window", type=int, nargs="+", default=[0, 1, 2])
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    d, _ = gen_toy(n=args.n, length=args.length, seed=args.seed)
    results = []
    for w in args.window:
        cfg = DiscoveryConfig(window=w, l_min=args.fixed_len, l_max=args.fixed_len, seed=args.seed)
        results += bench_sweep(d, cfg, args.prune)
    sys.stdout.write(bench_csv(results, comments=[f"window sweep {args.window}"]))


if __name__ == "__main__":
    main()
