"""Downstream probe accuracy of the discovered pool as the pruning ratio grows.

    python3 scripts/pruning_sweep.py --prune 0 0.3 0.5 0.7 0.9 > pruning.csv
"""

import argparse
import csv
import sys
from dataclasses import replace

from shapecond.experiments import ToyConfig, pruning_experiment, toy_split
from shapecond.shapelets import DiscoveryConfig, discover


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--prune", type=float, nargs="+", default=[0.0, 0.3, 0.5, 0.7, 0.8, 0.9])
    ap.add_argument("--noise", type=float, default=ToyConfig.noise_sigma)
    ap.add_argument("--k", type=int, default=20)
    ap.add_argument("--window", type=int, default=1)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    train, test = toy_split(replace(ToyConfig(), noise_sigma=args.noise))
    base = DiscoveryConfig(k=args.k, window=args.window, seed=args.seed)
    acc = pruning_experiment(train, test, args.prune, base)
    out = csv.writer(sys.stdout, lineterminator="\n")
    out.writerow(["p", "alignment_ops", "probe_accuracy"])
    for p in args.prune:
        _, counter = discover(train, replace(base, prune=p))
        out.writerow([p, counter.alignment_ops, f"{acc[p]:.4f}"])


if __name__ == "__main__":
    main()
