"""End-to-end condensation on the planted-motif toy across noise levels.

Prints one JSON line per noise level with full-data, synthesized-set and random-selection
student accuracies (one entry per seed) and the two accuracy ratios.

    python3 scripts/toy_condensation.py --noise 0.5 0.3 0.1 --spc 1
"""

import argparse
import json
import logging
from dataclasses import replace

from shapecond.experiments import ToyConfig, condensation_experiment, prepare
from shapecond.synthesis import SynthConfig


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--noise", type=float, nargs="+", default=[ToyConfig.noise_sigma])
    ap.add_argument("--jitter", type=int, default=ToyConfig.jitter)
    ap.add_argument("--n", type=int, default=ToyConfig.n)
    ap.add_argument("--spc", type=int, default=1)
    ap.add_argument("--iters", type=int, default=2000)
    ap.add_argument("--lr", type=float, default=SynthConfig.lr)
    ap.add_argument("--bn-weight", type=float, default=SynthConfig.bn_weight)
    ap.add_argument("--seeds", type=int, default=3)
    ap.add_argument("-v", "--verbose", action="store_true")
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)

    for noise in args.noise:
        toy = replace(ToyConfig(), noise_sigma=noise, jitter=args.jitter, n=args.n)
        setup = prepare(toy)
        synth = SynthConfig(lr=args.lr, bn_weight=args.bn_weight)
        res = condensation_experiment(setup, args.spc, args.iters, range(args.seeds), synth)
        print(json.dumps({"noise": noise, "jitter": args.jitter, "spc": args.spc, **res.to_dict()}), flush=True)


if __name__ == "__main__":
    main()
