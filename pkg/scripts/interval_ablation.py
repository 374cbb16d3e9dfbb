#!/usr/bin/env python3
"""Ablate the pruning interval: how often the criterion is re-selected and applied.

Runs the synthetic experiment at several intervals and prints mean final accuracy
per interval over a few seeds.

Usage: python3 scripts/interval_ablation.py [--epochs N] [--seeds N]
"""

import argparse

import numpy as np

from prunelab.experiment import ExperimentConfig, run_experiment


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--epochs", type=int, default=30)
    ap.add_argument("--seeds", type=int, default=3)
    ap.add_argument("--rate", type=float, default=0.4)
    ap.add_argument("--intervals", type=int, nargs="+", default=[1, 2, 5, 10])
    args = ap.parse_args()

    print("interval  mean_top1  per_seed")
    for interval in args.intervals:
        accs = []
        for seed in range(args.seeds):
            cfg = ExperimentConfig(
                seed=seed,
                epochs=args.epochs,
                interval=interval,
                prune_rate=args.rate,
            )
            res = run_experiment(cfg)
            accs.append(res["reports"][-1].eval_top1)
        print(f"{interval:8d}  {np.mean(accs):9.4f}  {np.round(accs, 4).tolist()}")


if __name__ == "__main__":
    main()
