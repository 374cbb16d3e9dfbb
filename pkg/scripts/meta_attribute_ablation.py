#!/usr/bin/env python3
"""Compare meta-attributes used to pick the pruning criterion at each step.

For every attribute, runs the synthetic experiment over a few seeds and prints
mean final accuracy plus which criteria each run ended up selecting.

Usage: python3 scripts/meta_attribute_ablation.py [--epochs N] [--seeds N]
"""

import argparse

import numpy as np

from prunelab.experiment import ExperimentConfig, run_experiment
from prunelab.meta import META_ATTRIBUTES


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--epochs", type=int, default=60)
    ap.add_argument("--seeds", type=int, default=3)
    ap.add_argument("--rate", type=float, default=0.4)
    ap.add_argument("--interval", type=int, default=2)
    args = ap.parse_args()

    print("attribute   mean_top1  criteria_selected")
    for attribute in META_ATTRIBUTES:
        accs = []
        selected: set[str] = set()
        for seed in range(args.seeds):
            cfg = ExperimentConfig(
                seed=seed,
                epochs=args.epochs,
                interval=args.interval,
                prune_rate=args.rate,
                meta_attribute=attribute,
            )
            res = run_experiment(cfg)
            accs.append(res["reports"][-1].eval_top1)
            selected |= {r.selected for r in res["records"]}
        print(f"{attribute:11s} {np.mean(accs):9.4f}  {sorted(selected)}")


if __name__ == "__main__":
    main()
