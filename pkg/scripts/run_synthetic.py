#!/usr/bin/env python3
"""Train and prune on the synthetic stripes dataset, writing a full report bundle.

Usage: python3 scripts/run_synthetic.py [--seed N] [--epochs N] [--out DIR] ...
"""

import argparse
from pathlib import Path

from prunelab.experiment import ExperimentConfig, run_experiment


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--epochs", type=int, default=60)
    ap.add_argument("--interval", type=int, default=2)
    ap.add_argument("--rate", type=float, default=0.4)
    ap.add_argument("--attribute", default="top5_loss")
    ap.add_argument("--out", type=Path, default=Path("runs/synthetic"))
    args = ap.parse_args()

    cfg = ExperimentConfig(
        seed=args.seed,
        epochs=args.epochs,
        interval=args.interval,
        prune_rate=args.rate,
        meta_attribute=args.attribute,
    )
    res = run_experiment(cfg, out_dir=args.out)
    final = res["reports"][-1]
    flops = res["flops"]
    print(f"final eval top-1: {final.eval_top1:.4f}  top-5: {final.eval_top5:.4f}")
    print(f"kept filters: {final.kappa}")
    print(
        f"MACs: {flops.baseline_total} -> {flops.pruned_total} "
        f"({100 * (1 - flops.pruned_total / flops.baseline_total):.1f}% reduction)"
    )
    for name, path in res["files"].items():
        print(f"{name}: {path}")


if __name__ == "__main__":
    main()
