"""Rank observable dictionaries by held-out force prediction, optionally over several seeds."""

import argparse
from collections import defaultdict
from pathlib import Path

import numpy as np

from saklqr.harness import experiments as ex
from saklqr.harness.config import ExperimentConfig, load_config


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--config", type=Path)
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    ap.add_argument("--out", type=Path, default=Path("runs/observables"))
    args = ap.parse_args()
    base = load_config(args.config) if args.config else ExperimentConfig()

    r2 = defaultdict(list)
    for seed in args.seeds:
        ranked = ex.run_observable_comparison(base.with_seed(seed), args.out / f"seed{seed}")
        print(f"seed {seed}: " + "  ".join(f"{r['dictionary']}={r['r2']:.4f}" for r in ranked))
        for r in ranked:
            r2[r["dictionary"]].append(r["r2"])
    print("mean R^2:")
    for name, vals in sorted(r2.items(), key=lambda kv: -np.nanmean(kv[1])):
        print(f"  {name:9s} {np.nanmean(vals):.4f}  (min {np.nanmin(vals):.4f})")


if __name__ == "__main__":
    main()
