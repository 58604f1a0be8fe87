"""Zigzag sweep with and without centroid regulation; prints the metric deltas."""

import argparse
from pathlib import Path

from saklqr.harness import experiments as ex
from saklqr.harness.config import ExperimentConfig, load_config


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--config", type=Path)
    ap.add_argument("--out", type=Path, default=Path("runs/centroid"))
    args = ap.parse_args()
    cfg = load_config(args.config) if args.config else ExperimentConfig()

    runs = ex.run_centroid_ablation(cfg, args.out).runs
    off, on = runs["regulator_off"], runs["regulator_on"]
    for key in off:
        print(f"{key:24s} off={off[key]:9.3f} on={on[key]:9.3f}")
    drop = 1 - on["mean_centroid_error_cm"] / off["mean_centroid_error_cm"]
    print(f"centroid error reduction: {100 * drop:.1f}%")


if __name__ == "__main__":
    main()
