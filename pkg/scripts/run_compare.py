"""Track all reference cases with SA-KLQR, SMC and PID and print an RMSE table."""

import argparse
from pathlib import Path

from saklqr.harness import experiments as ex
from saklqr.harness.config import ExperimentConfig, load_config


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--config", type=Path)
    ap.add_argument("--seeds", type=int, nargs="+", default=[0])
    ap.add_argument("--out", type=Path, default=Path("runs/compare"))
    args = ap.parse_args()
    base = load_config(args.config) if args.config else ExperimentConfig()

    for seed in args.seeds:
        cfg = base.with_seed(seed)
        report = ex.run_tracking_experiment(cfg, args.out / f"seed{seed}")
        cases = sorted({k.split("/")[0] for k in report.tracking})
        print(f"seed {seed}")
        print(f"  {'case':16s} " + " ".join(f"{c:>8s}" for c in ex.CONTROLLERS))
        for case in cases:
            cells = []
            for c in ex.CONTROLLERS:
                m = report.tracking.get(f"{case}/{c}")
                cells.append("       -" if m is None else f"{m['rmse']:8.4f}")
            print(f"  {case:16s} " + " ".join(cells))
        for flag in report.flags:
            print("  !", flag)


if __name__ == "__main__":
    main()
