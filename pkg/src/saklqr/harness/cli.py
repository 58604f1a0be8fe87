"""Command-line entry point: fit, track, compare, observables, centroid-ablation."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from saklqr.harness import experiments as ex
from saklqr.harness.config import ConfigError, ExperimentConfig, dump_config, load_config

MODEL_FILE = "regions.json"
EXIT_CODES = {"config": 2, "numerical": 3, "io": 4, "internal": 1}


def _fail(category: str, message: str) -> int:
    print(json.dumps({"error": category, "message": message}), file=sys.stderr)
    return EXIT_CODES[category]


def _fitted(cfg: ExperimentConfig, out: Path):
    cached = ex.load_fitted(out / MODEL_FILE, cfg.fingerprint())
    if cached is not None:
        return cached
    fm = ex.fit_models(cfg)
    ex.save_fitted(out / MODEL_FILE, fm, cfg.fingerprint())
    return fm.regions, fm.gains


def _print_tracking(report: ex.MetricsReport) -> None:
    for key, m in report.tracking.items():
        flag = "  ABORTED" if m["aborted"] else ""
        print(f"{key:28s} rmse={m['rmse']:.4f} mae={m['mae']:.4f} max_ae={m['max_ae']:.4f}{flag}")


def cmd_fit(cfg, out, args) -> int:
    fm = ex.fit_models(cfg)
    ex.save_fitted(out / MODEL_FILE, fm, cfg.fingerprint())
    print(f"fitted {len(fm.regions)} regions on {len(fm.dataset)} samples -> {out / MODEL_FILE}")
    return 0


def cmd_track(cfg, out, args) -> int:
    fitted = _fitted(cfg, out) if args.controller == "saklqr" else None
    report = ex.run_tracking_experiment(cfg, out, controllers=(args.controller,), fitted=fitted)
    _print_tracking(report)
    return 0


def cmd_compare(cfg, out, args) -> int:
    controllers = cfg.tracking.controllers
    fitted = _fitted(cfg, out) if "saklqr" in controllers else None
    report = ex.run_tracking_experiment(cfg, out, controllers=controllers, fitted=fitted)
    _print_tracking(report)
    return 0


def cmd_observables(cfg, out, args) -> int:
    for r in ex.run_observable_comparison(cfg, out):
        print(f"{r['rank']}. {r['dictionary']:9s} r2={r['r2']:.4f} rmse={r['rmse']:.4f} "
              f"mae={r['mae']:.4f} {r['status']}")
    return 0


def cmd_centroid(cfg, out, args) -> int:
    report = ex.run_centroid_ablation(cfg, out)
    for label, m in report.runs.items():
        print(label, " ".join(f"{k}={v:.3f}" for k, v in m.items()))
    return 0


COMMANDS = {"fit": cmd_fit, "track": cmd_track, "compare": cmd_compare,
            "observables": cmd_observables, "centroid-ablation": cmd_centroid}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="saklqr", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", type=Path, help="YAML experiment config")
        p.add_argument("--seed", type=int, help="override the config seed")
        p.add_argument("--out", type=Path, help="output directory (default: config output_dir)")
        p.add_argument("--controller", choices=ex.CONTROLLERS, default="saklqr",
                       help="controller for 'track'")
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config) if args.config else ExperimentConfig()
        if args.seed is not None and args.seed < 0:
            raise ConfigError("--seed must be non-negative")
        cfg = cfg.with_seed(args.seed)
    except ConfigError as exc:
        return _fail("config", str(exc))
    except OSError as exc:
        return _fail("io", str(exc))
    out = args.out if args.out is not None else Path(cfg.output_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        dump_config(cfg, out / "config_used.yaml")
        return COMMANDS[args.command](cfg, out, args)
    except OSError as exc:
        return _fail("io", str(exc))
    except (ValueError, ArithmeticError, RuntimeError) as exc:
        return _fail("numerical", f"{type(exc).__name__}: {exc}")


if __name__ == "__main__":
    sys.exit(main())
