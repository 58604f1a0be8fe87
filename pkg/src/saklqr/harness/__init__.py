"""Reference trajectories, experiment runners, config and CSV I/O, CLI."""

from saklqr.harness.config import ConfigError, ExperimentConfig, load_config
from saklqr.harness.experiments import (
    MetricsReport,
    run_centroid_ablation,
    run_observable_comparison,
    run_tracking_experiment,
)
from saklqr.harness.trajectories import ReferenceTrajectory, reference_at, zigzag_path

__all__ = [
    "ConfigError", "ExperimentConfig", "load_config", "MetricsReport",
    "run_centroid_ablation", "run_observable_comparison", "run_tracking_experiment",
    "ReferenceTrajectory", "reference_at", "zigzag_path",
]
