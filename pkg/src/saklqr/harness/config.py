"""Experiment configuration: YAML in, validated frozen dataclasses out."""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from saklqr import plant as pl
from saklqr.koopman import ExcitationSpec

SCHEMA_VERSION = 1


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class DictionaryConfig:
    kind: str = "Combined"
    n_centers: int = 10
    n_freqs: int = 8
    svd_tol: float = 1e-8


@dataclass(frozen=True)
class RegionConfig:
    n_regions: int = 8
    # the roll sweep spans the tracked force band widened by this much, N
    force_margin: float = 2.0


@dataclass(frozen=True)
class LqrConfig:
    q_diag: tuple[float, ...] = (50.0, 1e6, 1e6, 1e6)
    r_diag: tuple[float, ...] = (0.1,) * 6
    ki_scale: float = 100.0
    beta: float = 0.2
    integral_clamp: float = 5.0


@dataclass(frozen=True)
class PidConfig:
    deriv_ratio: float = 10.0
    windup_clamp: float = 5.0
    k_hi: float = 1e6
    iters: int = 30
    step: float = 0.2
    duration: float = 3.0


@dataclass(frozen=True)
class SmcConfig:
    surface_hz: float = 2.0
    reach_factor: float = 1.0
    epsilon: float = 170.0
    boundary_layer: float = 0.5
    hard_sign: bool = False
    deriv_filter_tau: float = 0.01
    windup_clamp: float = 5.0


@dataclass(frozen=True)
class TrackingConfig:
    f0: float = 5.0
    f_amp: float = 10.0
    kinds: tuple[str, ...] = ("Sine", "Triangle")
    frequencies: tuple[float, ...] = (0.5, 2.0)
    cycles: float = 2.0
    dt: float = 0.002
    wetness: float = 0.6
    controllers: tuple[str, ...] = ("saklqr", "smc", "pid")
    divergence_force: float = 200.0


@dataclass(frozen=True)
class CentroidConfig:
    n_passes: int = 4
    speed: float = 0.02
    force: float = 8.0
    wetness: float = 0.6
    dt: float = 0.002
    contact_threshold: float = 0.1
    pivot_gain: float = 25.0
    drag_gain: float = 40.0
    theta_base: float = 0.0
    # sweep servo: lateral and roll position gains (1/s), force-to-height gain (m/s per N)
    track_gain: float = 20.0
    roll_gain: float = 20.0
    height_gain: float = 0.002
    smooth_alpha: float = 0.5
    m: int = 2
    r_factor: float = 0.2
    n_window: int = 50
    d_max: float = 1.0
    fuzzyen_max: float = 0.7
    correction_rate: float = 10.0
    max_correction_rate: float = 40.0


@dataclass(frozen=True)
class ExperimentConfig:
    schema_version: int = SCHEMA_VERSION
    seed: int = 0
    output_dir: str = "runs"
    plant: pl.PlantParams = field(default_factory=pl.PlantParams)
    excitation: ExcitationSpec = field(default_factory=ExcitationSpec)
    dictionary: DictionaryConfig = field(default_factory=DictionaryConfig)
    regions: RegionConfig = field(default_factory=RegionConfig)
    lqr: LqrConfig = field(default_factory=LqrConfig)
    pid: PidConfig = field(default_factory=PidConfig)
    smc: SmcConfig = field(default_factory=SmcConfig)
    tracking: TrackingConfig = field(default_factory=TrackingConfig)
    centroid: CentroidConfig = field(default_factory=CentroidConfig)

    def with_seed(self, seed: int | None) -> "ExperimentConfig":
        return self if seed is None else dataclasses.replace(self, seed=int(seed))

    def seeds(self) -> dict[str, int]:
        """Independent integer streams derived from the base seed."""
        names = ("data", "dictionary", "noise")
        kids = np.random.SeedSequence(self.seed).spawn(len(names))
        return {n: int(k.generate_state(1)[0]) for n, k in zip(names, kids)}

    def fingerprint(self) -> str:
        blob = json.dumps(to_plain(self), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def _default_of(f: dataclasses.Field):
    if f.default is not dataclasses.MISSING:
        return f.default
    if f.default_factory is not dataclasses.MISSING:
        return f.default_factory()
    return dataclasses.MISSING


def _coerce(value, default, where: str):
    if dataclasses.is_dataclass(default):
        if not isinstance(value, dict):
            raise ConfigError(f"{where}: expected a mapping")
        return _build(type(default), value, where)
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{where}: expected true/false")
        return value
    if isinstance(default, (int, float)) and not isinstance(default, bool):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{where}: expected a number")
        if isinstance(default, int) and not float(value).is_integer():
            raise ConfigError(f"{where}: expected an integer")
        return type(default)(value)
    if isinstance(default, tuple):
        if not isinstance(value, (list, tuple)):
            raise ConfigError(f"{where}: expected a list")
        return tuple(tuple(v) if isinstance(v, list) else v for v in value)
    if isinstance(default, np.ndarray):
        return np.asarray(value, dtype=float)
    return value


def _build(cls, data: dict, where: str):
    fields = {f.name: f for f in dataclasses.fields(cls) if f.init}
    unknown = sorted(set(data) - set(fields))
    if unknown:
        raise ConfigError(f"{where}: unknown keys {unknown}")
    kwargs = {}
    for name, value in data.items():
        kwargs[name] = _coerce(value, _default_of(fields[name]), f"{where}.{name}")
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from exc


def config_from_dict(data: dict) -> ExperimentConfig:
    if not isinstance(data, dict):
        raise ConfigError("config root must be a mapping")
    version = data.get("schema_version")
    if version != SCHEMA_VERSION:
        raise ConfigError(f"schema_version must be {SCHEMA_VERSION}, got {version!r}")
    return _build(ExperimentConfig, data, "config")


def load_config(path) -> ExperimentConfig:
    try:
        data = yaml.safe_load(Path(path).read_text())
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: not valid YAML ({exc})") from exc
    return config_from_dict(data)


def to_plain(obj):
    """Config tree as JSON/YAML-friendly builtins."""
    if dataclasses.is_dataclass(obj):
        return {f.name: to_plain(getattr(obj, f.name)) for f in dataclasses.fields(obj) if f.init}
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (list, tuple)):
        return [to_plain(v) for v in obj]
    return obj


def dump_config(cfg: ExperimentConfig, path) -> None:
    Path(path).write_text(yaml.safe_dump(to_plain(cfg), sort_keys=False))
