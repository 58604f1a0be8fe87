"""Force-distribution centroid tracking and fuzzy-entropy driven correction."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

GRID_DIM = 16


class NoContactError(ValueError):
    pass


@dataclass(frozen=True)
class ForceGrid:
    """16x16 non-negative cell forces, ``cells[i, j]`` at pad-x index i, pad-y index j."""

    cells: np.ndarray
    pitch: float = 0.1 / GRID_DIM
    origin: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        cells = np.asarray(self.cells, dtype=float)
        if cells.shape != (GRID_DIM, GRID_DIM):
            raise ValueError(f"force grid must be {GRID_DIM}x{GRID_DIM}, got {cells.shape}")
        if np.any(cells < 0) or not np.all(np.isfinite(cells)):
            raise ValueError("force grid cells must be finite and non-negative")
        object.__setattr__(self, "cells", cells)

    @property
    def total(self) -> float:
        return float(self.cells.sum())


@dataclass(frozen=True)
class CorrectionCommand:
    roll_adjust: float = 0.0
    force_scale: float = 1.0
    correction_freq: float = 10.0
    smooth_trajectory: bool = False
    fault: bool = False

    def __post_init__(self):
        if not 0.5 <= self.force_scale <= 1.5:
            raise ValueError(f"force_scale must lie in [0.5, 1.5], got {self.force_scale}")


@dataclass(frozen=True)
class CentroidMonitor:
    target: tuple[float, float] = (7.5, 7.5)
    d_history: tuple[float, ...] = ()
    m: int = 2
    r_factor: float = 0.2
    r_floor: float = 1e-3
    n_window: int = 50
    d_max: float = 1.0
    fuzzyen_max: float = 0.7
    correction_rate: float = 10.0
    max_correction_rate: float = 40.0
    correction_freq: float = 10.0
    roll_gain: float = 0.05
    roll_limit: float = 0.15
    force_gain: float = 0.05
    pitch: float = 0.1 / GRID_DIM
    last_entropy: float = 0.0

    def __post_init__(self):
        if self.m < 1 or self.r_factor <= 0 or self.r_floor <= 0:
            raise ValueError("need m >= 1 and positive similarity tolerance")
        if self.n_window <= self.m + 1:
            raise ValueError("n_window must exceed m + 1")

    def tolerance(self, series) -> float:
        """Similarity threshold tied to the signal scale."""
        return max(self.r_factor * float(np.std(series)), self.r_floor)


def compute_centroid(grid: ForceGrid) -> tuple[float, float]:
    total = grid.total
    if not total > 0.0:
        raise NoContactError("no contact: force grid is all zero")
    idx = np.arange(grid.cells.shape[0], dtype=float)
    cx = float(idx @ grid.cells.sum(axis=1)) / total
    cy = float(idx @ grid.cells.sum(axis=0)) / total
    return cx, cy


def centroid_error(c, target, pitch: float = 0.1 / GRID_DIM) -> float:
    """Euclidean centroid offset converted from cells to centimeters."""
    dx = float(c[0]) - float(target[0])
    dy = float(c[1]) - float(target[1])
    return float(np.hypot(dx, dy)) * pitch * 100.0


def fuzzy_entropy(series, m: int, r: float) -> float:
    """Finite-sample fuzzy entropy of a scalar series.

    Uses the N - m delay vectors of length m, exponential similarity of their
    Chebyshev distances, and the mean over ordered pairs i != j.
    """
    x = np.asarray(series, dtype=float).ravel()
    n = x.size
    if n <= m + 1:
        raise ValueError(f"series of length {n} too short for m={m}")
    if not r > 0:
        raise ValueError("r must be positive")
    count = n - m
    emb = np.lib.stride_tricks.sliding_window_view(x, m)[:count]
    dist = np.abs(emb[:, None, :] - emb[None, :, :]).max(axis=2)
    sim = np.exp(-dist / r)
    off = sim.sum() - np.trace(sim)
    mean_sim = off / (count * (count - 1))
    if mean_sim <= 0.0:
        return float("inf")  # every pattern pair dissimilar beyond float range
    return float(max(-np.log(mean_sim), 0.0))


def regulate(monitor: CentroidMonitor, grid: ForceGrid,
             target: tuple[float, float] | None = None):
    """One monitoring update. Returns ``(command, monitor')``."""
    if target is not None:
        monitor = replace(monitor, target=(float(target[0]), float(target[1])))
    try:
        c = compute_centroid(grid)
    except NoContactError:
        cmd = CorrectionCommand(correction_freq=monitor.correction_freq, fault=True)
        return cmd, monitor

    d = centroid_error(c, monitor.target, monitor.pitch)
    history = (monitor.d_history + (d,))[-monitor.n_window:]
    entropy = 0.0
    if len(history) > monitor.m + 1:
        entropy = fuzzy_entropy(history, monitor.m, monitor.tolerance(history))

    roll_adjust = 0.0
    force_scale = 1.0
    if d > monitor.d_max:
        offset_x_cm = (c[0] - monitor.target[0]) * monitor.pitch * 100.0
        roll_adjust = float(np.clip(-monitor.roll_gain * offset_x_cm,
                                    -monitor.roll_limit, monitor.roll_limit))
        force_scale = float(np.clip(1.0 - monitor.force_gain * (d - monitor.d_max), 0.5, 1.5))

    smooth = entropy > monitor.fuzzyen_max
    freq = (min(2.0 * monitor.correction_freq, monitor.max_correction_rate)
            if smooth else monitor.correction_rate)
    cmd = CorrectionCommand(roll_adjust=roll_adjust, force_scale=force_scale,
                            correction_freq=freq, smooth_trajectory=smooth)
    return cmd, replace(monitor, d_history=history, correction_freq=freq, last_entropy=entropy)


def coverage_percentage(accumulated: ForceGrid, contact_threshold: float) -> float:
    """Share of cells whose peak recorded force reached the threshold, in percent."""
    if not contact_threshold > 0:
        raise ValueError("contact_threshold must be positive")
    cells = accumulated.cells
    return 100.0 * float(np.count_nonzero(cells >= contact_threshold)) / cells.size
