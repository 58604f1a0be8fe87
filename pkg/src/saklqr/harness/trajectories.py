"""Force reference waveforms and the boustrophedon sweep over the swab area."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

KINDS = ("Sine", "Triangle")


@dataclass(frozen=True)
class ReferenceTrajectory:
    kind: str = "Sine"
    f0: float = 5.0
    f_amp: float = 10.0
    omega: float = 0.5
    cycles: float = 2.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown reference kind {self.kind!r}; expected one of {KINDS}")
        if self.f0 < 0 or self.f_amp < 0:
            raise ValueError("f0 and f_amp must be non-negative")
        if not (self.omega > 0 and self.cycles > 0):
            raise ValueError("omega and cycles must be positive")

    @property
    def period(self) -> float:
        return 1.0 / self.omega

    @property
    def duration(self) -> float:
        return self.cycles / self.omega


def reference_derivs(traj: ReferenceTrajectory, t: float) -> tuple[float, float, float]:
    """Reference force with its first and second time derivatives."""
    if t < 0:
        raise ValueError("t must be non-negative")
    w = traj.omega
    if traj.kind == "Sine":
        arg = 2.0 * np.pi * w * t
        half = 0.5 * traj.f_amp
        return (traj.f0 + half * (np.sin(arg) + 1.0),
                half * 2.0 * np.pi * w * np.cos(arg),
                -half * (2.0 * np.pi * w) ** 2 * np.sin(arg))
    # symmetric triangle, minimum at t = 0
    phase = (t * w) % 1.0
    rising = phase < 0.5
    tri = 2.0 * phase if rising else 2.0 - 2.0 * phase
    slope = 2.0 * traj.f_amp * w
    return traj.f0 + traj.f_amp * tri, (slope if rising else -slope), 0.0


def reference_at(traj: ReferenceTrajectory, t: float) -> float:
    return reference_derivs(traj, t)[0]


@dataclass(frozen=True)
class SweepPath:
    """Timed polyline in pad coordinates, centimeters from the pad corner."""

    waypoints: np.ndarray
    times: np.ndarray
    spacing: float

    @property
    def length(self) -> float:
        return float(np.linalg.norm(np.diff(self.waypoints, axis=0), axis=1).sum())

    @property
    def duration(self) -> float:
        return float(self.times[-1])

    def position(self, t: float) -> tuple[np.ndarray, np.ndarray]:
        """Position (cm) and velocity (cm/s) at time ``t``; clamps past the end."""
        t = float(np.clip(t, 0.0, self.duration))
        seg = int(np.clip(np.searchsorted(self.times, t, side="right") - 1, 0, len(self.times) - 2))
        t0, t1 = self.times[seg], self.times[seg + 1]
        p0, p1 = self.waypoints[seg], self.waypoints[seg + 1]
        frac = (t - t0) / (t1 - t0)
        vel = (p1 - p0) / (t1 - t0)
        if t >= self.duration:
            vel = np.zeros(2)
        return p0 + frac * (p1 - p0), vel


def zigzag_path(area_cm: float = 10.0, n_passes: int = 4, speed: float = 0.02) -> SweepPath:
    """Back-and-forth passes along x, evenly spaced in y; ``speed`` in m/s."""
    if n_passes < 2:
        raise ValueError("n_passes must be at least 2")
    if not (area_cm > 0 and speed > 0):
        raise ValueError("area and speed must be positive")
    spacing = area_cm / n_passes
    pts = []
    for i in range(n_passes):
        y = (i + 0.5) * spacing
        xs = (0.0, area_cm) if i % 2 == 0 else (area_cm, 0.0)
        pts += [(xs[0], y), (xs[1], y)]
    wp = np.array(pts)
    seg = np.linalg.norm(np.diff(wp, axis=0), axis=1)
    times = np.concatenate([[0.0], np.cumsum(seg)]) / (100.0 * speed)
    return SweepPath(wp, times, spacing)
