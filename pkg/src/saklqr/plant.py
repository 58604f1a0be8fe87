"""Surrogate tool/sponge/sensor plant.

State layout used everywhere downstream: ``x = (theta, px, py, pz)`` with the
roll angle in radians and the end-effector position in meters (world frame,
pad center at the origin, contact plane through z = 0 up to a small tilt).
Inputs are six joint torques mapped through a frozen 4x6 effective map.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from saklqr.centroid import ForceGrid

STATE_DIM = 4
INPUT_DIM = 6


def _default_j_eff() -> np.ndarray:
    base = np.array(
        [
            [0.9, 0.3, -0.2, 0.1, 0.5, 0.2],
            [0.2, 1.0, 0.3, -0.4, 0.1, 0.3],
            [-0.3, 0.2, 0.8, 0.5, -0.2, 0.1],
            [0.1, -0.3, 0.2, 0.9, 0.4, -0.5],
        ]
    )
    # roll row in rad/s^2 per unit torque, position rows in m/s^2
    return np.diag([3000.0, 10.0, 10.0, 10.0]) @ base


@dataclass(frozen=True)
class SensorCurve:
    """Embedded FSR seen through the sponge: under-registers below the knee,
    over-registers above it."""

    under_gain: float = 0.7
    over_gain: float = 1.3
    knee_force: float = 10.0
    knee_width: float = 2.5
    adc_scale: float = 40.0
    adc_max: float = 4095.0

    def __post_init__(self):
        if not 0.0 < self.under_gain < 1.0:
            raise ValueError(f"under_gain must lie in (0, 1), got {self.under_gain}")
        if self.over_gain <= 1.0:
            raise ValueError(f"over_gain must exceed 1, got {self.over_gain}")
        if self.knee_width <= 0 or self.adc_scale <= 0 or self.adc_max <= 0:
            raise ValueError("knee_width, adc_scale and adc_max must be positive")

    def gain(self, force):
        z = (np.asarray(force, dtype=float) - self.knee_force) / self.knee_width
        sig = 0.5 * (1.0 + np.tanh(0.5 * z))
        return self.under_gain + (self.over_gain - self.under_gain) * sig


@dataclass(frozen=True)
class PlantParams:
    k_handle: float = 5.0
    k_sponge0: float = 1000.0
    compression_sat: float = 0.012
    wetness_rate: float = 0.02
    wet_soften: float = 0.4
    damping: float = 500.0
    j_eff: np.ndarray = field(default_factory=_default_j_eff)
    sensor: SensorCurve = field(default_factory=SensorCurve)
    noise_std: float = 4.0
    # geometry / inertia not pinned down by the contract
    lever: float = 0.05
    roll_inertia: float = 3e-4
    # force reaching the sensor: sponge relaxation, then sensor filtering
    sponge_tau: float = 0.004
    sensor_tau: float = 0.004
    surface_tilt: tuple[float, float] = (0.0, 0.0)
    # (x, y, height, width) Gaussian surface irregularities, meters
    surface_bumps: tuple[tuple[float, float, float, float], ...] = ()
    # pad footprint
    pad_origin: tuple[float, float] = (-0.05, -0.05)
    pad_size: float = 0.10
    footprint_sigma: float = 1.2
    pivot_gain: float = 0.0
    drag_gain: float = 0.0
    theta_align: float = 0.15

    def __post_init__(self):
        j = np.asarray(self.j_eff, dtype=float)
        object.__setattr__(self, "j_eff", j)
        for name in ("k_handle", "k_sponge0", "compression_sat", "damping", "lever",
                     "roll_inertia", "sponge_tau", "sensor_tau", "footprint_sigma"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be strictly positive")
        if not 0.0 <= self.wet_soften < 1.0:
            raise ValueError("wet_soften must lie in [0, 1)")
        if self.wetness_rate < 0 or self.noise_std < 0:
            raise ValueError("wetness_rate and noise_std must be non-negative")
        if j.shape != (STATE_DIM, INPUT_DIM):
            raise ValueError(f"j_eff must be 4x6, got {j.shape}")
        if np.linalg.matrix_rank(j) < STATE_DIM:
            raise ValueError("j_eff must have full row rank")

    @property
    def transmission(self) -> float:
        """Fraction of roll-induced press depth that survives handle bending."""
        return self.k_handle / (self.k_handle + self.lever**2 * self.k_sponge0)

    @property
    def pitch(self) -> float:
        return self.pad_size / 16

    def plane_height(self, px: float, py: float) -> float:
        h = self.surface_tilt[0] * px + self.surface_tilt[1] * py
        for bx, by, height, width in self.surface_bumps:
            h += height * np.exp(-((px - bx) ** 2 + (py - by) ** 2) / (2.0 * width**2))
        return float(h)


@dataclass(frozen=True)
class PlantState:
    theta: float = 0.0
    pos: np.ndarray = field(default_factory=lambda: np.zeros(3))
    vel: np.ndarray = field(default_factory=lambda: np.zeros(4))
    wetness: float = 0.0
    t: float = 0.0
    relaxed_force: float = 0.0
    sensed_force: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "pos", np.asarray(self.pos, dtype=float).reshape(3))
        object.__setattr__(self, "vel", np.asarray(self.vel, dtype=float).reshape(4))
        object.__setattr__(self, "wetness", float(np.clip(self.wetness, 0.0, 1.0)))

    @property
    def x(self) -> np.ndarray:
        """Controller-visible state (theta, px, py, pz)."""
        return np.concatenate(([self.theta], self.pos))


def penetration(state: PlantState, params: PlantParams) -> float:
    px, py, pz = state.pos
    return (params.transmission * params.lever * state.theta
            + params.plane_height(px, py) - pz)


def contact_force(state: PlantState, params: PlantParams) -> float:
    """Normal force in N: stiffening sponge in series with the bent handle.

    Zero out of contact; in contact, strictly increasing in press depth and
    therefore in theta, scaled by the wetness softening factor.
    """
    depth = penetration(state, params)
    if depth <= 0.0:
        return 0.0
    k_eff = params.k_sponge0 * (1.0 - params.wet_soften * state.wetness)
    sat = params.compression_sat
    return float(k_eff * sat * np.expm1(min(depth / sat, 50.0)))


def contact_torque(force: float, params: PlantParams) -> float:
    """Roll acceleration opposing the press (rad/s^2)."""
    return force * params.transmission * params.lever / params.roll_inertia


def step_plant(state: PlantState, u, dt: float, params: PlantParams) -> PlantState:
    """Advance one semi-implicit Euler step."""
    u = np.asarray(u, dtype=float).reshape(INPUT_DIM)
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    bad = [i for i in range(INPUT_DIM) if not np.isfinite(u[i])]
    if bad:
        raise ValueError(f"non-finite torque components at indices {bad}")
    if not (np.isfinite(state.theta) and np.all(np.isfinite(state.pos))
            and np.all(np.isfinite(state.vel))):
        raise ValueError("non-finite plant state")

    force = contact_force(state, params)
    restoring = np.zeros(STATE_DIM)
    restoring[0] = contact_torque(force, params)
    accel = params.j_eff @ u - params.damping * state.vel - restoring
    vel = state.vel + dt * accel
    theta = state.theta + dt * vel[0]
    pos = state.pos + dt * vel[1:]

    z_min = params.plane_height(pos[0], pos[1]) - params.compression_sat
    if pos[2] < z_min:
        pos[2] = z_min
        vel[3] = max(vel[3], 0.0)

    wetness = state.wetness
    if force > 0.0:
        wetness = min(1.0, wetness + params.wetness_rate * dt)

    nxt = PlantState(theta=theta, pos=pos, vel=vel, wetness=wetness,
                     t=state.t + dt)
    a1 = -np.expm1(-dt / params.sponge_tau)
    a2 = -np.expm1(-dt / params.sensor_tau)
    relaxed = state.relaxed_force + a1 * (contact_force(nxt, params) - state.relaxed_force)
    sensed = state.sensed_force + a2 * (relaxed - state.sensed_force)
    return replace(nxt, relaxed_force=relaxed, sensed_force=sensed)


def sense_fsr(force: float, curve: SensorCurve, noise_std: float = 0.0,
              rng: np.random.Generator | int | None = None) -> float:
    """ADC counts for a force seen by the embedded sensor."""
    if force < 0:
        raise ValueError(f"force must be non-negative, got {force}")
    reading = curve.adc_scale * force * float(curve.gain(force))
    if noise_std > 0 and rng is not None:
        rng = np.random.default_rng(rng) if not isinstance(rng, np.random.Generator) else rng
        reading += noise_std * rng.standard_normal()
    return float(np.clip(reading, 0.0, curve.adc_max))


def measured_force(state: PlantState, params: PlantParams,
                   rng: np.random.Generator | None = None) -> float:
    """Sensor reading converted with the nominal (direct-contact) scale, in N."""
    counts = sense_fsr(max(state.sensed_force, 0.0), params.sensor, params.noise_std, rng)
    return counts / params.sensor.adc_scale


def sample_pad(state: PlantState, params: PlantParams, grid_dim: int = 16) -> ForceGrid:
    """Force footprint on the contact pad.

    A normalized Gaussian whose center trails the nominal contact point in
    proportion to lateral velocity and pivots along pad-x with the roll error.
    """
    pitch = params.pad_size / grid_dim
    force = contact_force(state, params)
    if force <= 0.0:
        return ForceGrid(np.zeros((grid_dim, grid_dim)), pitch=pitch, origin=params.pad_origin)
    cx, cy = footprint_center(state, params, grid_dim)
    idx = np.arange(grid_dim, dtype=float)
    gx = np.exp(-0.5 * ((idx - cx) / params.footprint_sigma) ** 2)
    gy = np.exp(-0.5 * ((idx - cy) / params.footprint_sigma) ** 2)
    w = np.outer(gx, gy)
    total = w.sum()
    if not total > 0.0:
        w = np.zeros_like(w)
        w[int(np.clip(round(cx), 0, grid_dim - 1)), int(np.clip(round(cy), 0, grid_dim - 1))] = 1.0
        total = 1.0
    return ForceGrid(force * w / total, pitch=pitch, origin=params.pad_origin)


def nominal_cell(px: float, py: float, params: PlantParams, grid_dim: int = 16):
    """Cell coordinates (0-indexed, cell centers at integers) of a world point."""
    pitch = params.pad_size / grid_dim
    return ((px - params.pad_origin[0]) / pitch - 0.5,
            (py - params.pad_origin[1]) / pitch - 0.5)


def footprint_center(state: PlantState, params: PlantParams, grid_dim: int = 16):
    cx, cy = nominal_cell(state.pos[0], state.pos[1], params, grid_dim)
    cx += params.pivot_gain * (state.theta - params.theta_align) - params.drag_gain * state.vel[1]
    cy += -params.drag_gain * state.vel[2]
    return cx, cy


def holding_torque(state: PlantState, params: PlantParams) -> np.ndarray:
    """Least-norm torque that keeps a resting state at rest."""
    rhs = np.zeros(STATE_DIM)
    rhs[0] = contact_torque(contact_force(state, params), params)
    rhs += params.damping * state.vel
    return np.linalg.pinv(params.j_eff) @ rhs


def roll_direction(params: PlantParams) -> np.ndarray:
    """Torque direction producing unit roll acceleration and nothing else."""
    return np.linalg.pinv(params.j_eff) @ np.array([1.0, 0.0, 0.0, 0.0])


def theta_for_force(force: float, px: float, py: float, pz: float, wetness: float,
                    params: PlantParams) -> float:
    """Roll angle producing ``force`` at the given position (inverse contact law)."""
    if force <= 0.0:
        return (pz - params.plane_height(px, py)) / (params.transmission * params.lever)
    k_eff = params.k_sponge0 * (1.0 - params.wet_soften * wetness)
    depth = params.compression_sat * np.log1p(force / (k_eff * params.compression_sat))
    return (depth + pz - params.plane_height(px, py)) / (params.transmission * params.lever)


def resting_state(force: float, params: PlantParams, px: float = 0.0, py: float = 0.0,
                  pz: float = 0.0, wetness: float = 0.0) -> PlantState:
    """Contact state at rest producing ``force`` with a settled sensor."""
    theta = theta_for_force(force, px, py, pz, wetness, params)
    state = PlantState(theta=theta, pos=np.array([px, py, pz]), wetness=wetness)
    force = contact_force(state, params)
    return replace(state, relaxed_force=force, sensed_force=force)
