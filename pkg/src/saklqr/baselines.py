"""PID and sliding-mode reference controllers on the roll channel, plus a
Ziegler-Nichols tuning aid."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from saklqr import plant as pl


@dataclass(frozen=True)
class PidParams:
    kp: float
    ki: float
    kd: float
    deriv_filter_tau: float = 0.01
    windup_clamp: float = 5.0
    output_clamp: float = np.inf

    def __post_init__(self):
        if min(self.kp, self.ki, self.kd) < 0:
            raise ValueError("PID gains must be non-negative")
        if not self.deriv_filter_tau > 0:
            raise ValueError("deriv_filter_tau must be positive")
        if not (self.windup_clamp > 0 and self.output_clamp > 0):
            raise ValueError("clamps must be positive")


@dataclass(frozen=True)
class FilterState:
    """Running error integral and low-pass filtered error derivative."""

    integral: float = 0.0
    deriv: float = 0.0
    prev_e: float | None = None


def update_filter(st: FilterState, e: float, dt: float, tau: float,
                  clamp: float = np.inf) -> FilterState:
    if not dt > 0:
        raise ValueError("dt must be positive")
    integral = float(np.clip(st.integral + e * dt, -clamp, clamp))
    if st.prev_e is None:
        deriv = 0.0
    else:
        raw = (e - st.prev_e) / dt
        deriv = st.deriv + dt / (tau + dt) * (raw - st.deriv)
    return FilterState(integral, deriv, float(e))


def pid_step(params: PidParams, e: float, st: FilterState, dt: float) -> tuple[float, FilterState]:
    """Discrete PID with filtered derivative and clamped integral."""
    st = update_filter(st, e, dt, params.deriv_filter_tau, params.windup_clamp)
    u = params.kp * e + params.ki * st.integral + params.kd * st.deriv
    return float(np.clip(u, -params.output_clamp, params.output_clamp)), st


# --------------------------------------------------------------------------
# Ziegler-Nichols

@dataclass(frozen=True)
class ZnProbe:
    """Proportional-only probe: bisection bracket, iteration count, run length.

    ``forces`` lists operating points; tuning uses the one with the smallest
    ultimate gain so the PID stays stable across the whole set.
    """

    k_lo: float = 0.0
    k_hi: float = 1e6
    iters: int = 30
    duration: float = 3.0
    dt: float = 0.002
    step: float = 0.2
    forces: tuple[float, ...] = (10.0,)
    wetness: float = 0.6


def _peaks(y: np.ndarray) -> np.ndarray:
    return np.flatnonzero((y[1:-1] > y[:-2]) & (y[1:-1] >= y[2:])) + 1


def oscillation_growth(err: np.ndarray) -> float:
    """Ratio of late to early oscillation amplitude around the final mean.

    Values >= 1 mean the oscillation is sustained or growing.
    """
    err = np.asarray(err, dtype=float)
    if not np.all(np.isfinite(err)):
        return np.inf
    half = len(err) // 2
    dev = err - np.mean(err[half:])
    early = np.ptp(dev[: len(err) // 4 + 1]) if len(err) > 4 else 0.0
    late = np.ptp(dev[3 * len(err) // 4:])
    if early <= 0:
        return 0.0
    return float(late / early)


def oscillation_period(err: np.ndarray, dt: float) -> float:
    """Median peak spacing over the finite part of the trace."""
    err = np.asarray(err, dtype=float)
    if not np.all(np.isfinite(err)):
        err = err[: np.argmax(~np.isfinite(err))]
    pk = _peaks(err - err.mean())
    if len(pk) < 2:
        raise ValueError("no sustained oscillation to measure")
    return float(np.median(np.diff(pk))) * dt


def ultimate_gain(run: Callable[[float], np.ndarray], dt: float, k_lo: float, k_hi: float,
                  iters: int) -> tuple[float, float]:
    """Bisection on oscillation onset for a proportional loop.

    ``run(k)`` returns the error trace of a step test at gain ``k``.
    """
    if oscillation_growth(run(k_hi)) < 1.0:
        raise ValueError(f"no sustained oscillation up to gain {k_hi}")
    lo, hi = k_lo, k_hi
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if oscillation_growth(run(mid)) >= 1.0:
            hi = mid
        else:
            lo = mid
    return hi, oscillation_period(run(hi), dt)


def zn_table(k_u: float, t_u: float, deriv_ratio: float = 10.0, **kw) -> PidParams:
    """Classic ZN PID row; the derivative filter time is Td / deriv_ratio."""
    kp = 0.6 * k_u
    kw.setdefault("deriv_filter_tau", t_u / 8.0 / deriv_ratio)
    return PidParams(kp=kp, ki=2.0 * kp / t_u, kd=kp * t_u / 8.0, **kw)


def _surrogate_probe(params: pl.PlantParams, probe: ZnProbe,
                     force: float) -> Callable[[float], np.ndarray]:
    quiet = replace(params, noise_std=0.0)
    start = pl.resting_state(force, quiet, wetness=probe.wetness)
    u_hold = pl.holding_torque(start, quiet)
    d = pl.roll_direction(quiet)
    n = int(round(probe.duration / probe.dt))
    target = force + probe.step

    def run(k: float) -> np.ndarray:
        state = start
        err = np.empty(n)
        for i in range(n):
            e = target - pl.measured_force(state, quiet)
            err[i] = e
            state = pl.step_plant(state, u_hold + k * e * d, probe.dt, quiet)
            if abs(state.theta) > 10.0:
                err[i + 1:] = np.inf
                break
        return err
    return run


def zn_tune(plant_params: pl.PlantParams, probe: ZnProbe = ZnProbe(), **pid_kw) -> PidParams:
    """Classic Ziegler-Nichols PID from a proportional sweep on the surrogate."""
    if not probe.forces:
        raise ValueError("need at least one probe force")
    k_u, t_u = min(ultimate_gain(_surrogate_probe(plant_params, probe, f), probe.dt,
                                 probe.k_lo, probe.k_hi, probe.iters)
                   for f in probe.forces)
    return zn_table(k_u, t_u, **pid_kw)


# --------------------------------------------------------------------------
# sliding mode

@dataclass(frozen=True)
class NominalDynamics:
    """Affine second-order model  y'' = a0*(y - y_off) + a1*y' + b0*w  of the
    measured force under a roll-acceleration command w."""

    a0: float
    a1: float
    b0: float
    y_off: float = 0.0

    def f0(self, y: float, y_dot: float) -> float:
        return self.a0 * (y - self.y_off) + self.a1 * y_dot


def linearize_force_dynamics(params: pl.PlantParams, force: float,
                             wetness: float = 0.6) -> NominalDynamics:
    """Second-order contact model around ``force`` seen through the static
    sensor curve; sponge and sensor lags are left to the robust terms."""
    if not force > 0:
        raise ValueError("linearization point must be in contact")
    k_eff = params.k_sponge0 * (1.0 - params.wet_soften * wetness)
    sat = params.compression_sat
    # dF/dtheta of the exponential contact law at this force
    k_theta = (force + k_eff * sat) / sat * params.transmission * params.lever
    gamma = params.transmission * params.lever / params.roll_inertia
    curve = params.sensor
    reading = lambda f: pl.sense_fsr(f, curve) / curve.adc_scale  # noqa: E731
    h = 1e-4 * max(force, 1.0)
    slope = (reading(force + h) - reading(force - h)) / (2.0 * h)
    return NominalDynamics(a0=-k_theta * gamma, a1=-params.damping, b0=slope * k_theta,
                           y_off=reading(force) - slope * force)


@dataclass(frozen=True)
class SmcParams:
    lambda1: float
    lambda2: float
    epsilon: float
    ks: float
    nominal: NominalDynamics
    boundary_layer: float = 0.5
    k1: float | None = None
    k2: float | None = None
    hard_sign: bool = False
    deriv_filter_tau: float = 0.01
    windup_clamp: float = 5.0
    output_clamp: float = np.inf

    def __post_init__(self):
        if self.nominal.b0 == 0:
            raise ValueError("b0 must be nonzero")
        if not self.boundary_layer > 0:
            raise ValueError("boundary_layer must be positive")
        if self.lambda1 <= 0 or self.lambda2 < 0 or self.epsilon < 0 or self.ks < 0:
            raise ValueError("need lambda1 > 0 and non-negative lambda2, epsilon, ks")
        # error gains that cancel the surface's own drift (reaching law below)
        lb = self.lambda1 * self.nominal.b0
        if self.k1 is None:
            object.__setattr__(self, "k1", self.lambda2 / lb)
        if self.k2 is None:
            object.__setattr__(self, "k2", 1.0 / lb)

    @property
    def b0(self) -> float:
        return self.nominal.b0


def sliding_surface(p: SmcParams, e: float, e_dot: float, e_int: float) -> float:
    return e + p.lambda1 * e_dot + p.lambda2 * e_int


def switching(p: SmcParams, s: float) -> float:
    if p.hard_sign:
        return p.epsilon * float(np.sign(s))
    return p.epsilon * float(np.clip(s / p.boundary_layer, -1.0, 1.0))


def smc_step(p: SmcParams, e: float, e_dot: float, e_int: float, r_ddot: float,
             f0: float) -> float:
    """Equivalent control plus error gains, switching term and surface gain."""
    s = sliding_surface(p, e, e_dot, e_int)
    u = (r_ddot - f0) / p.b0 + p.k1 * e + p.k2 * e_dot + switching(p, s) + p.ks * s
    return float(np.clip(u, -p.output_clamp, p.output_clamp))


@dataclass
class SmcRunner:
    """Stateful wrapper used by the closed loop: filters e, integrates e."""

    params: SmcParams
    filt: FilterState = field(default_factory=FilterState)

    def __call__(self, e: float, y: float, r_dot: float, r_ddot: float, dt: float) -> float:
        p = self.params
        self.filt = update_filter(self.filt, e, dt, p.deriv_filter_tau, p.windup_clamp)
        y_dot = r_dot - self.filt.deriv
        return smc_step(p, e, self.filt.deriv, self.filt.integral, r_ddot,
                        p.nominal.f0(y, y_dot))
