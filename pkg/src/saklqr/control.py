"""State-adaptive Koopman LQR: gain synthesis, region selection, blending and
quaternion roll bookkeeping."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from saklqr.koopman import KoopmanModel, RegionSet, extract_ab
from saklqr.observables import NU, NX, jacobians


class RiccatiError(RuntimeError):
    def __init__(self, residual: float, iterations: int):
        super().__init__(f"Riccati iteration did not converge after {iterations} "
                         f"iterations (residual {residual:.3e})")
        self.residual = residual
        self.iterations = iterations


# --------------------------------------------------------------------------
# quaternions, stored as (qx, qy, qz, qw)

@dataclass(frozen=True)
class Quaternion:
    qx: float = 0.0
    qy: float = 0.0
    qz: float = 0.0
    qw: float = 1.0

    def as_array(self) -> np.ndarray:
        return np.array([self.qx, self.qy, self.qz, self.qw])

    @property
    def norm(self) -> float:
        return math.sqrt(self.qx**2 + self.qy**2 + self.qz**2 + self.qw**2)

    def roll(self) -> float:
        """Rotation angle about x for a pure-roll quaternion."""
        return 2.0 * float(np.arctan2(self.qx, self.qw))


def roll_increment(theta_step: float) -> Quaternion:
    half = 0.5 * float(theta_step)
    if not math.isfinite(half):
        raise ValueError("theta_step must be finite")
    return Quaternion(math.sin(half), 0.0, 0.0, math.cos(half))


def hamilton(p: Quaternion, q: Quaternion) -> Quaternion:
    x1, y1, z1, w1 = p.qx, p.qy, p.qz, p.qw
    x2, y2, z2, w2 = q.qx, q.qy, q.qz, q.qw
    return Quaternion(
        w1 * x2 + x1 * w2 + y1 * z2 - z1 * y2,
        w1 * y2 - x1 * z2 + y1 * w2 + z1 * x2,
        w1 * z2 + x1 * y2 - y1 * x2 + z1 * w2,
        w1 * w2 - x1 * x2 - y1 * y2 - z1 * z2,
    )


def apply_rotation(q_current: Quaternion, q_inc: Quaternion) -> Quaternion:
    """q_current (x) q_inc, renormalized."""
    q = hamilton(q_current, q_inc)
    n = q.norm
    return Quaternion(q.qx / n, q.qy / n, q.qz / n, q.qw / n)


# --------------------------------------------------------------------------
# LQR synthesis

@dataclass(frozen=True)
class LqrGains:
    k_fb: np.ndarray
    k_r: np.ndarray
    k_i: np.ndarray
    p: np.ndarray
    x_eq: np.ndarray = field(default_factory=lambda: np.zeros(NX))
    u_eq: np.ndarray = field(default_factory=lambda: np.zeros(NU))
    y_eq: float = 0.0

    def closed_loop(self, a, b) -> np.ndarray:
        return np.asarray(a) - np.asarray(b) @ self.k_fb

    def blend(self, other: "LqrGains", beta: float) -> "LqrGains":
        mix = lambda p, q: (1.0 - beta) * p + beta * q  # noqa: E731
        return LqrGains(mix(self.k_fb, other.k_fb), mix(self.k_r, other.k_r),
                        mix(self.k_i, other.k_i), mix(self.p, other.p),
                        mix(self.x_eq, other.x_eq), mix(self.u_eq, other.u_eq),
                        float(mix(self.y_eq, other.y_eq)))

    def to_dict(self) -> dict:
        return {"k_fb": self.k_fb.tolist(), "k_r": self.k_r.tolist(), "k_i": self.k_i.tolist(),
                "p": self.p.tolist(), "x_eq": self.x_eq.tolist(), "u_eq": self.u_eq.tolist(),
                "y_eq": self.y_eq}

    @classmethod
    def from_dict(cls, d: dict) -> "LqrGains":
        return cls(**{k: (np.array(v, dtype=float) if k != "y_eq" else float(v))
                      for k, v in d.items()})


def _riccati_rhs(p, a, b, q_mat, r_mat):
    s = r_mat + b.T @ p @ b
    gain = np.linalg.solve(s, b.T @ p @ a)
    nxt = q_mat + a.T @ p @ a - a.T @ p @ b @ gain
    return 0.5 * (nxt + nxt.T)


def solve_riccati(a, b, q_mat, r_mat, tol: float = 1e-10, max_iter: int = 100_000) -> np.ndarray:
    """Fixed-point iteration of the discrete Riccati equation from P0 = Q.

    Stops once the sup-norm step falls below ``tol * max(1, |P|_inf)``.
    """
    a = np.atleast_2d(np.asarray(a, dtype=float))
    b = np.atleast_2d(np.asarray(b, dtype=float))
    q_mat = np.atleast_2d(np.asarray(q_mat, dtype=float))
    r_mat = np.atleast_2d(np.asarray(r_mat, dtype=float))
    if np.min(np.linalg.eigvalsh(0.5 * (q_mat + q_mat.T))) < -1e-12:
        raise ValueError("Q must be positive semidefinite")
    if np.min(np.linalg.eigvalsh(0.5 * (r_mat + r_mat.T))) <= 0:
        raise ValueError("R must be positive definite")
    p = q_mat.copy()
    residual = np.inf
    for _ in range(max_iter):
        nxt = _riccati_rhs(p, a, b, q_mat, r_mat)
        residual = float(np.max(np.abs(nxt - p)))
        p = nxt
        if not np.isfinite(residual):
            break
        if residual < tol * max(1.0, float(np.max(np.abs(p)))):
            return p
    raise RiccatiError(residual, max_iter)


def feedback_gain(a, b, p, r_mat) -> np.ndarray:
    s = np.atleast_2d(r_mat) + b.T @ p @ b
    if np.linalg.cond(s) > 1e14:
        raise np.linalg.LinAlgError("R + B^T P B is singular")
    return np.linalg.solve(s, b.T @ p @ a)


def dc_gain_row(a, b, k_fb, c_x, c_u) -> np.ndarray:
    """Steady-state map from a constant input offset to the output,
    with state feedback closed."""
    n = a.shape[0]
    m = np.linalg.solve(np.eye(n) - (a - b @ k_fb), b)
    return np.atleast_2d(c_x) @ m + np.atleast_2d(c_u) @ (np.eye(b.shape[1]) - k_fb @ m)


def lqr_gains(a, b, q_mat, r_mat, ki_scale: float = 0.1, c_x=None, c_u=None,
              tol: float = 1e-10, max_iter: int = 100_000) -> LqrGains:
    """Riccati gains plus a unit-DC-gain reference feedforward.

    Without an output map the first state is taken as the regulated output.
    """
    a = np.atleast_2d(np.asarray(a, dtype=float))
    b = np.atleast_2d(np.asarray(b, dtype=float))
    p = solve_riccati(a, b, q_mat, r_mat, tol, max_iter)
    k_fb = feedback_gain(a, b, p, r_mat)
    n, m = b.shape
    c_x = np.eye(1, n) if c_x is None else np.asarray(c_x, dtype=float).reshape(1, n)
    c_u = np.zeros((1, m)) if c_u is None else np.asarray(c_u, dtype=float).reshape(1, m)
    g = dc_gain_row(a, b, k_fb, c_x, c_u)
    if not np.linalg.norm(g) > 0:
        raise np.linalg.LinAlgError("output is not steerable at DC")
    k_r = np.linalg.pinv(g).reshape(m, 1)
    return LqrGains(k_fb=k_fb, k_r=k_r, k_i=ki_scale * k_r, p=p)


# --------------------------------------------------------------------------
# region-local gains

def equilibrium_input(model: KoopmanModel, x_eq, u0=None, iters: int = 20) -> np.ndarray:
    """Least-norm Gauss-Newton solve of model.step(x_eq, u) = x_eq."""
    x_eq = np.asarray(x_eq, dtype=float)
    u = np.zeros(NU) if u0 is None else np.asarray(u0, dtype=float).copy()
    rows = model.state_rows
    for _ in range(iters):
        resid = model.step(x_eq, u) - x_eq
        _, ju = jacobians(x_eq, u, model.dict)
        du = np.linalg.lstsq(rows @ ju, -resid, rcond=None)[0]
        u = u + du
        if np.max(np.abs(du)) < 1e-12:
            break
    return u


def region_gains(model: KoopmanModel, x_eq, q_mat, r_mat, ki_scale: float = 0.1,
                 u0=None) -> LqrGains:
    """LQR gains for the model linearized at its own fixed point near ``x_eq``."""
    if model.c is None:
        raise ValueError("region model needs an output map")
    x_eq = np.asarray(x_eq, dtype=float)
    u_eq = equilibrium_input(model, x_eq, u0)
    a, b = extract_ab(model, x_eq, u_eq)
    jx, ju = jacobians(x_eq, u_eq, model.dict)
    gains = lqr_gains(a, b, q_mat, r_mat, ki_scale, model.c @ jx, model.c @ ju)
    return replace(gains, x_eq=x_eq, u_eq=u_eq, y_eq=model.output(x_eq, u_eq))


def build_region_gains(regions: RegionSet, q_mat, r_mat, ki_scale: float = 0.1,
                       u0=None) -> tuple[LqrGains, ...]:
    out = []
    for center, model in zip(regions.centers, regions.models):
        gains = region_gains(model, center, q_mat, r_mat, ki_scale, u0)
        a, b = extract_ab(model, center, gains.u_eq)
        rho = max(abs(np.linalg.eigvals(gains.closed_loop(a, b))))
        if not rho < 1.0:
            raise ValueError(f"region {model.region_id}: closed loop not stable (rho={rho:.4f})")
        out.append(gains)
    return tuple(out)


# --------------------------------------------------------------------------
# online loop

def select_operator(x, regions: RegionSet | np.ndarray) -> int:
    """Nearest region center; ties go to the lowest index."""
    centers = regions.centers if isinstance(regions, RegionSet) else np.asarray(regions)
    dist = np.linalg.norm(centers - np.asarray(x, dtype=float), axis=1)
    return int(np.argmin(dist))


def blend_operator(k_prev, k_sel, beta: float) -> np.ndarray:
    k_prev = np.asarray(k_prev, dtype=float)
    k_sel = np.asarray(k_sel, dtype=float)
    if k_prev.shape != k_sel.shape:
        raise ValueError(f"operator shapes differ: {k_prev.shape} vs {k_sel.shape}")
    if not 0.0 < beta <= 1.0:
        raise ValueError(f"beta must lie in (0, 1], got {beta}")
    return (1.0 - beta) * k_prev + beta * k_sel


@dataclass(frozen=True)
class ControllerState:
    integral_acc: float = 0.0
    k_current: np.ndarray | None = None
    k_previous: np.ndarray | None = None
    gains: LqrGains | None = None
    active_region: int = -1
    q_current: Quaternion = field(default_factory=Quaternion)
    beta: float = 0.2
    integral_clamp: float = 5.0
    last_u: np.ndarray = field(default_factory=lambda: np.zeros(NU))
    last_theta: float | None = None
    fault: bool = False

    def __post_init__(self):
        if not 0.0 < self.beta <= 1.0:
            raise ValueError("beta must lie in (0, 1]")
        if self.integral_clamp <= 0:
            raise ValueError("integral_clamp must be positive")


def control_step(ctrl: ControllerState, x, v: float, y_meas: float, dt: float,
                 regions: RegionSet, gains_per_region) -> tuple[np.ndarray, ControllerState]:
    """One SA-KLQR update from the measured state ``x`` and force ``y_meas``."""
    x = np.asarray(x, dtype=float)
    if not (np.all(np.isfinite(x)) and np.isfinite(y_meas) and np.isfinite(v)):
        return ctrl.last_u.copy(), replace(ctrl, fault=True)

    idx = select_operator(x, regions)
    k_sel = regions.models[idx].k_d
    sel = gains_per_region[idx]
    if ctrl.gains is None:
        k_prev, k_cur, gains = k_sel, k_sel, sel
    else:
        k_prev = ctrl.k_current if idx != ctrl.active_region else ctrl.k_previous
        k_cur = blend_operator(ctrl.k_current, k_sel, ctrl.beta)
        gains = ctrl.gains.blend(sel, ctrl.beta)

    e = float(v) - float(y_meas)
    acc = float(np.clip(ctrl.integral_acc + e * dt, -ctrl.integral_clamp, ctrl.integral_clamp))
    u = (gains.u_eq - gains.k_fb @ (x - gains.x_eq) + gains.k_r[:, 0] * (v - gains.y_eq)
         + gains.k_i[:, 0] * acc)

    if ctrl.last_theta is None:
        q = roll_increment(x[0])
    else:
        q = apply_rotation(ctrl.q_current, roll_increment(x[0] - ctrl.last_theta))
    return u, replace(ctrl, integral_acc=acc, k_current=k_cur, k_previous=k_prev, gains=gains,
                      active_region=idx, q_current=q, last_u=u, last_theta=float(x[0]),
                      fault=False)
