"""Closed-loop experiment orchestration on the surrogate plant."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from saklqr import baselines as bl
from saklqr import centroid as cn
from saklqr import control as ct
from saklqr import koopman as kp
from saklqr import observables as ob
from saklqr import plant as pl
from saklqr.harness.config import ExperimentConfig
from saklqr.harness.csvio import write_csv
from saklqr.harness.trajectories import ReferenceTrajectory, reference_derivs, zigzag_path

log = logging.getLogger(__name__)

CONTROLLERS = ("saklqr", "pid", "smc")
TRACK_HEADER = (["t", "reference", "measured_force", "error"]
                + [f"u{i + 1}" for i in range(pl.INPUT_DIM)]
                + ["theta", "x", "y", "z", "region", "controller"])
CENTROID_HEADER = ["C_x", "C_y", "D", "fuzzyen", "roll_adjust", "force_scale",
                   "correction_freq", "smooth_trajectory"]
OBSERVABLE_KINDS = ("Poly2", "Poly3", "RBF", "Fourier", "Combined")


@dataclass
class MetricsReport:
    tracking: dict[str, dict] = field(default_factory=dict)
    runs: dict[str, dict] = field(default_factory=dict)
    flags: list[str] = field(default_factory=list)


def error_metrics(err) -> dict:
    err = np.asarray(err, dtype=float)
    if err.size == 0:
        return {"rmse": float("nan"), "mae": float("nan"), "max_ae": float("nan")}
    return {"rmse": float(np.sqrt(np.mean(err**2))), "mae": float(np.mean(np.abs(err))),
            "max_ae": float(np.max(np.abs(err)))}


# --------------------------------------------------------------------------
# model fitting

@dataclass(frozen=True)
class FittedModels:
    dataset: kp.TrajectoryDataset
    dictionary: ob.Dictionary
    regions: kp.RegionSet
    gains: tuple[ct.LqrGains, ...]


def region_path(cfg: ExperimentConfig) -> np.ndarray:
    """Roll sweep at the pad center covering the tracked force band."""
    tr, p = cfg.tracking, cfg.plant
    lo = max(tr.f0 - cfg.regions.force_margin, 0.5)
    hi = tr.f0 + tr.f_amp + cfg.regions.force_margin
    th = [pl.theta_for_force(f, 0.0, 0.0, 0.0, tr.wetness, p) for f in (lo, hi)]
    return np.array([[th[0], 0.0, 0.0, 0.0], [th[1], 0.0, 0.0, 0.0]])


def fit_models(cfg: ExperimentConfig) -> FittedModels:
    seeds = cfg.seeds()
    data = kp.collect_training_data(cfg.plant, cfg.excitation, seed=seeds["data"])
    train, _ = data.split()
    dc = cfg.dictionary
    d = ob.build_dictionary(dc.kind, train.x, train.u, n_centers=dc.n_centers,
                            n_freqs=dc.n_freqs, seed=seeds["dictionary"])
    regions = kp.segment_regions(region_path(cfg), cfg.regions.n_regions, data, d, dc.svd_tol)
    gains = ct.build_region_gains(regions, np.diag(cfg.lqr.q_diag), np.diag(cfg.lqr.r_diag),
                                  cfg.lqr.ki_scale)
    return FittedModels(data, d, regions, gains)


def save_fitted(path, fm: FittedModels, fingerprint: str) -> None:
    kp.save_model(path, fm.regions, extra={"fingerprint": fingerprint,
                                            "gains": [g.to_dict() for g in fm.gains]})


def load_fitted(path, fingerprint: str) -> tuple[kp.RegionSet, tuple[ct.LqrGains, ...]] | None:
    """Cached regions and gains, or None when absent or fitted under another config."""
    if not Path(path).exists():
        return None
    regions, extra = kp.load_model(path)
    if extra.get("fingerprint") != fingerprint:
        return None
    return regions, tuple(ct.LqrGains.from_dict(g) for g in extra["gains"])


# --------------------------------------------------------------------------
# controllers

class SaklqrController:
    name = "saklqr"

    def __init__(self, regions: kp.RegionSet, gains, beta: float, integral_clamp: float):
        self.regions, self.gains = regions, gains
        self.state = ct.ControllerState(beta=beta, integral_clamp=integral_clamp)

    @property
    def region(self) -> int:
        return self.state.active_region

    def __call__(self, x, v, v_dot, v_ddot, y, dt):
        u, self.state = ct.control_step(self.state, x, v, y, dt, self.regions, self.gains)
        return u


class PidController:
    name = "pid"
    region = -1

    def __init__(self, params: bl.PidParams, direction: np.ndarray):
        self.params, self.direction = params, direction
        self.filt = bl.FilterState()

    def __call__(self, x, v, v_dot, v_ddot, y, dt):
        c, self.filt = bl.pid_step(self.params, v - y, self.filt, dt)
        return c * self.direction


class SmcController:
    name = "smc"
    region = -1

    def __init__(self, params: bl.SmcParams, direction: np.ndarray):
        self.runner = bl.SmcRunner(params)
        self.direction = direction

    def __call__(self, x, v, v_dot, v_ddot, y, dt):
        return self.runner(v - y, y, v_dot, v_ddot, dt) * self.direction


def tune_pid(cfg: ExperimentConfig) -> bl.PidParams:
    tr, pc = cfg.tracking, cfg.pid
    probe = bl.ZnProbe(k_hi=pc.k_hi, iters=pc.iters, duration=pc.duration, dt=tr.dt,
                       step=pc.step, forces=(tr.f0, tr.f0 + tr.f_amp / 2, tr.f0 + tr.f_amp),
                       wetness=tr.wetness)
    return bl.zn_tune(cfg.plant, probe, deriv_ratio=pc.deriv_ratio, windup_clamp=pc.windup_clamp)


def design_smc(cfg: ExperimentConfig) -> bl.SmcParams:
    """Surface bandwidth sets both lambdas; the reaching gain scales with it."""
    tr, sc = cfg.tracking, cfg.smc
    nominal = bl.linearize_force_dynamics(cfg.plant, tr.f0 + tr.f_amp / 2, tr.wetness)
    ws = 2.0 * np.pi * sc.surface_hz
    lam1 = 1.0 / (2.0 * ws)
    return bl.SmcParams(lambda1=lam1, lambda2=ws / 2.0, epsilon=sc.epsilon,
                        ks=sc.reach_factor * ws / (lam1 * nominal.b0), nominal=nominal,
                        boundary_layer=sc.boundary_layer, hard_sign=sc.hard_sign,
                        deriv_filter_tau=sc.deriv_filter_tau, windup_clamp=sc.windup_clamp)


def make_controller(name: str, cfg: ExperimentConfig, fitted=None, pid=None, smc=None):
    direction = pl.roll_direction(cfg.plant)
    if name == "saklqr":
        if fitted is None:
            fm = fit_models(cfg)
            fitted = (fm.regions, fm.gains)
        return SaklqrController(*fitted, cfg.lqr.beta, cfg.lqr.integral_clamp)
    if name == "pid":
        return PidController(pid or tune_pid(cfg), direction)
    if name == "smc":
        return SmcController(smc or design_smc(cfg), direction)
    raise ValueError(f"unknown controller {name!r}; expected one of {CONTROLLERS}")


# --------------------------------------------------------------------------
# closed loop

class SurrogateLoop:
    """Plant plus noisy sensor, as seen by a controller."""

    def __init__(self, params: pl.PlantParams, rng: np.random.Generator, wetness: float = 0.6):
        self.params, self.rng, self.wetness = params, rng, wetness
        self.state = pl.PlantState()

    def reset(self, force: float) -> None:
        self.state = pl.resting_state(force, self.params, wetness=self.wetness)

    @property
    def x(self) -> np.ndarray:
        return self.state.x

    def measure(self) -> float:
        return pl.measured_force(self.state, self.params, self.rng)

    def step(self, u, dt: float) -> None:
        self.state = pl.step_plant(self.state, u, dt, self.params)


def closed_loop(traj: ReferenceTrajectory, controller, loop, dt: float,
                divergence_force: float = np.inf) -> tuple[list[list], bool]:
    """Fixed-step run; returns the logged rows and whether it was aborted."""
    n = int(round(traj.duration / dt))
    loop.reset(reference_derivs(traj, 0.0)[0])
    rows = []
    for k in range(n):
        t = k * dt
        v, v_dot, v_ddot = reference_derivs(traj, t)
        y = loop.measure()
        x = loop.x
        u = np.asarray(controller(x, v, v_dot, v_ddot, y, dt), dtype=float)
        rows.append([t, v, y, v - y, *u, *x, int(controller.region), controller.name])
        if not (np.all(np.isfinite(u)) and abs(y) < divergence_force):
            return rows, True
        try:
            loop.step(u, dt)
        except ValueError:
            return rows, True
    return rows, False


def case_name(traj: ReferenceTrajectory) -> str:
    return f"{traj.kind.lower()}_{traj.omega:g}hz"


def tracking_cases(cfg: ExperimentConfig) -> list[ReferenceTrajectory]:
    tr = cfg.tracking
    return [ReferenceTrajectory(kind, tr.f0, tr.f_amp, w, tr.cycles)
            for kind in tr.kinds for w in tr.frequencies]


def run_tracking_experiment(cfg: ExperimentConfig, out_dir=None, controllers=None,
                            fitted=None) -> MetricsReport:
    """Every configured reference case under each controller, same noise per case."""
    controllers = tuple(controllers or cfg.tracking.controllers)
    for name in controllers:
        if name not in CONTROLLERS:
            raise ValueError(f"unknown controller {name!r}; expected one of {CONTROLLERS}")
    tr = cfg.tracking
    if "saklqr" in controllers and fitted is None:
        fm = fit_models(cfg)
        fitted = (fm.regions, fm.gains)
    pid = tune_pid(cfg) if "pid" in controllers else None
    smc = design_smc(cfg) if "smc" in controllers else None
    noise_seed = cfg.seeds()["noise"]

    report = MetricsReport()
    summary = []
    for ci, traj in enumerate(tracking_cases(cfg)):
        for name in controllers:
            ctrl = make_controller(name, cfg, fitted, pid, smc)
            loop = SurrogateLoop(cfg.plant, np.random.default_rng([noise_seed, ci]), tr.wetness)
            rows, aborted = closed_loop(traj, ctrl, loop, tr.dt, tr.divergence_force)
            key = f"{case_name(traj)}/{name}"
            m = error_metrics([r[3] for r in rows])
            m["aborted"] = aborted
            report.tracking[key] = m
            if aborted:
                report.flags.append(f"{key}: run aborted after {len(rows)} steps")
                log.warning("%s aborted after %d steps", key, len(rows))
            if out_dir is not None:
                write_csv(Path(out_dir) / f"track_{case_name(traj)}_{name}.csv", TRACK_HEADER, rows)
            summary.append([case_name(traj), name, m["rmse"], m["mae"], m["max_ae"], aborted])
    if out_dir is not None:
        write_csv(Path(out_dir) / "tracking_summary.csv",
                  ["case", "controller", "rmse", "mae", "max_ae", "aborted"], summary)
    return report


# --------------------------------------------------------------------------
# observable comparison

def run_observable_comparison(cfg: ExperimentConfig, out_dir=None, kinds=OBSERVABLE_KINDS,
                              dataset: kp.TrajectoryDataset | None = None) -> list[dict]:
    """Held-out output prediction per dictionary kind, ranked by R^2."""
    seeds = cfg.seeds()
    data = dataset if dataset is not None else kp.collect_training_data(
        cfg.plant, cfg.excitation, seed=seeds["data"])
    train, test = data.split()
    dc = cfg.dictionary
    rows = []
    for kind in kinds:
        row = {"dictionary": kind, "dim": 0, "rmse": float("nan"), "mae": float("nan"),
               "r2": float("nan"), "status": "ok"}
        try:
            d = ob.build_dictionary(kind, train.x, train.u, n_centers=dc.n_centers,
                                    n_freqs=dc.n_freqs, seed=seeds["dictionary"])
            model = kp.attach_output_map(kp.fit_edmd(train, d, dc.svd_tol), train)
            pred = ob.lift_many(test.x, test.u, d) @ model.c
            m = kp.eval_metrics(pred, test.y)
            row.update(dim=d.dim, rmse=m["rmse"], mae=m["mae"], r2=m["r2"])
        except ValueError as exc:
            row["status"] = f"failed: {exc}"
        rows.append(row)
    ranked = sorted(rows, key=lambda r: (np.isnan(r["r2"]), -np.nan_to_num(r["r2"])))
    for i, r in enumerate(ranked):
        r["rank"] = i + 1
    if out_dir is not None:
        cols = ["rank", "dictionary", "dim", "rmse", "mae", "r2", "status"]
        write_csv(Path(out_dir) / "observables.csv", cols, [[r[c] for c in cols] for r in ranked])
    return ranked


# --------------------------------------------------------------------------
# centroid ablation

def _sweep_start(cfg: ExperimentConfig, params: pl.PlantParams, px: float, py: float) -> pl.PlantState:
    """Resting contact at the base roll angle, height chosen for the sweep force."""
    cc = cfg.centroid
    theta = pl.theta_for_force(cc.force, px, py, 0.0, cc.wetness, params)
    pz = params.transmission * params.lever * (cc.theta_base - theta)
    return pl.resting_state(cc.force, params, px, py, pz, cc.wetness)


def zigzag_run(cfg: ExperimentConfig, regulated: bool, out_path=None) -> dict:
    """One zigzag sweep at constant force with an optional centroid regulator."""
    cc = cfg.centroid
    params = replace(cfg.plant, pivot_gain=cc.pivot_gain, drag_gain=cc.drag_gain)
    path = zigzag_path(params.pad_size * 100.0, cc.n_passes, cc.speed)
    origin = np.array(params.pad_origin)
    rng = np.random.default_rng([cfg.seeds()["noise"], 99])
    pinv_j = np.linalg.pinv(params.j_eff)

    p0, _ = path.position(0.0)
    state = _sweep_start(cfg, params, *(origin + p0 / 100.0))
    monitor = cn.CentroidMonitor(m=cc.m, r_factor=cc.r_factor, n_window=cc.n_window,
                                 d_max=cc.d_max, fuzzyen_max=cc.fuzzyen_max,
                                 correction_rate=cc.correction_rate,
                                 correction_freq=cc.correction_rate,
                                 max_correction_rate=cc.max_correction_rate,
                                 pitch=params.pitch)
    cmd = cn.CorrectionCommand(correction_freq=cc.correction_rate)
    trim = 0.0
    next_tick = 0.0
    peak = np.zeros((cn.GRID_DIM, cn.GRID_DIM))
    rows, dists, force_err = [], [], []
    n = int(np.ceil(path.duration / cc.dt)) + 1
    for k in range(n):
        t = k * cc.dt
        grid = pl.sample_pad(state, params)
        peak = np.maximum(peak, grid.cells)
        target = pl.nominal_cell(state.pos[0], state.pos[1], params)
        if grid.total > 0:
            c = cn.compute_centroid(grid)
            dist = cn.centroid_error(c, target, params.pitch)
            dists.append(dist)
        else:
            c, dist = (float("nan"), float("nan")), float("nan")
        if t >= next_tick - 1e-12:
            cmd, monitor = cn.regulate(monitor, grid, target)
            if regulated and not cmd.fault:
                step = cmd.roll_adjust * (cc.smooth_alpha if cmd.smooth_trajectory else 1.0)
                trim = float(np.clip(trim + step, -4 * monitor.roll_limit, 4 * monitor.roll_limit))
            next_tick += 1.0 / cmd.correction_freq
        scale = cmd.force_scale if regulated else 1.0
        f_ref = cc.force * scale
        y = pl.measured_force(state, params, rng)
        force_err.append(abs(f_ref - y) / f_ref)

        p_ref, v_ref = path.position(t)
        v_des = np.zeros(pl.STATE_DIM)
        v_des[1:3] = v_ref / 100.0 + cc.track_gain * (origin + p_ref / 100.0 - state.pos[:2])
        v_des[3] = -cc.height_gain * (f_ref - y)
        v_des[0] = cc.roll_gain * (cc.theta_base + trim - state.theta)
        accel = (v_des - state.vel) / cc.dt + params.damping * state.vel
        accel[0] += pl.contact_torque(pl.contact_force(state, params), params)
        u = pinv_j @ accel
        if out_path is not None:
            rows.append([t, f_ref, y, f_ref - y, *u, *state.x, -1, "sweep", c[0], c[1], dist,
                         monitor.last_entropy, cmd.roll_adjust if regulated else 0.0, scale,
                         cmd.correction_freq, bool(cmd.smooth_trajectory and regulated)])
        state = pl.step_plant(state, u, cc.dt, params)

    coverage = cn.coverage_percentage(cn.ForceGrid(peak, pitch=params.pitch),
                                      cc.contact_threshold)
    if out_path is not None:
        write_csv(out_path, TRACK_HEADER + CENTROID_HEADER, rows)
        write_csv(Path(out_path).with_name(Path(out_path).stem + "_coverage.csv"),
                  [f"c{j}" for j in range(cn.GRID_DIM)], peak.tolist())
    return {"mean_centroid_error_cm": float(np.mean(dists)) if dists else float("nan"),
            "coverage_pct": coverage,
            "mean_force_error_pct": 100.0 * float(np.mean(force_err)),
            "completion_time_s": n * cc.dt}


def run_centroid_ablation(cfg: ExperimentConfig, out_dir=None) -> MetricsReport:
    report = MetricsReport()
    rows = []
    for label, on in (("regulator_off", False), ("regulator_on", True)):
        out = None if out_dir is None else Path(out_dir) / f"zigzag_{label}.csv"
        m = zigzag_run(cfg, on, out)
        report.runs[label] = m
        rows.append([label, *m.values()])
    if out_dir is not None:
        write_csv(Path(out_dir) / "centroid_ablation.csv",
                  ["run", *report.runs["regulator_off"].keys()], rows)
    return report
