"""EDMD identification, linear-model extraction, regions and prediction metrics."""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from saklqr import plant as pl
from saklqr.observables import NU, NX, Dictionary, jacobians, lift_many

MODEL_FORMAT_VERSION = 1


class RankDeficiencyError(ValueError):
    """Lifted Gram matrix lacks the rank the dictionary needs."""

    def __init__(self, block: str, rank: int, needed: int):
        super().__init__(f"rank-deficient Gram matrix ({rank} < {needed}); "
                         f"first dependent dictionary block: {block!r}")
        self.block = block


@dataclass(frozen=True)
class TrajectoryDataset:
    x: np.ndarray
    u: np.ndarray
    y: np.ndarray
    dt: float
    episode_starts: tuple[int, ...] = (0,)
    flags: tuple[str, ...] = ()

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float).reshape(-1, NX)
        u = np.asarray(self.u, dtype=float).reshape(-1, NU)
        y = np.asarray(self.y, dtype=float).reshape(-1)
        if not (len(x) == len(u) == len(y)):
            raise ValueError("x, u, y must have equal length")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(u)) and np.all(np.isfinite(y))):
            raise ValueError("dataset records must be finite")
        starts = tuple(sorted(set(int(s) for s in self.episode_starts) | {0}))
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "episode_starts", starts)

    def __len__(self):
        return len(self.x)

    def episodes(self) -> list[slice]:
        bounds = list(self.episode_starts) + [len(self)]
        return [slice(a, b) for a, b in zip(bounds[:-1], bounds[1:]) if b > a]

    def pair_indices(self) -> np.ndarray:
        """Indices k with (k, k+1) inside one episode."""
        idx = [np.arange(s.start, s.stop - 1) for s in self.episodes()]
        return np.concatenate(idx) if idx else np.zeros(0, dtype=int)

    def split(self, train_frac: float = 0.8) -> tuple["TrajectoryDataset", "TrajectoryDataset"]:
        """Leading part of every episode for training, the tail held out."""
        tr, te = [], []
        for s in self.episodes():
            n = s.stop - s.start
            cut = s.start + int(round(train_frac * n))
            tr.append(np.arange(s.start, cut))
            te.append(np.arange(cut, s.stop))
        return self._subset(tr), self._subset(te)

    def _subset(self, pieces) -> "TrajectoryDataset":
        starts, total = [], 0
        for p in pieces:
            starts.append(total)
            total += len(p)
        idx = np.concatenate(pieces) if pieces else np.zeros(0, dtype=int)
        return TrajectoryDataset(self.x[idx], self.u[idx], self.y[idx], self.dt,
                                 tuple(starts), self.flags)


@dataclass(frozen=True)
class KoopmanModel:
    k_d: np.ndarray
    a: np.ndarray
    b: np.ndarray
    dict: Dictionary
    svd_tol: float = 1e-8
    c: np.ndarray | None = None
    region_id: int | None = None
    op_x: np.ndarray = field(default_factory=lambda: np.zeros(NX))
    op_u: np.ndarray = field(default_factory=lambda: np.zeros(NU))
    meta: dict = field(default_factory=dict)

    @property
    def state_rows(self) -> np.ndarray:
        """Rows of K_d^T that produce the raw state block."""
        sl = self.dict.block_slices().get("x")
        if sl is None:
            raise ValueError("dictionary has no raw state block; projection undefined")
        return self.k_d.T[sl]

    def step(self, x, u) -> np.ndarray:
        return self.state_rows @ lift_many(x, u, self.dict)[0]

    def output(self, x, u) -> float:
        if self.c is None:
            raise ValueError("model has no output map")
        return float(self.c @ lift_many(x, u, self.dict)[0])

    def to_dict(self) -> dict:
        return {
            "k_d": self.k_d.tolist(), "a": self.a.tolist(), "b": self.b.tolist(),
            "c": None if self.c is None else self.c.tolist(),
            "dict": self.dict.to_dict(), "svd_tol": self.svd_tol,
            "region_id": self.region_id, "op_x": self.op_x.tolist(),
            "op_u": self.op_u.tolist(), "meta": self.meta,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "KoopmanModel":
        return cls(k_d=np.array(d["k_d"]), a=np.array(d["a"]), b=np.array(d["b"]),
                   dict=Dictionary.from_dict(d["dict"]), svd_tol=d["svd_tol"],
                   c=None if d["c"] is None else np.array(d["c"]),
                   region_id=d["region_id"], op_x=np.array(d["op_x"]),
                   op_u=np.array(d["op_u"]), meta=d["meta"])


@dataclass(frozen=True)
class RegionSet:
    centers: np.ndarray
    models: tuple[KoopmanModel, ...]
    fallback: tuple[bool, ...] = ()

    def __post_init__(self):
        centers = np.asarray(self.centers, dtype=float).reshape(-1, NX)
        object.__setattr__(self, "centers", centers)
        if len(centers) != len(self.models):
            raise ValueError("one model per region center required")
        if len(centers) > 1:
            diff = centers[:, None, :] - centers[None, :, :]
            dist = np.sqrt((diff**2).sum(axis=2)) + np.eye(len(centers))
            if np.min(dist) <= 0:
                raise ValueError("region centers must be pairwise distinct")
        for i, m in enumerate(self.models):
            if m.region_id != i:
                raise ValueError(f"model {i} carries region_id {m.region_id}")

    def __len__(self):
        return len(self.centers)

    def to_dict(self) -> dict:
        return {"centers": self.centers.tolist(),
                "models": [m.to_dict() for m in self.models],
                "fallback": list(self.fallback)}

    @classmethod
    def from_dict(cls, d: dict) -> "RegionSet":
        return cls(np.array(d["centers"]), tuple(KoopmanModel.from_dict(m) for m in d["models"]),
                   tuple(d["fallback"]))


# --------------------------------------------------------------------------
# data collection

@dataclass(frozen=True)
class ExcitationSpec:
    """Closed-loop exploration: a slow force sweep plus held random torques."""

    n_episodes: int = 12
    steps: int = 2500
    dt: float = 0.002
    torque_amp: float = 0.3
    hold_steps: tuple[int, int] = (20, 80)
    force_range: tuple[float, float] = (0.0, 24.0)
    sweep_period: float = 2.0
    sweep_amp: float = 1.0
    xy_radius: float = 0.04
    xy_speed: float = 0.02
    z_range: tuple[float, float] = (-0.003, 0.002)
    wetness_range: tuple[float, float] = (0.5, 0.8)
    track_rate: float = 40.0

    @classmethod
    def zero(cls, **kw) -> "ExcitationSpec":
        return cls(torque_amp=0.0, sweep_amp=0.0, xy_speed=0.0, **kw)


def collect_training_data(params: pl.PlantParams, spec: ExcitationSpec,
                          seed: int = 0) -> TrajectoryDataset:
    """Run exploration episodes on the surrogate plant and record (x, u, y)."""
    xs, us, ys, starts, flags = [], [], [], [], []
    pinv_j = np.linalg.pinv(params.j_eff)
    root = np.random.default_rng(seed)
    for ep in range(spec.n_episodes):
        rng = np.random.default_rng(root.integers(2**63))
        f_lo, f_hi = spec.force_range
        mid, half = 0.5 * (f_lo + f_hi), 0.5 * (f_hi - f_lo)
        phase = rng.uniform(0, 2 * np.pi)
        px, py = rng.uniform(-spec.xy_radius, spec.xy_radius, size=2)
        pz = rng.uniform(*spec.z_range)
        wet = rng.uniform(*spec.wetness_range)
        f_start = mid + spec.sweep_amp * half * np.sin(phase) if spec.sweep_amp > 0 else 0.5 * mid
        state = pl.resting_state(max(f_start, 0.5), params, px, py, pz, wet)
        target = state.x.copy()
        xy_goal = np.array([px, py])
        torque = np.zeros(pl.INPUT_DIM)
        hold = 0
        starts.append(len(xs))
        for k in range(spec.steps):
            t = k * spec.dt
            if spec.sweep_amp > 0:
                f_star = mid + spec.sweep_amp * half * np.sin(2 * np.pi * t / spec.sweep_period + phase)
                target[0] = pl.theta_for_force(max(f_star, 0.0), *state.pos, state.wetness, params)
                if f_star <= 0:
                    target[0] -= 0.05
            if spec.xy_speed > 0:
                if np.linalg.norm(target[1:3] - xy_goal) < 1e-4:
                    xy_goal = rng.uniform(-spec.xy_radius, spec.xy_radius, size=2)
                step = xy_goal - target[1:3]
                dist = np.linalg.norm(step)
                target[1:3] += step * min(1.0, spec.xy_speed * spec.dt / max(dist, 1e-12))
            if hold <= 0:
                torque = spec.torque_amp * rng.uniform(-1, 1, size=pl.INPUT_DIM)
                hold = int(rng.integers(*spec.hold_steps))
            hold -= 1
            accel = params.damping * spec.track_rate * (target - state.x)
            accel[0] += pl.contact_torque(pl.contact_force(state, params), params)
            u = pinv_j @ accel + torque
            y = pl.measured_force(state, params, rng)
            if not (np.all(np.isfinite(u)) and np.isfinite(y)):
                flags.append(f"episode {ep} truncated at step {k}")
                break
            xs.append(state.x)
            us.append(u)
            ys.append(y)
            try:
                state = pl.step_plant(state, u, spec.dt, params)
            except ValueError:
                flags.append(f"episode {ep} truncated at step {k}")
                break
    return TrajectoryDataset(np.array(xs), np.array(us), np.array(ys), spec.dt,
                             tuple(starts), tuple(flags))


# --------------------------------------------------------------------------
# EDMD

def _pinv_tol(mat: np.ndarray, tol: float) -> tuple[np.ndarray, int]:
    u, s, vt = np.linalg.svd(mat)
    keep = s > tol * s[0] if s.size and s[0] > 0 else np.zeros_like(s, dtype=bool)
    inv = (vt[keep].T / s[keep]) @ u[:, keep].T
    return inv, int(keep.sum())


def edmd_operator(psi_now: np.ndarray, psi_next: np.ndarray, svd_tol: float = 1e-8,
                  blocks: list[tuple[str, int]] | None = None) -> np.ndarray:
    """K_d = G^+ A from empirical averages over snapshot pairs (rows).

    The pseudoinverse is taken on the diagonally equilibrated Gram matrix;
    for full-rank data this equals the plain pseudoinverse.
    """
    psi_now = np.atleast_2d(psi_now)
    psi_next = np.atleast_2d(psi_next)
    n, m = psi_now.shape
    gram = psi_now.T @ psi_now / n
    cross = psi_now.T @ psi_next / n
    diag = np.sqrt(np.diag(gram))
    diag = np.where(diag > 0, diag, 1.0)
    geq = gram / np.outer(diag, diag)
    inv, rank = _pinv_tol(geq, svd_tol)
    if rank < m:
        blocks = blocks or [("psi", m)]
        raise RankDeficiencyError(_deficient_block(geq, blocks, svd_tol), rank, m)
    return (inv / np.outer(diag, diag)) @ cross


def _deficient_block(geq, blocks, tol) -> str:
    stop = 0
    s_max = np.linalg.svd(geq, compute_uv=False)[0]
    for name, width in blocks:
        stop += width
        s = np.linalg.svd(geq[:stop, :stop], compute_uv=False)
        if int(np.sum(s > tol * s_max)) < stop:
            return name
    return blocks[-1][0]


def _fit_pairs(x0, u0, x1, u1, d: Dictionary, svd_tol: float, region_id=None,
               op_x=None, op_u=None) -> KoopmanModel:
    psi0 = lift_many(x0, u0, d)
    psi1 = lift_many(x1, u1, d)
    if len(psi0) < d.dim + 1:
        raise ValueError(f"need at least {d.dim + 1} snapshot pairs, got {len(psi0)}")
    k_d = edmd_operator(psi0, psi1, svd_tol, d.blocks)
    op_x = np.mean(x0, axis=0) if op_x is None else np.asarray(op_x, dtype=float)
    op_u = np.mean(u0, axis=0) if op_u is None else np.asarray(op_u, dtype=float)
    model = KoopmanModel(k_d=k_d, a=np.zeros((NX, NX)), b=np.zeros((NX, NU)), dict=d,
                         svd_tol=svd_tol, region_id=region_id, op_x=op_x, op_u=op_u)
    if "x" in d.block_slices():
        a, b = extract_ab(model, op_x, op_u)
        pred = psi0 @ model.state_rows.T
        resid = np.linalg.norm(pred - x1, axis=1)
        model = replace(model, a=a, b=b, meta={
            "n_pairs": int(len(psi0)),
            "residual_bound": float(resid.max()),
            "step_r2": [float(v) for v in _r2_cols(pred - x0, x1 - x0)],
        })
    return model


def _r2_cols(pred, actual):
    ss_res = ((actual - pred) ** 2).sum(axis=0)
    ss_tot = ((actual - actual.mean(axis=0)) ** 2).sum(axis=0)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(ss_tot > 0, 1 - ss_res / ss_tot, np.nan)


def fit_edmd(data: TrajectoryDataset, d: Dictionary, svd_tol: float = 1e-8,
             region_id: int | None = None, pairs: np.ndarray | None = None) -> KoopmanModel:
    """Fit K_d on the dataset's within-episode snapshot pairs."""
    k = data.pair_indices() if pairs is None else np.asarray(pairs, dtype=int)
    return _fit_pairs(data.x[k], data.u[k], data.x[k + 1], data.u[k + 1], d, svd_tol,
                      region_id=region_id)


def extract_ab(model: KoopmanModel, x_op, u_op) -> tuple[np.ndarray, np.ndarray]:
    """Local (a, b) = P_x K_d^T (dPsi/dx, dPsi/du) at the operating point."""
    x_op = np.asarray(x_op, dtype=float)
    u_op = np.asarray(u_op, dtype=float)
    if not (np.all(np.isfinite(x_op)) and np.all(np.isfinite(u_op))):
        raise ValueError("operating point must be finite")
    rows = model.state_rows
    jx, ju = jacobians(x_op, u_op, model.dict)
    return rows @ jx, rows @ ju


def fit_output_map(data: TrajectoryDataset, model: KoopmanModel,
                   samples: np.ndarray | None = None) -> tuple[np.ndarray, float]:
    """Least-squares output row c with y ~ c Psi(x, u); returns (c, training R^2)."""
    idx = np.arange(len(data)) if samples is None else np.asarray(samples, dtype=int)
    y = data.y[idx]
    if np.ptp(y) == 0:
        raise ValueError("degenerate outputs: all readings equal")
    psi = lift_many(data.x[idx], data.u[idx], model.dict)
    c, *_ = np.linalg.lstsq(psi, y, rcond=None)
    return c, float(eval_metrics(psi @ c, y)["r2"])


def attach_output_map(model: KoopmanModel, data: TrajectoryDataset,
                      samples: np.ndarray | None = None) -> KoopmanModel:
    c, r2 = fit_output_map(data, model, samples)
    return replace(model, c=c, meta={**model.meta, "output_r2": r2})


def predict(model: KoopmanModel, x0, u_seq, horizon: int, guard: float = 1e6):
    """Roll the model forward, re-lifting from the projected state each step.

    Returns ``(states (h+1, 4), outputs (h,), diverged)``; on divergence the
    arrays are truncated at the last finite step.
    """
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    u_seq = np.asarray(u_seq, dtype=float).reshape(-1, NU)
    if len(u_seq) < horizon:
        raise ValueError("input sequence shorter than horizon")
    rows = model.state_rows
    xs = [np.asarray(x0, dtype=float)]
    ys = []
    for k in range(horizon):
        psi = lift_many(xs[-1], u_seq[k], model.dict)[0]
        nxt = rows @ psi
        if model.c is not None:
            ys.append(float(model.c @ psi))
        if not np.all(np.isfinite(nxt)) or np.max(np.abs(nxt)) > guard:
            return np.array(xs), np.array(ys), True
        xs.append(nxt)
    return np.array(xs), np.array(ys), False


# --------------------------------------------------------------------------
# regions

def path_points(nominal_path, n_regions: int) -> np.ndarray:
    """Arc-length-uniform midpoints of ``n_regions`` equal segments of a polyline."""
    path = np.asarray(nominal_path, dtype=float).reshape(-1, NX)
    seg = np.linalg.norm(np.diff(path, axis=0), axis=1)
    s = np.concatenate([[0.0], np.cumsum(seg)])
    if s[-1] <= 0:
        raise ValueError("nominal path has zero length")
    targets = (np.arange(n_regions) + 0.5) * s[-1] / n_regions
    return np.column_stack([np.interp(targets, s, path[:, j]) for j in range(NX)])


def assign_regions(points, centers) -> np.ndarray:
    """Nearest-center labels; ties go to the lowest index."""
    points = np.atleast_2d(points)
    dist = ((points[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
    return np.argmin(dist, axis=1)


def segment_regions(nominal_path, n_regions: int, data: TrajectoryDataset, d: Dictionary,
                    svd_tol: float = 1e-8) -> RegionSet:
    """Region-local EDMD models around arc-length-uniform centers on the path."""
    if n_regions < 1:
        raise ValueError("n_regions must be >= 1")
    if len(np.unique(data.x, axis=0)) < n_regions:
        raise ValueError(f"n_regions={n_regions} exceeds the distinct data clusters")
    centers = path_points(nominal_path, n_regions)
    pairs = data.pair_indices()
    labels = assign_regions(data.x[pairs], centers)
    global_model = None
    models, fallback = [], []
    for i in range(n_regions):
        mine = pairs[labels == i]
        model = None
        if len(mine) >= d.dim + 1:
            try:
                model = fit_edmd(data, d, svd_tol, region_id=i, pairs=mine)
                model = attach_output_map(model, data, mine)
            except (RankDeficiencyError, ValueError):
                model = None
        if model is None:
            if global_model is None:
                global_model = attach_output_map(fit_edmd(data, d, svd_tol), data, pairs)
            model = replace(global_model, region_id=i)
            fallback.append(True)
        else:
            fallback.append(False)
        models.append(model)
    return RegionSet(centers, tuple(models), tuple(fallback))


# --------------------------------------------------------------------------
# metrics and persistence

def eval_metrics(predicted, actual) -> dict:
    predicted = np.asarray(predicted, dtype=float).ravel()
    actual = np.asarray(actual, dtype=float).ravel()
    if predicted.shape != actual.shape or actual.size < 2:
        raise ValueError("need equal-length sequences of at least two samples")
    err = predicted - actual
    ss_tot = float(((actual - actual.mean()) ** 2).sum())
    r2 = 1.0 - float((err**2).sum()) / ss_tot if ss_tot > 0 else float("nan")
    return {"rmse": float(np.sqrt(np.mean(err**2))), "mae": float(np.mean(np.abs(err))),
            "max_ae": float(np.max(np.abs(err))), "r2": r2}


def save_model(path, model: KoopmanModel | RegionSet, extra: dict | None = None) -> None:
    kind = "region_set" if isinstance(model, RegionSet) else "koopman_model"
    doc = {"format": "saklqr-model", "version": MODEL_FORMAT_VERSION, "kind": kind,
           "model": model.to_dict(), "extra": extra or {}}
    Path(path).write_text(json.dumps(doc, indent=1))


def load_model(path):
    """Returns ``(model_or_regions, extra)``."""
    doc = json.loads(Path(path).read_text())
    if "version" not in doc:
        raise ValueError(f"{path}: model file lacks a version field")
    if doc["version"] != MODEL_FORMAT_VERSION:
        raise ValueError(f"{path}: unsupported model version {doc['version']}")
    cls = RegionSet if doc["kind"] == "region_set" else KoopmanModel
    return cls.from_dict(doc["model"]), doc.get("extra", {})
