"""End-to-end acceptance checks; each prints a PASS/FAIL line in the terminal summary."""

import time

import numpy as np
import pytest
from scipy.optimize import linprog

from saklqr import centroid as cn
from saklqr import control as ct
from saklqr import koopman as kp
from saklqr import observables as ob
from saklqr.harness import cli
from saklqr.harness import experiments as ex
from saklqr.harness.config import ExperimentConfig
from conftest import linear_system

NX, NU = ob.NX, ob.NU


def linear_dataset(a, b, n=400, episodes=3, seed=0):
    r = np.random.default_rng(seed)
    xs, us, starts = [], [], []
    for _ in range(episodes):
        starts.append(len(xs))
        x = r.normal(size=NX)
        for _ in range(n):
            u = r.normal(size=NU)
            xs.append(x)
            us.append(u)
            x = a @ x + b @ u
    xs, us = np.array(xs), np.array(us)
    return kp.TrajectoryDataset(xs, us, xs[:, 0], 0.002, tuple(starts))


def test_c1_edmd_recovers_linear_system(acceptance):
    t0 = time.perf_counter()
    worst = 0.0
    for seed in range(5):
        a, b = linear_system(seed=seed)
        model = kp.fit_edmd(linear_dataset(a, b, seed=seed), ob.Dictionary("Raw"))
        worst = max(worst, np.abs(model.a - a).max(), np.abs(model.b - b).max())
    dt = time.perf_counter() - t0
    passed, line = acceptance(1, "EDMD raw-dictionary linear oracle", worst < 1e-8, dt, 5,
                              f"max abs error {worst:.2e}")
    assert passed, line


def test_c2_scalar_riccati(acceptance):
    t0 = time.perf_counter()
    one = np.ones((1, 1))
    p = ct.solve_riccati(one, one, one, one)
    k = ct.feedback_gain(one, one, p, one)
    golden = (1 + np.sqrt(5)) / 2
    err_p, err_k = abs(p[0, 0] - golden), abs(k[0, 0] - golden / (1 + golden))
    dt = time.perf_counter() - t0
    passed, line = acceptance(2, "scalar Riccati", max(err_p, err_k) < 1e-9, dt, 1,
                              f"|dP|={err_p:.1e} |dk|={err_k:.1e}")
    assert passed, line


@pytest.fixture(scope="module")
def observable_ranking():
    t0 = time.perf_counter()
    ranked = ex.run_observable_comparison(ExperimentConfig())
    return {r["dictionary"]: r for r in ranked}, time.perf_counter() - t0


def test_c3_combined_output_fit(acceptance, observable_ranking):
    rows, dt = observable_ranking
    r2 = rows["Combined"]["r2"]
    passed, line = acceptance(3, "held-out output R^2 >= 0.95", r2 >= 0.95, dt, 60, f"R^2={r2:.4f}")
    assert passed, line


def test_c4_combined_beats_alternatives(acceptance, observable_ranking):
    rows, dt = observable_ranking
    best = rows["Combined"]["r2"]
    others = {k: v["r2"] for k, v in rows.items() if k != "Combined"}
    detail = " ".join(f"{k}={v['r2']:.4f}" for k, v in sorted(rows.items(), key=lambda kv: -kv[1]["r2"]))
    passed, line = acceptance(4, "Combined R^2 above Poly2/Poly3/RBF/Fourier",
                              all(best > v for v in others.values()), dt, 180, detail)
    assert passed, line


def test_c5_tracking_ordering(acceptance):
    t0 = time.perf_counter()
    report = ex.run_tracking_experiment(ExperimentConfig())
    dt = time.perf_counter() - t0
    ok, parts = True, []
    for case in ("sine_0.5hz", "sine_2hz", "triangle_0.5hz", "triangle_2hz"):
        r = {c: report.tracking[f"{case}/{c}"]["rmse"] for c in ("saklqr", "smc", "pid")}
        case_ok = r["saklqr"] <= 0.9 * r["smc"] and r["smc"] <= 0.9 * r["pid"]
        ok &= case_ok
        parts.append(f"{case}: {r['saklqr']:.3f}/{r['smc']:.3f}/{r['pid']:.3f}"
                     f"{'' if case_ok else '*'}")
    passed, line = acceptance(5, "RMSE SA-KLQR < SMC < PID with 10% margins", ok, dt, 300,
                              "rmse saklqr/smc/pid " + ", ".join(parts))
    assert passed, line


def test_c6_centroid_regulation(acceptance):
    t0 = time.perf_counter()
    runs = ex.run_centroid_ablation(ExperimentConfig()).runs
    dt = time.perf_counter() - t0
    off, on = runs["regulator_off"], runs["regulator_on"]
    drop = 1 - on["mean_centroid_error_cm"] / off["mean_centroid_error_cm"]
    ok = drop >= 0.4 and on["coverage_pct"] > off["coverage_pct"]
    passed, line = acceptance(6, "centroid regulation error and coverage", ok, dt, 120,
                              f"error -{100 * drop:.1f}%, coverage {off['coverage_pct']:.1f} -> "
                              f"{on['coverage_pct']:.1f}%")
    assert passed, line


def in_hull(point, pts):
    n = len(pts)
    res = linprog(np.zeros(n), A_eq=np.vstack([pts.T, np.ones(n)]), b_eq=np.r_[point, 1.0],
                  bounds=(0, None), method="highs")
    return res.status == 0


def test_c7_property_suites(acceptance):
    r = np.random.default_rng(7)
    t0 = time.perf_counter()
    fails = []

    q = ct.Quaternion(0.0, 0.0, 0.0, 1.0)
    for th in r.uniform(-0.01, 0.01, 10**6):
        q = ct.apply_rotation(q, ct.roll_increment(th))
    if abs(q.norm - 1) > 1e-9:
        fails.append("quaternion norm")

    k_prev, k_sel = r.normal(size=(54, 54)), r.normal(size=(54, 54))
    gap0, k = np.linalg.norm(k_prev - k_sel), k_prev
    for n in range(1, 51):
        k = ct.blend_operator(k, k_sel, 0.2)
        if np.linalg.norm(k - k_sel) > 0.8**n * gap0 * (1 + 1e-12):
            fails.append(f"blend contraction at n={n}")
            break

    for _ in range(1000):
        shape = (cn.GRID_DIM, cn.GRID_DIM)
        cells = r.exponential(size=shape) * (r.random(shape) < r.uniform(0.02, 1))
        if cells.sum() == 0:
            cells[r.integers(16), r.integers(16)] = 1.0
        c = np.array(cn.compute_centroid(cn.ForceGrid(cells)))
        c2 = np.array(cn.compute_centroid(cn.ForceGrid(cells * r.uniform(1e-3, 1e3))))
        if np.abs(c - c2).max() > 1e-9 or not in_hull(c, np.argwhere(cells > 0).astype(float)):
            fails.append("centroid scale/hull")
            break

    if cn.fuzzy_entropy(np.full(50, 2.0), 2, 0.2) != 0.0:
        fails.append("fuzzyen constant")
    if any(cn.fuzzy_entropy(r.normal(size=50) * s, 2, 0.2) < 0 for s in (0.01, 0.1, 1, 10)):
        fails.append("fuzzyen sign")

    centers = r.normal(size=(8, NX))
    for x in r.normal(size=(1000, NX)) * 2:
        brute = min(range(8), key=lambda i: (sum((x - centers[i]) ** 2), i))
        if ct.select_operator(x, centers) != brute:
            fails.append("select_operator")
            break

    dt = time.perf_counter() - t0
    passed, line = acceptance(7, "property suites", not fails, dt, 30, ", ".join(fails) or "all hold")
    assert passed, line


def test_c8_cli_csv_rerun_identical(acceptance, tmp_path):
    t0 = time.perf_counter()
    outs = [tmp_path / "a", tmp_path / "b"]
    for out in outs:
        for cmd in ("compare", "observables", "centroid-ablation"):
            assert cli.main([cmd, "--seed", "0", "--out", str(out)]) == 0
    csvs = sorted(p.name for p in outs[0].glob("*.csv"))
    diff = [n for n in csvs if (outs[0] / n).read_bytes() != (outs[1] / n).read_bytes()]
    dt = time.perf_counter() - t0
    passed, line = acceptance(8, "CLI CSV output byte-identical on rerun", bool(csvs) and not diff, dt,
                              120, f"{len(csvs)} files compared, {len(diff)} differ")
    assert passed, line
