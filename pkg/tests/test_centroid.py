import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from saklqr import centroid as ct

N = ct.GRID_DIM


def grid(cells):
    return ct.ForceGrid(np.asarray(cells, dtype=float))


def test_uniform_grid_centroid_is_center():
    assert ct.compute_centroid(grid(np.ones((N, N)))) == (7.5, 7.5)


def test_single_cell_centroid():
    g = np.zeros((N, N))
    g[3, 12] = 2.5
    assert ct.compute_centroid(grid(g)) == (3.0, 12.0)


def test_weighted_pair_centroid():
    g = np.zeros((N, N))
    g[0, 0], g[15, 15] = 1.0, 3.0
    assert ct.compute_centroid(grid(g)) == pytest.approx((11.25, 11.25))


def test_empty_grid_raises_no_contact():
    with pytest.raises(ct.NoContactError):
        ct.compute_centroid(grid(np.zeros((N, N))))


@pytest.mark.parametrize("bad", [np.ones((N, N - 1)), -np.ones((N, N)), np.full((N, N), np.nan)])
def test_grid_validation(bad):
    with pytest.raises(ValueError):
        ct.ForceGrid(bad)


def test_centroid_error_in_cm():
    # 3-4-5 cell offset at 0.625 cm pitch
    assert ct.centroid_error((10.5, 11.5), (7.5, 7.5)) == pytest.approx(3.125)
    assert ct.centroid_error((7.5, 7.5), (7.5, 7.5)) == 0.0


@given(st.tuples(st.floats(0, 15), st.floats(0, 15)), st.tuples(st.floats(0, 15), st.floats(0, 15)))
def test_centroid_error_symmetric(a, b):
    assert ct.centroid_error(a, b) == pytest.approx(ct.centroid_error(b, a))


# zero or comfortably normal, so scaling never underflows a loaded cell to zero
cell_grids = arrays(np.float64, (N, N), elements=st.one_of(st.just(0.0), st.floats(1e-6, 100)))


@settings(max_examples=1000)
@given(cell_grids, st.floats(1e-3, 1e3))
def test_centroid_scale_invariant_and_inside_hull(cells, alpha):
    if cells.sum() <= 0:
        with pytest.raises(ct.NoContactError):
            ct.compute_centroid(grid(cells))
        return
    cx, cy = ct.compute_centroid(grid(cells))
    sx, sy = ct.compute_centroid(grid(alpha * cells))
    assert sx == pytest.approx(cx, abs=1e-9) and sy == pytest.approx(cy, abs=1e-9)
    # inside the bounding box of the loaded cells, which contains their convex hull
    ii, jj = np.nonzero(cells)
    assert ii.min() - 1e-9 <= cx <= ii.max() + 1e-9
    assert jj.min() - 1e-9 <= cy <= jj.max() + 1e-9


def fuzzyen_brute(x, m, r):
    n = len(x)
    vecs = [x[i:i + m] for i in range(n - m)]
    sims = [np.exp(-max(abs(a - b) for a, b in zip(vecs[i], vecs[j])) / r)
            for i, j in itertools.permutations(range(len(vecs)), 2)]
    return -np.log(np.mean(sims))


def test_fuzzyen_of_constant_is_zero():
    assert ct.fuzzy_entropy(np.full(40, 3.2), 2, 0.1) == 0.0


def test_fuzzyen_matches_brute_force():
    x = [0.0, 1.0, 0.0, 2.0, 1.0, 3.0]
    assert ct.fuzzy_entropy(x, 2, 1.0) == pytest.approx(fuzzyen_brute(x, 2, 1.0), rel=1e-12)


@given(st.lists(st.floats(-1e3, 1e3), min_size=4, max_size=40), st.integers(1, 2), st.floats(1e-2, 10))
def test_fuzzyen_non_negative(x, m, r):
    assert ct.fuzzy_entropy(x, m, r) >= 0.0


def test_fuzzyen_grows_with_noise():
    base = np.sin(np.linspace(0, 4 * np.pi, 200))
    noise = np.random.default_rng(1).standard_normal(200)
    values = [ct.fuzzy_entropy(base + a * noise, 2, 0.2) for a in (0.0, 0.05, 0.1, 0.2, 0.4)]
    assert all(b > a for a, b in zip(values, values[1:]))


def test_fuzzyen_rejects_short_series_and_bad_tolerance():
    with pytest.raises(ValueError):
        ct.fuzzy_entropy([1.0, 2.0, 3.0], 2, 1.0)
    with pytest.raises(ValueError):
        ct.fuzzy_entropy(np.arange(10.0), 2, 0.0)


def centered_grid(shift=0):
    g = np.zeros((N, N))
    g[7 + shift:9 + shift, 7:9] = 1.0
    return grid(g)


def test_regulate_on_target_is_neutral():
    cmd, mon = ct.regulate(ct.CentroidMonitor(), centered_grid())
    assert cmd.roll_adjust == 0.0 and cmd.force_scale == 1.0
    assert not cmd.smooth_trajectory and not cmd.fault
    assert mon.d_history == (0.0,)


def test_regulate_rolls_against_offset():
    cmd, _ = ct.regulate(ct.CentroidMonitor(), centered_grid(4))  # 2.5 cm toward +x
    assert cmd.roll_adjust < 0
    assert 0.5 <= cmd.force_scale < 1.0


def test_regulate_without_contact_faults_and_keeps_state():
    mon = ct.CentroidMonitor(d_history=(0.1, 0.2))
    cmd, after = ct.regulate(mon, grid(np.zeros((N, N))))
    assert cmd.fault and cmd.roll_adjust == 0.0
    assert after == mon


def test_correction_rate_doubles_when_entropy_crosses_threshold():
    rng = np.random.default_rng(3)
    mon = ct.CentroidMonitor()
    prev_freq = mon.correction_freq
    crossed = False
    for k in range(60):
        shift = 0 if k < 20 else int(rng.integers(-4, 5))
        cmd, mon = ct.regulate(mon, centered_grid(shift))
        if cmd.smooth_trajectory:
            assert cmd.correction_freq == min(2 * prev_freq, mon.max_correction_rate)
            crossed = True
            break
        assert cmd.correction_freq == mon.correction_rate
        prev_freq = cmd.correction_freq
    assert crossed
    assert mon.last_entropy > mon.fuzzyen_max


def test_regulate_is_deterministic():
    grids = [centered_grid(s) for s in (0, 1, -2, 3, 0, 4, -4, 2)]

    def replay():
        mon, out = ct.CentroidMonitor(), []
        for g in grids:
            cmd, mon = ct.regulate(mon, g)
            out.append(cmd)
        return out, mon
    assert replay() == replay()


def test_force_scale_bounds_enforced():
    with pytest.raises(ValueError):
        ct.CorrectionCommand(force_scale=1.6)


def test_coverage_percentage():
    assert ct.coverage_percentage(grid(np.ones((N, N))), 0.1) == 100.0
    assert ct.coverage_percentage(grid(np.zeros((N, N))), 0.1) == 0.0
    g = np.zeros((N, N))
    g[:8, :8] = 0.5
    assert ct.coverage_percentage(grid(g), 0.1) == 25.0
    with pytest.raises(ValueError):
        ct.coverage_percentage(grid(g), 0.0)
