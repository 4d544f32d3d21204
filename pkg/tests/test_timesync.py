import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from vicalib import synth, timesync
from vicalib.core import RigidMotion, Trajectory, quat_exp, transform_trajectory
from vicalib.errors import BadWindow, BoundaryMinimum, EmptyStream, NoOverlap, NoSignal
from vicalib.imu import ImuData

STEP = timesync.DEFAULT_STEP_NS


def rig(offset_ns=0, sigma_deg=0.1, seed=0, **kw):
    cfg = synth.calib_config(seed=seed, time_offset_ns=offset_ns, mocap_sigma_rot=np.deg2rad(sigma_deg), **kw)
    bundle = synth.make_trajectory(cfg)
    return synth.sample_imu(bundle, cfg), synth.sample_mocap(bundle, cfg), cfg


@pytest.fixture(scope="module")
def base():
    return rig(12_345_600)


def _line(p):
    n = len(p)
    return Trajectory(np.arange(n) * 1000, np.tile([1.0, 0, 0, 0], (n, 1)), p)


def test_median_constant_unchanged():
    traj = _line(np.tile([1.0, -2.0, 3.0], (20, 1)))
    np.testing.assert_array_equal(timesync.median_filter_positions(traj, 5).p, traj.p)


def test_median_removes_spike():
    p = np.tile([0.3, -0.2, 1.0], (21, 1))
    spiked = p.copy()
    spiked[10, 0] += 1.0
    out = timesync.median_filter_positions(_line(spiked), 5).p
    np.testing.assert_allclose(out, p, atol=1e-12)


@given(st.floats(-5, 5), st.floats(-5, 5), st.sampled_from([3, 5, 7, 9]))
def test_median_ramp_unchanged(a, b, w):
    p = np.outer(np.arange(30), [a, b, 1.0]) + 0.5
    out = timesync.median_filter_positions(_line(p), w)
    np.testing.assert_allclose(out.p, p, atol=1e-12)


def test_median_keeps_orientations(base):
    _, mocap, _ = base
    out = timesync.median_filter_positions(mocap, 5)
    assert out.q is mocap.q or np.array_equal(out.q, mocap.q)
    assert len(out) == len(mocap)


@pytest.mark.parametrize("w", [1, 2, 4, 0, -3])
def test_median_bad_window(w):
    with pytest.raises(BadWindow):
        timesync.median_filter_positions(_line(np.zeros((5, 3))), w)


def _imu(t):
    t = np.asarray(t, dtype=np.int64)
    return ImuData(t, np.zeros((len(t), 3)), np.zeros((len(t), 3)))


def test_coarse_align():
    assert timesync.coarse_align(_imu([5, 6]), _line(np.zeros((2, 3))).shifted(5)) == 0
    assert timesync.coarse_align(_imu([0, 1]), _line(np.zeros((2, 3))).shifted(2_000_000_000)) == 2_000_000_000
    with pytest.raises(EmptyStream):
        timesync.coarse_align(_imu([]), _line(np.zeros((2, 3))))


def test_coarse_align_synthetic():
    imu, mocap, _ = rig(12_300_000, sigma_deg=0.0)
    assert abs(timesync.coarse_align(imu, mocap) - 12_300_000) <= 1e9 / 200


def test_grid_self_alignment():
    t = np.arange(0, 5_000_000_000, 1_000_000, dtype=np.int64)
    g = 1.0 + np.sin(t * 1e-9 * 3.0) ** 2
    est = timesync.grid_search_offset((t, g), (t + 3 * STEP, g), 0, 20 * STEP, STEP)
    assert est.offset_ns == 3 * STEP
    assert est.cost_curve[:, 1].min() < 1e-20


def test_grid_synthetic_within_step(base):
    imu, mocap, cfg = base
    t_m, m = timesync.mocap_magnitudes(mocap)
    t_g, g = timesync.gyro_magnitudes(imu, cfg.intrinsics)
    est = timesync.grid_search_offset((t_g, g), (t_m, m), timesync.coarse_align(imu, mocap))
    assert abs(est.offset_ns - cfg.time_offset_ns) <= STEP


def test_grid_no_overlap():
    t = np.arange(0, 500_000_000, 5_000_000, dtype=np.int64)
    with pytest.raises(NoOverlap):
        timesync.grid_search_offset((t, np.ones(len(t))), (t, np.ones(len(t))), 0)


def test_pure_translation_no_signal():
    cfg = synth.RigConfig(duration_s=10.0, translation=synth.SinusoidMotion(amplitude=[[1.0], [0.5], [0.2]], frequency=[[0.5], [0.3], [0.2]], phase=np.zeros((3, 1))))
    bundle = synth.make_trajectory(cfg)
    with pytest.raises(NoSignal):
        timesync.time_align(synth.sample_imu(bundle, cfg), synth.sample_mocap(bundle, cfg))


def _curve(costs, step=100_000.0):
    return np.column_stack([np.array([-1.0, 0.0, 1.0]) * step, costs])


def test_parabola_symmetric():
    assert timesync.refine_parabola(_curve([1.0, 0.5, 1.0])) == 0.0


def test_parabola_closed_form():
    # vertex -(c2 - c0) / (2 (c0 + c2 - 2 c1)) * h
    expected = -(0.7 - 1.0) / (2 * (1.0 + 0.7 - 2 * 0.5)) * 100_000
    np.testing.assert_allclose(timesync.refine_parabola(_curve([1.0, 0.5, 0.7])), expected, rtol=1e-12)
    np.testing.assert_allclose(expected, 21_428.571428571428, rtol=1e-12)


@given(st.floats(0.0, 10.0), st.floats(0.0, 10.0), st.floats(0.0, 10.0))
def test_parabola_stays_within_one_step(a, b, c):
    lo = min(a, c)
    curve = _curve([a, min(b, lo), c])
    x = timesync.refine_parabola(curve, 1)
    assert -100_000 <= x <= 100_000


def test_parabola_boundary():
    with pytest.raises(BoundaryMinimum):
        timesync.refine_parabola(_curve([0.1, 0.5, 1.0]))


@pytest.mark.parametrize("offset", [0, 12_300_000, 12_345_600])
def test_time_align_recovers_offset(offset):
    imu, mocap, cfg = rig(offset, seed=1)
    est = timesync.time_align(imu, mocap, intrinsics=cfg.intrinsics)
    assert est.refined
    assert abs(est.offset_ns - offset) < 10_000


def test_time_align_beyond_coarse_guess():
    # MoCap starts late, so the arrival-based guess is off by the whole offset
    imu, mocap, cfg = rig(-250_000_000, seed=2, mocap_start_s=0.25)
    assert timesync.coarse_align(imu, mocap) == 0
    est = timesync.time_align(imu, mocap, intrinsics=cfg.intrinsics)
    assert abs(est.offset_ns + 250_000_000) < 10_000


def test_refined_within_one_step_of_grid_minimum(base):
    imu, mocap, cfg = base
    est = timesync.time_align(imu, mocap, intrinsics=cfg.intrinsics)
    grid_min = est.cost_curve[np.argmin(est.cost_curve[:, 1]), 0]
    assert abs(est.offset_ns - grid_min) <= STEP
    t, g, m = est.aligned
    assert len(t) == len(g) == len(m)


@pytest.mark.parametrize("delta", [1_000_000, -1_000_000, 100_000_000, -100_000_000])
def test_shift_equivariance(base, delta):
    imu, mocap, cfg = base
    a = timesync.time_align(imu, mocap, intrinsics=cfg.intrinsics).offset_ns
    b = timesync.time_align(imu, mocap.shifted(delta), intrinsics=cfg.intrinsics).offset_ns
    assert abs(b - (a + delta)) < 10_000


def test_cost_invariant_to_global_rotation(base):
    imu, mocap, cfg = base
    S = RigidMotion(quat_exp([0.4, -1.2, 2.0]), [3.0, -1.0, 0.5])
    rotated = transform_trajectory(S, mocap)
    a = timesync.time_align(imu, mocap, intrinsics=cfg.intrinsics)
    b = timesync.time_align(imu, rotated, intrinsics=cfg.intrinsics)
    np.testing.assert_allclose(a.cost_curve, b.cost_curve, atol=1e-12)


def test_smoothing_is_zero_phase():
    t = np.arange(0, 4_000_000_000, 5_000_000, dtype=np.int64)
    w = np.column_stack([np.sin(2 * np.pi * 0.5 * t * 1e-9)] * 3)
    ts, ws = timesync.smooth_rates(t, w, 0.04)
    # a pure sinusoid is only attenuated, never delayed; gain of the sampled symmetric kernel
    dt = 0.005
    k = np.arange(-32, 33) * dt
    kern = np.exp(-0.5 * (k / 0.04) ** 2)
    gain = np.sum(kern * np.cos(2 * np.pi * 0.5 * k)) / kern.sum()
    np.testing.assert_allclose(ws[:, 0], gain * np.sin(2 * np.pi * 0.5 * ts * 1e-9), atol=1e-12)
