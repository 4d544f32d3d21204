"""IMU intrinsics: axis scaling / misalignment matrices and biases.

Calibrated measurements follow

    a_cal = M_a a_raw - b_a
    w_cal = M_g w_raw - b_g

with ``M_a`` lower triangular (the accelerometer triad defines the IMU frame,
so its three rotational degrees of freedom are fixed) and all nine entries of
``M_g`` free. Both estimators are linear least squares on paired raw and
reference signals.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import quat_conj, quat_log, quat_multiply, quat_to_matrix
from .errors import DegenerateExcitation, SingularMatrix
from .imu import ImuData, ImuSample

GRAVITY = 9.80665
GRAVITY_W = np.array([0.0, 0.0, -GRAVITY])

MAX_CONDITION = 1e6
_AXES = ("x", "y", "z", "bias")


@dataclass
class ImuIntrinsics:
    M_a: np.ndarray = field(default_factory=lambda: np.eye(3))
    M_g: np.ndarray = field(default_factory=lambda: np.eye(3))
    b_a: np.ndarray = field(default_factory=lambda: np.zeros(3))
    b_g: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        self.M_a = np.array(self.M_a, dtype=np.float64).reshape(3, 3)
        self.M_g = np.array(self.M_g, dtype=np.float64).reshape(3, 3)
        self.b_a = np.array(self.b_a, dtype=np.float64).reshape(3)
        self.b_g = np.array(self.b_g, dtype=np.float64).reshape(3)
        if np.any(np.triu(self.M_a, 1) != 0):
            raise ValueError("M_a must be lower triangular")

    @classmethod
    def identity(cls):
        return cls()

    def check_invertible(self):
        for name in ("M_a", "M_g"):
            c = np.linalg.cond(getattr(self, name))
            if not np.isfinite(c) or c > MAX_CONDITION:
                raise SingularMatrix(f"{name} is singular or ill-conditioned (cond={c:.3g})")

    def __eq__(self, other):
        if not isinstance(other, ImuIntrinsics):
            return NotImplemented
        return all(np.array_equal(getattr(self, k), getattr(other, k)) for k in ("M_a", "M_g", "b_a", "b_g"))


def apply_calibration(raw, intr: ImuIntrinsics):
    """Map raw measurements to calibrated ones.

    Accepts a single :class:`ImuSample` or a batch :class:`ImuData`; the
    timestamp and temperature are carried over unchanged.
    """
    if isinstance(raw, ImuSample):
        return ImuSample(
            raw.t,
            intr.M_g @ raw.gyro - intr.b_g,
            intr.M_a @ raw.accel - intr.b_a,
            raw.temp_c,
        )
    return ImuData(
        raw.t,
        raw.gyro @ intr.M_g.T - intr.b_g,
        raw.accel @ intr.M_a.T - intr.b_a,
        raw.temp_c,
    )


def invert_calibration(clean, intr: ImuIntrinsics):
    """Inverse of :func:`apply_calibration`: manufacture raw measurements."""
    intr.check_invertible()
    Mg_inv = np.linalg.inv(intr.M_g)
    Ma_inv = np.linalg.inv(intr.M_a)
    if isinstance(clean, ImuSample):
        return ImuSample(
            clean.t,
            Mg_inv @ (clean.gyro + intr.b_g),
            Ma_inv @ (clean.accel + intr.b_a),
            clean.temp_c,
        )
    return ImuData(
        clean.t,
        (clean.gyro + intr.b_g) @ Mg_inv.T,
        (clean.accel + intr.b_a) @ Ma_inv.T,
        clean.temp_c,
    )


def _check_excitation(X, min_singular, what):
    # columns are normalised so the threshold is scale free
    scale = np.linalg.norm(X, axis=0)
    scale[scale == 0] = 1.0
    Xn = X / scale
    _, s, Vt = np.linalg.svd(Xn, full_matrices=False)
    if s[-1] < min_singular * s[0]:
        weak = _AXES[int(np.argmax(np.abs(Vt[-1])))]
        raise DegenerateExcitation(
            f"{what}: insufficient excitation (weak direction dominated by '{weak}', "
            f"relative singular value {s[-1] / s[0]:.2e})",
            axis=weak,
        )


def estimate_gyro_intrinsics(raw_gyro, reference_omega, min_singular=1e-3):
    """Fit ``M_g`` (all 9 entries) and ``b_g`` minimising
    ``sum |M_g w_raw - b_g - w_ref|^2``. Returns ``(M_g, b_g)``.
    """
    raw = np.asarray(raw_gyro, dtype=np.float64).reshape(-1, 3)
    ref = np.asarray(reference_omega, dtype=np.float64).reshape(-1, 3)
    if len(raw) != len(ref):
        raise ValueError("raw and reference series differ in length")
    if len(raw) < 12:
        raise DegenerateExcitation(f"need at least 12 samples, got {len(raw)}")
    X = np.column_stack([raw, -np.ones(len(raw))])
    _check_excitation(X, min_singular, "gyroscope")
    sol, *_ = np.linalg.lstsq(X, ref, rcond=None)
    return sol[:3].T.copy(), sol[3].copy()


def estimate_accel_intrinsics(raw_accel, reference_specific_force, min_singular=1e-3):
    """Fit lower-triangular ``M_a`` (6 entries) and ``b_a``.

    Row ``k`` of ``M_a`` only involves raw axes ``0..k``, so the problem splits
    into three independent least-squares fits. Entries above the diagonal are
    exactly zero. Returns ``(M_a, b_a)``.
    """
    raw = np.asarray(raw_accel, dtype=np.float64).reshape(-1, 3)
    ref = np.asarray(reference_specific_force, dtype=np.float64).reshape(-1, 3)
    if len(raw) != len(ref):
        raise ValueError("raw and reference series differ in length")
    if len(raw) < 12:
        raise DegenerateExcitation(f"need at least 12 samples, got {len(raw)}")
    X = np.column_stack([raw, -np.ones(len(raw))])
    _check_excitation(X, min_singular, "accelerometer")
    M = np.zeros((3, 3))
    b = np.zeros(3)
    for k in range(3):
        Xk = np.column_stack([raw[:, : k + 1], -np.ones(len(raw))])
        sol, *_ = np.linalg.lstsq(Xk, ref[:, k], rcond=None)
        M[k, : k + 1] = sol[:-1]
        b[k] = sol[-1]
    return M, b


def _richardson_rates(traj):
    """Body rates at samples ``2..N-3``: ``(4 D_h - D_2h) / 3`` of the
    central rotation-log differences, cancelling the ``h^2`` error term."""
    q = traj.q
    ts = traj.times_s
    d1 = quat_log(quat_multiply(quat_conj(q[1:-3]), q[3:-1])) / (ts[3:-1] - ts[1:-3])[:, None]
    d2 = quat_log(quat_multiply(quat_conj(q[:-4]), q[4:])) / (ts[4:] - ts[:-4])[:, None]
    return (4.0 * d1 - d2) / 3.0


def _five_point_accel(ts, p):
    """Second derivative at samples ``2..N-3`` from the five-point stencil
    (uniform spacing assumed; the mean local step is used)."""
    h = (ts[4:] - ts[:-4]) / 4.0
    return (-p[:-4] + 16.0 * p[1:-3] - 30.0 * p[2:-2] + 16.0 * p[3:-1] - p[4:]) / (12.0 * h * h)[:, None]


def mocap_references(mocap, R_MI, t_MI, time_shift_ns=0, gravity=GRAVITY_W):
    """Reference body rates and specific forces in the IMU frame from MoCap.

    ``mocap`` holds ``T_WM`` stamped in MoCap time and ``time_shift_ns`` is the
    MoCap minus IMU clock offset. Rates come from rotation-log central
    differences, accelerations of the IMU origin ``p_WM + R_WM t_MI`` from a
    five-point stencil; both use two neighbours on each side, so the first
    and last two samples are dropped.

    MoCap rotation noise enters both the lever-arm term ``R_WM t_MI`` of
    the stencil centre and the rotation into the IMU frame. Their product
    leaves an offset of roughly ``5 sigma_rot^2 t_MI / h^2`` along ``t_MI``
    that the accelerometer bias absorbs. Returns ``(t_ns, omega, f)`` with
    timestamps in IMU time.
    """
    if len(mocap) < 5:
        raise DegenerateExcitation(f"need at least 5 MoCap poses, got {len(mocap)}")
    R_MI = np.asarray(R_MI, dtype=np.float64)
    traj = mocap.shifted(-int(time_shift_ns))
    ts = traj.times_s
    omega = _richardson_rates(traj) @ R_MI  # R_MI^T w_M, row-wise
    R_WM = quat_to_matrix(traj.q)
    p_WI = traj.p + R_WM @ np.asarray(t_MI, dtype=np.float64)
    acc = _five_point_accel(ts, p_WI)
    R_WI = R_WM[2:-2] @ R_MI
    f = np.einsum("nji,nj->ni", R_WI, acc - np.asarray(gravity))
    return traj.t[2:-2], omega, f


def kernel_smooth(t_src, y_src, t_query, sigma_s):
    """Normalised Gaussian kernel average of ``y_src`` evaluated at ``t_query``.

    Weights sum to one, so constants (and hence biases) pass unchanged and
    any affine relation between two signals survives smoothing both.
    Samples beyond four sigmas are ignored.
    """
    t_src = np.asarray(t_src, dtype=np.int64)
    y = np.asarray(y_src, dtype=np.float64)
    tq = np.asarray(t_query, dtype=np.int64)
    half = int(np.ceil(4.0 * sigma_s * 1e9))
    lo = np.searchsorted(t_src, tq - half, side="left")
    hi = np.searchsorted(t_src, tq + half, side="right")
    width = int(np.max(hi - lo)) if len(tq) else 0
    num = np.zeros((len(tq),) + y.shape[1:])
    den = np.zeros(len(tq))
    for m in range(width):
        k = lo + m
        ok = k < hi
        kk = np.where(ok, k, 0)
        dt = (tq - t_src[kk]) * 1e-9
        w = np.where(ok, np.exp(-0.5 * (dt / sigma_s) ** 2), 0.0)
        num += w.reshape((-1,) + (1,) * (y.ndim - 1)) * y[kk]
        den += w
    return num / den.reshape((-1,) + (1,) * (y.ndim - 1))


@dataclass
class PairedSignals:
    t: np.ndarray
    gyro_raw: np.ndarray
    accel_raw: np.ndarray
    omega_ref: np.ndarray
    f_ref: np.ndarray


DEFAULT_SMOOTHING_S = 0.05


def paired_signals(imu: ImuData, mocap, R_MI, t_MI, time_shift_ns=0, gravity=GRAVITY_W, smoothing_s=DEFAULT_SMOOTHING_S):
    """Raw IMU readings and MoCap references on a common time base.

    With ``smoothing_s > 0`` both sides are kernel-smoothed with the same
    Gaussian at the MoCap reference instants that lie four sigmas inside
    both streams; this suppresses differentiation noise without biasing the
    fit, because the calibration model is affine. With ``smoothing_s == 0``
    raw IMU readings are linearly interpolated to the reference instants.
    """
    t_ref, omega, f = mocap_references(mocap, R_MI, t_MI, time_shift_ns, gravity)
    margin = int(np.ceil(4.0 * smoothing_s * 1e9))
    lo = max(imu.t[0], t_ref[0]) + margin
    hi = min(imu.t[-1], t_ref[-1]) - margin
    q = t_ref[(t_ref >= lo) & (t_ref <= hi)]
    if len(q) < 12:
        raise DegenerateExcitation("IMU and MoCap overlap too little for intrinsics estimation")
    if smoothing_s > 0:
        raw = kernel_smooth(imu.t, np.hstack([imu.gyro, imu.accel]), q, smoothing_s)
        ref = kernel_smooth(t_ref, np.hstack([omega, f]), q, smoothing_s)
    else:
        tq = (q - imu.t[0]).astype(np.float64)
        ti = (imu.t - imu.t[0]).astype(np.float64)
        raw = np.column_stack([np.interp(tq, ti, c) for c in np.hstack([imu.gyro, imu.accel]).T])
        ref = np.hstack([omega, f])[np.isin(t_ref, q)]
    return PairedSignals(q, raw[:, :3], raw[:, 3:], ref[:, :3], ref[:, 3:])


def calibrate_from_mocap(imu: ImuData, mocap, T_MI, time_shift_ns=0, gravity=GRAVITY_W, smoothing_s=DEFAULT_SMOOTHING_S):
    """Estimate all intrinsics from an IMU stream and time-aligned MoCap."""
    sig = paired_signals(imu, mocap, T_MI.R, T_MI.translation, time_shift_ns, gravity, smoothing_s)
    M_g, b_g = estimate_gyro_intrinsics(sig.gyro_raw, sig.omega_ref)
    M_a, b_a = estimate_accel_intrinsics(sig.accel_raw, sig.f_ref)
    return ImuIntrinsics(M_a, M_g, b_a, b_g)
