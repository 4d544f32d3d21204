"""Synthetic sensor rig.

Produces an analytic ground-truth motion (sum of sinusoids on position and on
the rotation vector) and from it corrupted IMU, MoCap, hand-eye pair,
exposure and vignette-calibration streams with known parameters.

Random numbers come from numpy's PCG64 seeded through
``SeedSequence(seed, spawn_key=(channel,))`` with one fixed channel id per
noise source (see ``CHANNELS``), so each stream is reproducible on its own and
adding a stream never perturbs the others.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .core import (
    RigidMotion,
    Trajectory,
    quat_exp,
    quat_multiply,
    quat_to_matrix,
)
from .imu import ImuData
from .imucal import GRAVITY_W, ImuIntrinsics, invert_calibration

CHANNELS = {
    "accel_white": 1,
    "accel_walk": 2,
    "gyro_white": 3,
    "gyro_walk": 4,
    "mocap_rot": 5,
    "mocap_trans": 6,
    "mocap_glitch": 7,
    "pairs": 8,
    "exposure": 9,
    "vignette": 10,
    "trajectory": 11,
    "vignette_noise": 12,
}


def rng_for(seed, channel):
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(CHANNELS[channel],)))


@dataclass
class SinusoidMotion:
    """Per-axis ``offset + rate*t + sum_k A_k sin(2 pi f_k t + phase_k)``."""

    offset: np.ndarray = field(default_factory=lambda: np.zeros(3))
    rate: np.ndarray = field(default_factory=lambda: np.zeros(3))
    amplitude: np.ndarray = field(default_factory=lambda: np.zeros((3, 0)))
    frequency: np.ndarray = field(default_factory=lambda: np.zeros((3, 0)))
    phase: np.ndarray = field(default_factory=lambda: np.zeros((3, 0)))

    def __post_init__(self):
        self.offset = np.asarray(self.offset, dtype=np.float64).reshape(3)
        self.rate = np.asarray(self.rate, dtype=np.float64).reshape(3)
        self.amplitude = np.asarray(self.amplitude, dtype=np.float64).reshape(3, -1)
        k = self.amplitude.shape[1]
        self.frequency = np.asarray(self.frequency, dtype=np.float64).reshape(3, k)
        self.phase = np.asarray(self.phase, dtype=np.float64).reshape(3, k)

    def _arg(self, t):
        w = 2 * np.pi * self.frequency
        return w, w[None] * t[:, None, None] + self.phase[None]

    def value(self, t):
        t = np.atleast_1d(np.asarray(t, dtype=np.float64))
        _, arg = self._arg(t)
        return self.offset + self.rate * t[:, None] + np.sum(self.amplitude * np.sin(arg), axis=2)

    def d1(self, t):
        t = np.atleast_1d(np.asarray(t, dtype=np.float64))
        w, arg = self._arg(t)
        return self.rate + np.sum(self.amplitude * w * np.cos(arg), axis=2)

    def d2(self, t):
        t = np.atleast_1d(np.asarray(t, dtype=np.float64))
        w, arg = self._arg(t)
        return -np.sum(self.amplitude * w**2 * np.sin(arg), axis=2)

    @classmethod
    def random(cls, rng, n_harmonics, amp_max, freq_range, offset=None):
        a = rng.uniform(0.3, 1.0, (3, n_harmonics)) * amp_max / n_harmonics
        f = rng.uniform(*freq_range, (3, n_harmonics))
        ph = rng.uniform(0, 2 * np.pi, (3, n_harmonics))
        return cls(np.zeros(3) if offset is None else offset, np.zeros(3), a, f, ph)


@dataclass
class RigConfig:
    duration_s: float = 60.0
    translation: SinusoidMotion = field(default_factory=SinusoidMotion)
    rotation: SinusoidMotion = field(default_factory=SinusoidMotion)
    imu_rate_hz: float = 200.0
    mocap_rate_hz: float = 120.0
    camera_rate_hz: float = 20.0
    # MoCap clock minus IMU clock for the same physical instant
    time_offset_ns: int = 0
    # MoCap recording window in true (IMU) time; None means the full duration
    mocap_start_s: float = 0.0
    mocap_end_s: float | None = None
    # keep MoCap rows only inside these true-time windows (room-style coverage)
    gt_windows: list | None = None
    intrinsics: ImuIntrinsics = field(default_factory=ImuIntrinsics)
    accel_sigma_w: float = 0.0
    accel_sigma_b: float = 0.0
    gyro_sigma_w: float = 0.0
    gyro_sigma_b: float = 0.0
    mocap_sigma_rot: float = 0.0
    mocap_sigma_trans: float = 0.0
    glitch_rate: float = 0.0
    glitch_size_m: float = 1.0
    T_MI: RigidMotion = field(default_factory=RigidMotion.identity)
    T_WG: RigidMotion = field(default_factory=RigidMotion.identity)
    n_pairs: int = 0
    pair_sigma_rot: float = 0.0
    pair_sigma_trans: float = 0.0
    cam_imu_shift_ns: int = 0
    temperature_c: float = 30.0
    exposure_k: float = 0.0
    exposure_t_min: float = 1e-4
    exposure_t_max: float = 0.02
    vignette_alpha: float = 0.0
    vignette_size: int = 0
    vignette_views: int = 10
    vignette_noise: float = 0.0
    seed: int = 0
    gravity: np.ndarray = field(default_factory=lambda: GRAVITY_W.copy())


class GroundTruthBundle:
    """Analytic IMU-frame motion ``T_WI(t)`` plus every injected parameter."""

    def __init__(self, config: RigConfig):
        self.config = config
        self.T_MI = config.T_MI
        self.T_WG = config.T_WG
        self.intrinsics = config.intrinsics
        self.gravity = np.asarray(config.gravity, dtype=np.float64)

    def position(self, t):
        return self.config.translation.value(t)

    def velocity(self, t):
        return self.config.translation.d1(t)

    def acceleration(self, t):
        return self.config.translation.d2(t)

    def quaternion(self, t):
        return quat_exp(self.config.rotation.value(t))

    def rotation(self, t):
        return quat_to_matrix(self.quaternion(t))

    def omega(self, t):
        """Body-frame angular velocity ``J_r(r) r_dot`` of ``R = Exp(r)``."""
        r = self.config.rotation.value(t)
        rd = self.config.rotation.d1(t)
        th = np.linalg.norm(r, axis=1)
        small = th < 1e-4
        ths = np.where(small, 1.0, th)
        c1 = np.where(small, 0.5 - th**2 / 24.0, (1 - np.cos(ths)) / ths**2)
        c2 = np.where(small, 1.0 / 6.0 - th**2 / 120.0, (ths - np.sin(ths)) / ths**3)
        rxrd = np.cross(r, rd)
        return rd - c1[:, None] * rxrd + c2[:, None] * np.cross(r, rxrd)

    def specific_force(self, t):
        R = self.rotation(t)
        return np.einsum("nji,nj->ni", R, self.acceleration(t) - self.gravity)

    def trajectory(self, t_ns, parent="W", child="I"):
        t_ns = np.asarray(t_ns, dtype=np.int64)
        ts = t_ns * 1e-9
        return Trajectory(t_ns, self.quaternion(ts), self.position(ts), parent, child)


def make_trajectory(config: RigConfig) -> GroundTruthBundle:
    return GroundTruthBundle(config)


def imu_times(config: RigConfig):
    n = int(np.floor(config.duration_s * config.imu_rate_hz + 1e-9)) + 1
    return np.rint(np.arange(n) * (1e9 / config.imu_rate_hz)).astype(np.int64)


def clean_imu(bundle: GroundTruthBundle, t_ns=None):
    if t_ns is None:
        t_ns = imu_times(bundle.config)
    ts = np.asarray(t_ns) * 1e-9
    temp = np.full(len(ts), bundle.config.temperature_c)
    return ImuData(t_ns, bundle.omega(ts), bundle.specific_force(ts), temp)


def imu_noise(n, tau0, sigma_w, sigma_b, rng_white, rng_walk):
    """White noise plus random-walk bias in discrete time.

    Per-sample white std is ``sigma_w / sqrt(tau0)``; the bias increment std is
    ``sigma_b * sqrt(tau0)``.
    """
    out = np.zeros((n, 3))
    if sigma_w > 0:
        out += rng_white.standard_normal((n, 3)) * (sigma_w / np.sqrt(tau0))
    if sigma_b > 0:
        out += np.cumsum(rng_walk.standard_normal((n, 3)) * (sigma_b * np.sqrt(tau0)), axis=0)
    return out


def sample_imu(bundle: GroundTruthBundle, config: RigConfig | None = None) -> ImuData:
    config = config or bundle.config
    t_ns = imu_times(config)
    clean = clean_imu(bundle, t_ns)
    tau0 = 1.0 / config.imu_rate_hz
    n = len(t_ns)
    gyro = clean.gyro + imu_noise(
        n, tau0, config.gyro_sigma_w, config.gyro_sigma_b, rng_for(config.seed, "gyro_white"), rng_for(config.seed, "gyro_walk")
    )
    accel = clean.accel + imu_noise(
        n, tau0, config.accel_sigma_w, config.accel_sigma_b, rng_for(config.seed, "accel_white"), rng_for(config.seed, "accel_walk")
    )
    return invert_calibration(ImuData(t_ns, gyro, accel, clean.temp_c), config.intrinsics)


def mocap_true_times(config: RigConfig):
    """True-time (IMU clock) instants at which MoCap frames are captured."""
    start = int(round(config.mocap_start_s * 1e9))
    end_s = config.duration_s if config.mocap_end_s is None else config.mocap_end_s
    n = int(np.floor((end_s - config.mocap_start_s) * config.mocap_rate_hz + 1e-9)) + 1
    t = start + np.rint(np.arange(n) * (1e9 / config.mocap_rate_hz)).astype(np.int64)
    if config.gt_windows:
        keep = np.zeros(len(t), dtype=bool)
        for lo, hi in config.gt_windows:
            keep |= (t >= int(round(lo * 1e9))) & (t <= int(round(hi * 1e9)))
        t = t[keep]
    return t


def _perturb(q, p, sigma_rot, sigma_trans, rng):
    if sigma_rot > 0:
        q = quat_multiply(q, quat_exp(rng.standard_normal((len(q), 3)) * sigma_rot))
    if sigma_trans > 0:
        p = p + rng.standard_normal((len(p), 3)) * sigma_trans
    return q, p


def _right_compose(q, p, T: RigidMotion):
    return quat_multiply(q, T.rotation), p + quat_to_matrix(q) @ T.translation


def sample_mocap(bundle: GroundTruthBundle, config: RigConfig | None = None, return_glitches=False):
    """MoCap poses ``T_WM = T_WI T_MI^-1`` stamped in MoCap time."""
    config = config or bundle.config
    t_true = mocap_true_times(config)
    gt = bundle.trajectory(t_true)
    q, p = _right_compose(gt.q, gt.p, bundle.T_MI.inverse())
    q, p = _perturb(q, p, config.mocap_sigma_rot, 0.0, rng_for(config.seed, "mocap_rot"))
    q, p = _perturb(q, p, 0.0, config.mocap_sigma_trans, rng_for(config.seed, "mocap_trans"))
    glitches = np.zeros(len(t_true), dtype=bool)
    if config.glitch_rate > 0:
        rng = rng_for(config.seed, "mocap_glitch")
        cand = rng.random(len(t_true)) < config.glitch_rate
        cand[[0, -1]] = False
        # isolated spikes only: drop candidates with a candidate neighbour
        isolated = cand.copy()
        isolated[1:] &= ~cand[:-1]
        isolated[:-1] &= ~cand[1:]
        d = rng.standard_normal((len(t_true), 3))
        d /= np.linalg.norm(d, axis=1, keepdims=True)
        p = p + isolated[:, None] * d * config.glitch_size_m
        glitches = isolated
    traj = Trajectory(t_true + np.int64(config.time_offset_ns), q, p, "W", "M")
    return (traj, glitches) if return_glitches else traj


def sample_pairs(bundle: GroundTruthBundle, config: RigConfig | None = None):
    """Synchronised ``(t, T_WM, T_IG)`` pairs, as an external grid tracker would give."""
    config = config or bundle.config
    t_true = mocap_true_times(config)
    idx = np.linspace(0, len(t_true) - 1, config.n_pairs).round().astype(int)
    t = t_true[np.unique(idx)]
    gt = bundle.trajectory(t)
    rng = rng_for(config.seed, "pairs")
    q_wm, p_wm = _right_compose(gt.q, gt.p, bundle.T_MI.inverse())
    q_wm, p_wm = _perturb(q_wm, p_wm, config.pair_sigma_rot, config.pair_sigma_trans, rng)
    # T_IG = T_WI^-1 T_WG
    R = quat_to_matrix(gt.q)
    q_iw = gt.q * np.array([1.0, -1.0, -1.0, -1.0])
    p_iw = -np.einsum("nji,nj->ni", R, gt.p)
    q_ig = quat_multiply(q_iw, bundle.T_WG.rotation)
    p_ig = p_iw + quat_to_matrix(q_iw) @ bundle.T_WG.translation
    q_ig, p_ig = _perturb(q_ig, p_ig, config.pair_sigma_rot, config.pair_sigma_trans, rng)
    return (
        t,
        Trajectory(t, q_wm, p_wm, "W", "M"),
        Trajectory(t, q_ig, p_ig, "I", "G"),
    )


def sample_exposures(config: RigConfig):
    """Illuminance and auto-exposure samples following ``t = clamp(k / L)``.

    Exposures are integer nanoseconds; for unsaturated frames the illuminance
    is back-computed from the integer exposure so the relation stays exact.
    """
    n = int(np.floor(config.duration_s * config.camera_rate_hz + 1e-9)) + 1
    t = np.rint(np.arange(n) * (1e9 / config.camera_rate_hz)).astype(np.int64)
    rng = rng_for(config.seed, "exposure")
    k = config.exposure_k
    # log-illuminance sweeps past both clamp bounds
    lo, hi = np.log(k / config.exposure_t_max), np.log(k / config.exposure_t_min)
    mid, half = 0.5 * (lo + hi), 0.5 * (hi - lo)
    phase = rng.uniform(0, 2 * np.pi)
    lux = np.exp(mid + 1.3 * half * np.sin(2 * np.pi * t * 1e-9 / 7.0 + phase))
    t_min_ns = int(round(config.exposure_t_min * 1e9))
    t_max_ns = int(round(config.exposure_t_max * 1e9))
    exp_ns = np.clip(np.rint(k / lux * 1e9), t_min_ns, t_max_ns).astype(np.int64)
    free = (exp_ns > t_min_ns) & (exp_ns < t_max_ns)
    lux[free] = k / (exp_ns[free] * 1e-9)
    return t, exp_ns, lux


def radial_vignette(width, height, alpha):
    """``V = 1 - alpha r^2`` with ``r`` normalised to 1 at the image corners."""
    y, x = np.mgrid[0:height, 0:width].astype(np.float64)
    cx, cy = (width - 1) / 2.0, (height - 1) / 2.0
    r2 = ((x - cx) ** 2 + (y - cy) ** 2) / (cx**2 + cy**2)
    return 1.0 - alpha * r2


def vignette_scene(config: RigConfig):
    """Planar target seen fronto-parallel from shifted viewpoints.

    Returns ``(texture, views, corrs)``: ``views`` lists
    ``(exposure_s, (dx, dy))`` with integer pixel-to-texel offsets and
    ``corrs`` the matching correspondence maps.
    """
    from .photometric import shift_correspondence

    size = config.vignette_size
    rng = rng_for(config.seed, "vignette")
    margin = size // 2
    tex_shape = (size + margin, size + margin)
    # smooth-ish positive texture so every texel carries signal
    texture = 0.3 + 0.7 * rng.random(tex_shape)
    views = []
    for _ in range(config.vignette_views):
        dx, dy = (int(v) for v in rng.integers(0, margin + 1, 2))
        # exposures are whole nanoseconds so they survive serialisation exactly
        t = int(rng.integers(300_000_000, 1_000_000_000)) * 1e-9
        views.append((t, (dx, dy)))
    corr = [shift_correspondence(size, size, tex_shape, d) for _, d in views]
    return texture, views, corr


def render_views(texture, views, corrs, V, noise=0.0, rng=None):
    """Render every view, optionally with multiplicative Gaussian noise."""
    from .photometric import render_image

    images = []
    for (t, _), c in zip(views, corrs):
        img = render_image(texture, t, V, c)
        if noise > 0:
            img = img * (1.0 + noise * rng.standard_normal(img.shape))
        images.append(np.clip(img, 0.0, 1.0))
    return images


def truth_calibration(config: RigConfig):
    from .ingest import CalibrationFile, ExposureParams, NoiseSection

    return CalibrationFile(
        intrinsics=config.intrinsics,
        time_shift_ns=int(config.cam_imu_shift_ns),
        mocap_time_shift_ns=int(config.time_offset_ns),
        T_MI=config.T_MI,
        T_WG=config.T_WG,
        noise=NoiseSection(config.accel_sigma_w, config.accel_sigma_b, config.gyro_sigma_w, config.gyro_sigma_b),
        exposure=ExposureParams(config.exposure_k, config.exposure_t_min, config.exposure_t_max)
        if config.exposure_k > 0
        else None,
        extra={"vignette": {"alpha": repr(float(config.vignette_alpha))}} if config.vignette_size else {},
    )


def emit_dataset(bundle: GroundTruthBundle, config: RigConfig | None, out_dir):
    """Write every simulated stream in the on-disk formats.

    Files: imu.csv, mocap.csv, gt.csv (true T_WI at MoCap capture instants,
    IMU time), truth.txt, plus pairs.csv, exposures.csv and vignette/ when the
    config enables them.
    """
    from . import ingest, photometric

    config = config or bundle.config
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    ingest.write_imu(sample_imu(bundle, config), out / "imu.csv")
    mocap = sample_mocap(bundle, config)
    if len(mocap):
        ingest.write_mocap(mocap, out / "mocap.csv")
        ingest.write_mocap(bundle.trajectory(mocap_true_times(config)), out / "gt.csv")
    if config.n_pairs:
        t, twm, tig = sample_pairs(bundle, config)
        ingest.write_pairs(t, twm, tig, out / "pairs.csv")
    if config.exposure_k > 0:
        ingest.write_exposures(*sample_exposures(config), out / "exposures.csv")
    if config.vignette_size:
        texture, views, corr = vignette_scene(config)
        V = radial_vignette(config.vignette_size, config.vignette_size, config.vignette_alpha)
        vdir = out / "vignette"
        vdir.mkdir(exist_ok=True)
        images = render_views(texture, views, corr, V, config.vignette_noise, rng_for(config.seed, "vignette_noise"))
        photometric.write_views(vdir, images, [t for t, _ in views], [d for _, d in views])
        photometric.write_pgm(out / "vignette_true.pgm", V)
    ingest.write_calibration(truth_calibration(config), out / "truth.txt")
    return out


# --------------------------------------------------------------------------
# Presets and the rig.txt dialect
# --------------------------------------------------------------------------


def _random_intrinsics(rng):
    M_g = np.eye(3) + rng.uniform(-0.02, 0.02, (3, 3))
    M_a = np.tril(np.eye(3) + rng.uniform(-0.02, 0.02, (3, 3)))
    return ImuIntrinsics(M_a, M_g, rng.uniform(-0.2, 0.2, 3), rng.uniform(-0.02, 0.02, 3))


def calib_config(seed=0, **overrides) -> RigConfig:
    """Handheld calibration sequence: brisk motion in all six degrees of freedom."""
    rng = rng_for(seed, "trajectory")
    cfg = RigConfig(
        duration_s=60.0,
        translation=SinusoidMotion.random(rng, 4, 0.6, (0.2, 0.9), offset=[0.0, 0.0, 1.2]),
        rotation=SinusoidMotion.random(rng, 4, 1.5, (1.0, 3.0)),
        intrinsics=_random_intrinsics(rng),
        accel_sigma_w=1.4e-3,
        gyro_sigma_w=8.0e-5,
        T_MI=RigidMotion.from_rotvec(rng.uniform(-1, 1, 3), rng.uniform(-0.1, 0.1, 3)),
        T_WG=RigidMotion.from_rotvec(rng.uniform(-1, 1, 3), rng.uniform(-2, 2, 3)),
        cam_imu_shift_ns=5_300_000,
        seed=seed,
    )
    return replace(cfg, **overrides)


def static_config(seed=0, **overrides) -> RigConfig:
    """Resting IMU for noise identification."""
    cfg = RigConfig(
        duration_s=3600.0,
        rotation=SinusoidMotion(offset=[0.1, -0.05, 0.3]),
        accel_sigma_w=1.4e-3,
        accel_sigma_b=8.6e-5,
        gyro_sigma_w=8.0e-5,
        gyro_sigma_b=2.2e-6,
        mocap_end_s=-1.0,
        seed=seed,
    )
    return replace(cfg, **overrides)


def room_config(seed=0, **overrides) -> RigConfig:
    """Long walk with MoCap coverage only at the start and the end."""
    rng = rng_for(seed, "trajectory")
    cfg = RigConfig(
        duration_s=120.0,
        translation=SinusoidMotion.random(rng, 3, 2.0, (0.02, 0.2), offset=[0.0, 0.0, 1.5]),
        rotation=SinusoidMotion.random(rng, 3, 1.0, (0.05, 0.4)),
        gt_windows=[(0.0, 10.0), (110.0, 120.0)],
        seed=seed,
    )
    return replace(cfg, **overrides)


def _fmt(v):
    return repr(float(v))


def _vec(s, n=None):
    vals = [float(x) for x in s.replace(",", " ").split()]
    if n is not None and len(vals) != n:
        raise ValueError(f"expected {n} values, got {len(vals)}")
    return np.array(vals)


_SCALARS = (
    "duration_s", "imu_rate_hz", "mocap_rate_hz", "camera_rate_hz", "mocap_start_s",
    "accel_sigma_w", "accel_sigma_b", "gyro_sigma_w", "gyro_sigma_b",
    "mocap_sigma_rot", "mocap_sigma_trans", "glitch_rate", "glitch_size_m",
    "pair_sigma_rot", "pair_sigma_trans", "temperature_c",
    "exposure_k", "exposure_t_min", "exposure_t_max",
    "vignette_alpha", "vignette_noise",
)
_INTS = ("time_offset_ns", "n_pairs", "cam_imu_shift_ns", "vignette_size", "vignette_views", "seed")


def write_rig_config(config: RigConfig, path):
    from .ingest import _write_matrix_sections, _write_motion

    lines = ["[rig]"]
    for k in _SCALARS:
        lines.append(f"{k} = {_fmt(getattr(config, k))}")
    for k in _INTS:
        lines.append(f"{k} = {int(getattr(config, k))}")
    if config.mocap_end_s is not None:
        lines.append(f"mocap_end_s = {_fmt(config.mocap_end_s)}")
    if config.gt_windows:
        lines.append("gt_windows = " + ", ".join(f"{_fmt(a)} {_fmt(b)}" for a, b in config.gt_windows))
    lines.append("gravity = " + ", ".join(_fmt(v) for v in config.gravity))
    lines.append("")
    for name, m in (("translation", config.translation), ("rotation", config.rotation)):
        lines.append(f"[{name}]")
        lines.append("offset = " + ", ".join(_fmt(v) for v in m.offset))
        lines.append("rate = " + ", ".join(_fmt(v) for v in m.rate))
        for key in ("amplitude", "frequency", "phase"):
            arr = getattr(m, key)
            for i, axis in enumerate("xyz"):
                lines.append(f"{key}_{axis} = " + ", ".join(_fmt(v) for v in arr[i]))
        lines.append("")
    lines += _write_matrix_sections(config.intrinsics)
    lines += _write_motion("T_MI", config.T_MI)
    lines += _write_motion("T_WG", config.T_WG)
    Path(path).write_text("\n".join(lines), encoding="ascii")


def load_rig_config(path) -> RigConfig:
    from .ingest import _read_text

    return parse_rig_config(*_read_text(Path(path)))


def parse_rig_config(text, path="<string>") -> RigConfig:
    """Rig description in the calib.txt INI dialect."""
    from .errors import ParseError
    from .ingest import _read_intrinsics, _read_motion

    if isinstance(text, (bytes, bytearray)):
        try:
            text = bytes(text).decode("ascii")
        except UnicodeDecodeError:
            raise ParseError("non-ASCII byte", source=path) from None
    cp = configparser.ConfigParser(interpolation=None, default_section="\x00default")
    cp.optionxform = str
    try:
        cp.read_string(text, source=str(path))
    except configparser.Error as e:
        raise ParseError(str(e).splitlines()[0][:200], source=path) from None
    try:
        rig = cp["rig"] if cp.has_section("rig") else {}
        kw = {}
        for k in _SCALARS:
            if k in rig:
                kw[k] = float(rig[k])
        for k in _INTS:
            if k in rig:
                kw[k] = int(rig[k])
        if "mocap_end_s" in rig:
            kw["mocap_end_s"] = float(rig["mocap_end_s"])
        if "gt_windows" in rig:
            v = _vec(rig["gt_windows"])
            kw["gt_windows"] = [tuple(x) for x in v.reshape(-1, 2)]
        if "gravity" in rig:
            kw["gravity"] = _vec(rig["gravity"], 3)
        for name in ("translation", "rotation"):
            if cp.has_section(name):
                s = cp[name]
                arrs = {}
                for key in ("amplitude", "frequency", "phase"):
                    rows = [_vec(s.get(f"{key}_{a}", "")) for a in "xyz"]
                    arrs[key] = np.array(rows).reshape(3, -1)
                kw[name] = SinusoidMotion(
                    _vec(s.get("offset", "0 0 0"), 3), _vec(s.get("rate", "0 0 0"), 3), **arrs
                )
        kw["intrinsics"] = _read_intrinsics(cp, path, required=False)
        for name in ("T_MI", "T_WG"):
            if cp.has_section(name):
                kw[name] = _read_motion(cp, name, path)
    except ParseError:
        raise
    except (ValueError, KeyError) as e:
        raise ParseError(str(e), source=path) from e
    cfg = RigConfig(**kw)
    _validate_rig(cfg, path)
    return cfg


def _validate_rig(cfg: RigConfig, path):
    from .errors import ParseError

    scalars = [getattr(cfg, k) for k in _SCALARS]
    arrays = [cfg.gravity] + [getattr(m, a) for m in (cfg.translation, cfg.rotation) for a in ("offset", "rate", "amplitude", "frequency", "phase")]
    if not all(np.isfinite(v) for v in scalars) or not all(np.all(np.isfinite(a)) for a in arrays):
        raise ParseError("rig values must be finite", source=path)
    if cfg.duration_s <= 0 or min(cfg.imu_rate_hz, cfg.mocap_rate_hz, cfg.camera_rate_hz) <= 0:
        raise ParseError("duration and sensor rates must be positive", source=path)
    noise = ("accel_sigma_w", "accel_sigma_b", "gyro_sigma_w", "gyro_sigma_b", "mocap_sigma_rot", "mocap_sigma_trans", "pair_sigma_rot", "pair_sigma_trans", "vignette_noise", "exposure_k")
    if any(getattr(cfg, k) < 0 for k in noise) or min(cfg.n_pairs, cfg.vignette_size, cfg.vignette_views) < 0:
        raise ParseError("noise levels and counts must be non-negative", source=path)


PRESETS = {"calib": calib_config, "static": static_config, "room": room_config}


def simulate(config: RigConfig, out_dir):
    return emit_dataset(make_trajectory(config), config, out_dir)

