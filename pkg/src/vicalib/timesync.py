"""MoCap to IMU clock alignment.

The offset convention throughout is ``offset = t_mocap - t_imu`` for the same
physical instant, so MoCap stamps convert to IMU time by subtracting it.

Alignment compares angular-rate *magnitudes*: the gyroscope measures rates in
the IMU frame, MoCap differentiation yields them in the marker frame, and the
rotation between the two is not known before hand-eye calibration. Norms are
invariant to that rotation.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import Trajectory, angular_rates
from .errors import BadWindow, BoundaryMinimum, EmptyStream, NoOverlap, NoSignal
from .imu import ImuData

DEFAULT_STEP_NS = 100_000
DEFAULT_HALF_WINDOW_NS = 500_000_000
DEFAULT_MEDIAN_WINDOW = 5
MIN_PEAK_RATE = 0.05  # rad/s
MIN_OVERLAP_NS = 1_000_000_000
DEFAULT_SMOOTHING_S = 0.06  # Gaussian sigma (s) applied to both rate streams


@dataclass
class OffsetEstimate:
    offset_ns: float
    cost_curve: np.ndarray  # (K, 2): candidate offset [ns], cost
    refined: bool = False
    # (MoCap stamps in IMU time [ns], |w_gyro| resampled there, |w_mocap|)
    aligned: tuple | None = field(default=None, repr=False)

    @property
    def offset_ns_int(self):
        return int(round(self.offset_ns))


def median_filter_positions(traj: Trajectory, window: int = DEFAULT_MEDIAN_WINDOW) -> Trajectory:
    """Windowed median on each position component; orientations untouched.

    Near the ends the window shrinks symmetrically so it stays centred.
    """
    if window < 3 or window % 2 == 0:
        raise BadWindow(f"median window must be odd and >= 3, got {window}")
    p = traj.p
    n = len(p)
    h = window // 2
    out = p.copy()
    if n > 2 * h:
        view = np.lib.stride_tricks.sliding_window_view(p, window, axis=0)
        out[h : n - h] = np.median(view, axis=-1)
    for i in list(range(min(h, n))) + list(range(max(n - h, h), n)):
        k = min(i, n - 1 - i, h)
        out[i] = np.median(p[i - k : i + k + 1], axis=0)
    return Trajectory(traj.t, traj.q, out, traj.parent, traj.child, normalize=False)


def coarse_align(imu, mocap) -> int:
    """Offset guess from the first arrival of each stream."""
    if len(imu) == 0 or len(mocap) == 0:
        raise EmptyStream("coarse alignment needs non-empty IMU and MoCap streams")
    return int(mocap.t[0]) - int(imu.t[0])


def grid_search_offset(gyro_mag, mocap_mag, center, half_window=DEFAULT_HALF_WINDOW_NS, step=DEFAULT_STEP_NS):
    """Exhaustive search of the clock offset on a regular grid.

    ``gyro_mag`` and ``mocap_mag`` are ``(t_ns, |w|)`` pairs. For a candidate
    ``d`` the cost is the mean over MoCap stamps ``s`` of
    ``(|w_imu(s - d)| - |w_mocap(s)|)^2`` with gyro magnitudes linearly
    interpolated. The low-noise gyro is the resampled side: linearly
    interpolating the much noisier MoCap rates would make the noise variance
    in the cost oscillate with ``d`` and pull the minimum away from the truth.
    Only MoCap stamps valid for *every* candidate are used, so the cost curve
    is a smooth function of ``d``.
    """
    t_g, g = (np.asarray(a) for a in gyro_mag)
    t_m, m = (np.asarray(a) for a in mocap_mag)
    if len(t_g) < 2 or len(t_m) == 0:
        raise EmptyStream("grid search needs gyro and MoCap samples")
    if np.max(m) < MIN_PEAK_RATE:
        raise NoSignal(f"peak MoCap angular rate {np.max(m):.3g} rad/s below {MIN_PEAK_RATE}")
    k = int(half_window // step)
    offsets = int(center) + step * np.arange(-k, k + 1, dtype=np.int64)
    ok = (t_m - offsets[-1] >= t_g[0]) & (t_m - offsets[0] <= t_g[-1])
    if not np.any(ok) or t_m[ok][-1] - t_m[ok][0] < MIN_OVERLAP_NS:
        raise NoOverlap("streams overlap less than 1 s for some candidate offsets")
    t_ref = int(t_g[0])
    tm = (t_m[ok] - t_ref).astype(np.float64)
    mv = m[ok].astype(np.float64)
    tg = (t_g - t_ref).astype(np.float64)
    cost = np.empty(len(offsets))
    for j, d in enumerate(offsets):
        r = np.interp(tm - float(d), tg, g) - mv
        cost[j] = np.dot(r, r) / len(r)
    curve = np.column_stack([offsets.astype(np.float64), cost])
    return OffsetEstimate(float(offsets[int(np.argmin(cost))]), curve, refined=False)


def refine_parabola(cost_curve, argmin_index=None) -> float:
    """Vertex of the parabola through the minimum and its two neighbours."""
    curve = np.asarray(cost_curve, dtype=np.float64)
    i = int(np.argmin(curve[:, 1])) if argmin_index is None else int(argmin_index)
    if i <= 0 or i >= len(curve) - 1:
        raise BoundaryMinimum("cost minimum lies on the search boundary; widen the window")
    (x0, c0), (x1, c1), (x2, c2) = curve[i - 1 : i + 2]
    h = 0.5 * (x2 - x0)
    denom = c0 - 2.0 * c1 + c2
    if denom <= 0:
        return float(x1)
    shift = h * (c0 - c2) / (2.0 * denom)
    return float(x1 + np.clip(shift, -h, h))


def smooth_rates(t, w, sigma_s):
    """Zero-phase Gaussian low-pass of rate vectors sampled at ``t`` (ns).

    The kernel is symmetric, so it attenuates high-frequency differentiation
    noise without delaying the signal. Samples within four sigmas of either
    end are dropped.
    """
    if not sigma_s or sigma_s <= 0:
        return t, w
    dt = np.median(np.diff(t)) * 1e-9
    half = int(np.ceil(4.0 * sigma_s / dt))
    if len(t) <= 2 * half:
        raise NoOverlap("stream shorter than the smoothing kernel")
    x = np.arange(-half, half + 1) * dt
    kernel = np.exp(-0.5 * (x / sigma_s) ** 2)
    kernel /= kernel.sum()
    out = np.column_stack([np.convolve(w[:, k], kernel, mode="valid") for k in range(w.shape[1])])
    return t[half : len(t) - half], out


def gyro_magnitudes(imu: ImuData, intrinsics=None, smoothing_s=0.0):
    if intrinsics is not None:
        from .imucal import apply_calibration

        imu = apply_calibration(imu, intrinsics)
    t, w = smooth_rates(imu.t, imu.gyro, smoothing_s)
    return t, np.linalg.norm(w, axis=1)


def mocap_magnitudes(mocap: Trajectory, window: int = DEFAULT_MEDIAN_WINDOW, smoothing_s=0.0):
    filtered = median_filter_positions(mocap, window)
    t, w = smooth_rates(*angular_rates(filtered), smoothing_s)
    return t, np.linalg.norm(w, axis=1)


def time_align(
    imu: ImuData,
    mocap: Trajectory,
    half_window=DEFAULT_HALF_WINDOW_NS,
    step=DEFAULT_STEP_NS,
    window=DEFAULT_MEDIAN_WINDOW,
    intrinsics=None,
    smoothing_s=DEFAULT_SMOOTHING_S,
) -> OffsetEstimate:
    """Full alignment: median filter, MoCap rates, coarse guess, grid, parabola.

    Both rate streams pass through the same zero-phase low-pass
    (``smoothing_s`` Gaussian sigma, 0 disables it) before their magnitudes
    are compared.
    """
    if len(imu) == 0 or len(mocap) == 0:
        raise EmptyStream("time alignment needs non-empty IMU and MoCap streams")
    t_m, m = mocap_magnitudes(mocap, window, smoothing_s)
    if np.max(m) < MIN_PEAK_RATE:
        raise NoSignal(f"peak MoCap angular rate {np.max(m):.3g} rad/s below {MIN_PEAK_RATE}; no rotation to align")
    t_g, g = gyro_magnitudes(imu, intrinsics, smoothing_s)
    center = coarse_align(imu, mocap)
    est = grid_search_offset((t_g, g), (t_m, m), center, half_window, step)
    offset = refine_parabola(est.cost_curve)
    inside = (t_m - offset >= t_g[0]) & (t_m - offset <= t_g[-1])
    t_aligned = t_m[inside] - offset
    aligned = (t_aligned, np.interp(t_aligned - t_g[0], (t_g - t_g[0]).astype(float), g), m[inside])
    return OffsetEstimate(offset, est.cost_curve, refined=True, aligned=aligned)
