"""Rotation, rigid-motion and trajectory primitives.

Conventions
-----------
* Quaternions are Hamilton, stored scalar-first ``[w, x, y, z]`` and kept in
  the canonical hemisphere ``w >= 0``.
* ``T_BA`` maps point coordinates in frame A to frame B: ``p_B = T_BA p_A``.
  ``compose(a, b)`` is ``a @ b``, i.e. ``b`` is applied first.
* Tangent vectors of SE(3) are ordered ``(rho, phi)``: translation part first,
  rotation part second. Perturbations are applied on the right.
* Timestamps are signed integer nanoseconds (``numpy.int64``).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import OutOfRange

FRAMES = ("W", "M", "I", "C0", "C1", "G")

NS_PER_S = 1_000_000_000

_SMALL_ANGLE = 1e-6


def ns_to_s(t):
    return np.asarray(t, dtype=np.float64) * 1e-9


def s_to_ns(t):
    return np.rint(np.asarray(t, dtype=np.float64) * 1e9).astype(np.int64)


# --------------------------------------------------------------------------
# SO(3) / quaternion helpers. All accept batched input with the quaternion or
# vector dimension last.
# --------------------------------------------------------------------------


def skew(v):
    v = np.asarray(v, dtype=np.float64)
    out = np.zeros(v.shape[:-1] + (3, 3))
    out[..., 0, 1] = -v[..., 2]
    out[..., 0, 2] = v[..., 1]
    out[..., 1, 0] = v[..., 2]
    out[..., 1, 2] = -v[..., 0]
    out[..., 2, 0] = -v[..., 1]
    out[..., 2, 1] = v[..., 0]
    return out


def quat_canonical(q):
    q = np.array(q, dtype=np.float64)
    flip = q[..., 0] < 0
    q[flip] = -q[flip]
    return q


def quat_normalize(q):
    q = np.asarray(q, dtype=np.float64)
    return quat_canonical(q / np.linalg.norm(q, axis=-1, keepdims=True))


def quat_conj(q):
    q = np.asarray(q, dtype=np.float64)
    return q * np.array([1.0, -1.0, -1.0, -1.0])


def quat_multiply(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    aw, ax, ay, az = np.moveaxis(a, -1, 0)
    bw, bx, by, bz = np.moveaxis(b, -1, 0)
    return np.stack(
        [
            aw * bw - ax * bx - ay * by - az * bz,
            aw * bx + ax * bw + ay * bz - az * by,
            aw * by - ax * bz + ay * bw + az * bx,
            aw * bz + ax * by - ay * bx + az * bw,
        ],
        axis=-1,
    )


def quat_to_matrix(q):
    q = np.asarray(q, dtype=np.float64)
    w, x, y, z = np.moveaxis(q, -1, 0)
    R = np.empty(q.shape[:-1] + (3, 3))
    R[..., 0, 0] = 1 - 2 * (y * y + z * z)
    R[..., 0, 1] = 2 * (x * y - w * z)
    R[..., 0, 2] = 2 * (x * z + w * y)
    R[..., 1, 0] = 2 * (x * y + w * z)
    R[..., 1, 1] = 1 - 2 * (x * x + z * z)
    R[..., 1, 2] = 2 * (y * z - w * x)
    R[..., 2, 0] = 2 * (x * z - w * y)
    R[..., 2, 1] = 2 * (y * z + w * x)
    R[..., 2, 2] = 1 - 2 * (x * x + y * y)
    return R


def quat_from_matrix(R):
    """Shepperd's method: pick the largest of (trace, diagonal) as pivot."""
    R = np.asarray(R, dtype=np.float64)
    batch = R.shape[:-2]
    R = R.reshape(-1, 3, 3)
    q = np.empty((R.shape[0], 4))
    tr = np.trace(R, axis1=1, axis2=2)
    diag = np.stack([R[:, 0, 0], R[:, 1, 1], R[:, 2, 2]], axis=1)
    pivot = np.argmax(np.column_stack([tr, diag]), axis=1)

    m = pivot == 0
    s = 2.0 * np.sqrt(1.0 + tr[m])
    q[m] = np.column_stack(
        [0.25 * s, (R[m, 2, 1] - R[m, 1, 2]) / s, (R[m, 0, 2] - R[m, 2, 0]) / s, (R[m, 1, 0] - R[m, 0, 1]) / s]
    )
    m = pivot == 1
    s = 2.0 * np.sqrt(1.0 + R[m, 0, 0] - R[m, 1, 1] - R[m, 2, 2])
    q[m] = np.column_stack(
        [(R[m, 2, 1] - R[m, 1, 2]) / s, 0.25 * s, (R[m, 0, 1] + R[m, 1, 0]) / s, (R[m, 0, 2] + R[m, 2, 0]) / s]
    )
    m = pivot == 2
    s = 2.0 * np.sqrt(1.0 - R[m, 0, 0] + R[m, 1, 1] - R[m, 2, 2])
    q[m] = np.column_stack(
        [(R[m, 0, 2] - R[m, 2, 0]) / s, (R[m, 0, 1] + R[m, 1, 0]) / s, 0.25 * s, (R[m, 1, 2] + R[m, 2, 1]) / s]
    )
    m = pivot == 3
    s = 2.0 * np.sqrt(1.0 - R[m, 0, 0] - R[m, 1, 1] + R[m, 2, 2])
    q[m] = np.column_stack(
        [(R[m, 1, 0] - R[m, 0, 1]) / s, (R[m, 0, 2] + R[m, 2, 0]) / s, (R[m, 1, 2] + R[m, 2, 1]) / s, 0.25 * s]
    )
    return quat_normalize(q).reshape(batch + (4,))


def quat_exp(rotvec):
    """Rotation vector (axis * angle) to unit quaternion."""
    r = np.asarray(rotvec, dtype=np.float64)
    theta = np.linalg.norm(r, axis=-1)
    small = theta < _SMALL_ANGLE
    safe = np.where(small, 1.0, theta)
    k = np.where(small, 0.5 - theta**2 / 48.0, np.sin(0.5 * safe) / safe)
    return quat_canonical(np.concatenate([np.cos(0.5 * theta)[..., None], k[..., None] * r], axis=-1))


def quat_log(q):
    """Unit quaternion to rotation vector with angle in [0, pi].

    Uses ``atan2(|v|, w)`` so the axis stays well defined near pi, where the
    trace-based formula loses precision.
    """
    q = quat_canonical(q)
    w = q[..., 0]
    v = q[..., 1:]
    s = np.linalg.norm(v, axis=-1)
    small = s < _SMALL_ANGLE
    safe_s = np.where(small, 1.0, s)
    safe_w = np.where(small, w, 1.0)
    k = np.where(small, 2.0 / safe_w * (1.0 - s**2 / (3.0 * safe_w**2)), 2.0 * np.arctan2(s, w) / safe_s)
    return k[..., None] * v


def rotation_angle(q):
    q = quat_canonical(q)
    return 2.0 * np.arctan2(np.linalg.norm(q[..., 1:], axis=-1), q[..., 0])


def so3_exp(phi):
    return quat_to_matrix(quat_exp(phi))


def so3_log(R):
    return quat_log(quat_from_matrix(R))


def so3_left_jacobian(phi):
    phi = np.asarray(phi, dtype=np.float64)
    theta = np.linalg.norm(phi)
    K = skew(phi)
    if theta < 1e-5:
        return np.eye(3) + 0.5 * K + K @ K / 6.0
    return (
        np.eye(3)
        + (1.0 - np.cos(theta)) / theta**2 * K
        + (theta - np.sin(theta)) / theta**3 * (K @ K)
    )


def so3_left_jacobian_inv(phi):
    phi = np.asarray(phi, dtype=np.float64)
    theta = np.linalg.norm(phi)
    K = skew(phi)
    if theta < 1e-5:
        return np.eye(3) - 0.5 * K + K @ K / 12.0
    c = 1.0 / theta**2 - (1.0 + np.cos(theta)) / (2.0 * theta * np.sin(theta))
    return np.eye(3) - 0.5 * K + c * (K @ K)


def so3_right_jacobian(phi):
    return so3_left_jacobian(-np.asarray(phi, dtype=np.float64))


def _se3_q_block(rho, phi):
    rx = skew(rho)
    px = skew(phi)
    theta = np.linalg.norm(phi)
    if theta < 1e-4:
        # series coefficients at theta -> 0
        c1, c2, c3 = 1.0 / 6.0, 1.0 / 24.0, 1.0 / 120.0
    else:
        t2 = theta * theta
        c1 = (theta - np.sin(theta)) / (t2 * theta)
        c2 = (t2 + 2.0 * np.cos(theta) - 2.0) / (2.0 * t2 * t2)
        c3 = (2.0 * theta - 3.0 * np.sin(theta) + theta * np.cos(theta)) / (2.0 * t2 * t2 * theta)
    return (
        0.5 * rx
        + c1 * (px @ rx + rx @ px + px @ rx @ px)
        + c2 * (px @ px @ rx + rx @ px @ px - 3.0 * px @ rx @ px)
        + c3 * (px @ rx @ px @ px + px @ px @ rx @ px)
    )


def se3_left_jacobian(xi):
    xi = np.asarray(xi, dtype=np.float64)
    rho, phi = xi[:3], xi[3:]
    J = so3_left_jacobian(phi)
    out = np.zeros((6, 6))
    out[:3, :3] = J
    out[3:, 3:] = J
    out[:3, 3:] = _se3_q_block(rho, phi)
    return out


def se3_right_jacobian(xi):
    return se3_left_jacobian(-np.asarray(xi, dtype=np.float64))


def se3_right_jacobian_inv(xi):
    J = se3_right_jacobian(xi)
    Ji = np.linalg.inv(J[:3, :3])
    out = np.zeros((6, 6))
    out[:3, :3] = Ji
    out[3:, 3:] = Ji
    out[:3, 3:] = -Ji @ J[:3, 3:] @ Ji
    return out


# --------------------------------------------------------------------------
# Rigid motions
# --------------------------------------------------------------------------


def _frozen(a):
    a = np.array(a, dtype=np.float64)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class RigidMotion:
    """Element of SE(3): unit quaternion ``rotation`` and ``translation`` in meters."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        q = np.array(self.rotation, dtype=np.float64).reshape(4)
        t = np.array(self.translation, dtype=np.float64).reshape(3)
        n = np.linalg.norm(q)
        if not np.isfinite(n) or n == 0.0:
            raise ValueError("rotation quaternion must be finite and non-zero")
        # leave already-normalised input untouched so values round-trip bit-exactly
        if abs(n - 1.0) > 1e-12:
            q = q / n
        if q[0] < 0:
            q = -q
        object.__setattr__(self, "rotation", _frozen(q))
        object.__setattr__(self, "translation", _frozen(t))

    @classmethod
    def identity(cls):
        return cls(np.array([1.0, 0.0, 0.0, 0.0]), np.zeros(3))

    @classmethod
    def from_matrix(cls, T):
        T = np.asarray(T, dtype=np.float64)
        return cls(quat_from_matrix(T[:3, :3]), T[:3, 3])

    @classmethod
    def from_rotvec(cls, rotvec, translation=(0.0, 0.0, 0.0)):
        return cls(quat_exp(rotvec), translation)

    @classmethod
    def exp(cls, xi):
        xi = np.asarray(xi, dtype=np.float64)
        return cls(quat_exp(xi[3:]), so3_left_jacobian(xi[3:]) @ xi[:3])

    def log(self):
        phi = quat_log(self.rotation)
        return np.concatenate([so3_left_jacobian_inv(phi) @ self.translation, phi])

    @property
    def R(self):
        return quat_to_matrix(self.rotation)

    def matrix(self):
        T = np.eye(4)
        T[:3, :3] = self.R
        T[:3, 3] = self.translation
        return T

    def inverse(self):
        qi = quat_conj(self.rotation)
        return RigidMotion(qi, -(quat_to_matrix(qi) @ self.translation))

    def apply(self, points):
        points = np.asarray(points, dtype=np.float64)
        return points @ self.R.T + self.translation

    def adjoint(self):
        R = self.R
        A = np.zeros((6, 6))
        A[:3, :3] = R
        A[3:, 3:] = R
        A[:3, 3:] = skew(self.translation) @ R
        return A

    def __matmul__(self, other):
        if not isinstance(other, RigidMotion):
            return NotImplemented
        return compose(self, other)

    def angle(self):
        return float(rotation_angle(self.rotation))

    def __repr__(self):
        q = ", ".join(f"{v:.6g}" for v in self.rotation)
        t = ", ".join(f"{v:.6g}" for v in self.translation)
        return f"RigidMotion(q=[{q}], t=[{t}])"


def compose(a: RigidMotion, b: RigidMotion) -> RigidMotion:
    """Return ``a * b`` (apply ``b`` first, then ``a``) with a renormalised rotation."""
    q = quat_multiply(a.rotation, b.rotation)
    q = q / np.linalg.norm(q)
    return RigidMotion(q, a.R @ b.translation + a.translation)


def inverse(x: RigidMotion) -> RigidMotion:
    return x.inverse()


def motion_distance(a: RigidMotion, b: RigidMotion):
    """Rotation angle (rad) and translation distance (m) between two motions."""
    d = a.inverse() @ b
    return d.angle(), float(np.linalg.norm(a.translation - b.translation))


# --------------------------------------------------------------------------
# Trajectories
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class PoseSample:
    t: int
    pose: RigidMotion
    parent: str = "W"
    child: str = "I"

    def __post_init__(self):
        _check_frames(self.parent, self.child)


def _check_frames(parent, child):
    for f in (parent, child):
        if f not in FRAMES:
            raise ValueError(f"unknown frame label {f!r}; expected one of {FRAMES}")


class Trajectory:
    """Timestamped poses ``T_parent_child`` stored as contiguous arrays.

    ``t`` holds int64 nanoseconds, ``q`` (N, 4) quaternions and ``p`` (N, 3)
    translations. Instances are treated as immutable; the arrays are
    read-only views.
    """

    __slots__ = ("t", "q", "p", "parent", "child")

    def __init__(self, t, q, p, parent="W", child="I", *, normalize=True):
        _check_frames(parent, child)
        t = np.array(t, dtype=np.int64).reshape(-1)
        q = np.array(q, dtype=np.float64).reshape(-1, 4)
        p = np.array(p, dtype=np.float64).reshape(-1, 3)
        if not (len(t) == len(q) == len(p)):
            raise ValueError("t, q and p must have the same length")
        if len(t) > 1 and np.any(np.diff(t) <= 0):
            i = int(np.argmax(np.diff(t) <= 0))
            raise ValueError(f"timestamps not strictly increasing at index {i + 1} ({t[i]} -> {t[i + 1]})")
        if normalize and len(q):
            n = np.linalg.norm(q, axis=1, keepdims=True)
            q = np.where(np.abs(n - 1.0) > 1e-12, q / n, q)
            q = quat_canonical(q)
        for a in (t, q, p):
            a.setflags(write=False)
        self.t, self.q, self.p = t, q, p
        self.parent, self.child = parent, child

    @classmethod
    def from_samples(cls, samples: Iterable[PoseSample]):
        samples = list(samples)
        if not samples:
            raise ValueError("empty trajectory")
        frames = {(s.parent, s.child) for s in samples}
        if len(frames) != 1:
            raise ValueError(f"samples mix frame pairs: {sorted(frames)}")
        parent, child = frames.pop()
        return cls(
            [s.t for s in samples],
            [s.pose.rotation for s in samples],
            [s.pose.translation for s in samples],
            parent,
            child,
        )

    @classmethod
    def from_poses(cls, t, poses: Sequence[RigidMotion], parent="W", child="I"):
        return cls(t, [x.rotation for x in poses], [x.translation for x in poses], parent, child)

    def __len__(self):
        return len(self.t)

    def pose(self, i) -> RigidMotion:
        return RigidMotion(self.q[i], self.p[i])

    def __getitem__(self, i):
        if isinstance(i, slice) or (isinstance(i, np.ndarray) and i.ndim == 1):
            return Trajectory(self.t[i], self.q[i], self.p[i], self.parent, self.child, normalize=False)
        return PoseSample(int(self.t[i]), self.pose(i), self.parent, self.child)

    def __iter__(self):
        for i in range(len(self)):
            yield self[i]

    def poses(self):
        return [self.pose(i) for i in range(len(self))]

    @property
    def times_s(self):
        return ns_to_s(self.t)

    def shifted(self, dt_ns):
        return Trajectory(self.t + np.int64(dt_ns), self.q, self.p, self.parent, self.child, normalize=False)

    def with_frames(self, parent, child):
        return Trajectory(self.t, self.q, self.p, parent, child, normalize=False)

    def rotations(self):
        return quat_to_matrix(self.q)

    def __repr__(self):
        return f"Trajectory({self.parent}->{self.child}, n={len(self)})"


def transform_trajectory(left: RigidMotion | None, traj: Trajectory, right: RigidMotion | None = None, parent=None, child=None):
    """Return the trajectory ``left * T_i * right`` for every pose."""
    q, p = traj.q, traj.p
    if right is not None:
        p = quat_to_matrix(q) @ right.translation + p
        q = quat_multiply(q, right.rotation)
    if left is not None:
        p = p @ left.R.T + left.translation
        q = quat_multiply(left.rotation, q)
    return Trajectory(
        traj.t, q, p, parent or traj.parent, child or traj.child
    )


def _slerp(q0, q1, alpha):
    """Shorter-arc spherical interpolation, batched."""
    q1 = np.where((np.sum(q0 * q1, axis=-1) < 0)[..., None], -q1, q1)
    delta = quat_log(quat_multiply(quat_conj(q0), q1))
    return quat_multiply(q0, quat_exp(alpha[..., None] * delta))


def interpolate_many(traj: Trajectory, t):
    """Interpolate poses at many timestamps; returns ``(q, p)`` arrays.

    Translation is linear; rotation is slerp on the shorter arc. Timestamps
    equal to a sample return that sample exactly.
    """
    t = np.asarray(t, dtype=np.int64).reshape(-1)
    if len(traj) == 0:
        raise OutOfRange("empty trajectory")
    if np.any(t < traj.t[0]) or np.any(t > traj.t[-1]):
        bad = t[(t < traj.t[0]) | (t > traj.t[-1])][0]
        raise OutOfRange(f"t={bad} outside [{traj.t[0]}, {traj.t[-1]}]")
    idx = np.searchsorted(traj.t, t, side="right") - 1
    exact = traj.t[np.clip(idx, 0, len(traj) - 1)] == t
    q = np.empty((len(t), 4))
    p = np.empty((len(t), 3))
    q[exact] = traj.q[idx[exact]]
    p[exact] = traj.p[idx[exact]]
    m = ~exact
    if np.any(m):
        i0 = idx[m]
        i1 = i0 + 1
        alpha = (t[m] - traj.t[i0]).astype(np.float64) / (traj.t[i1] - traj.t[i0]).astype(np.float64)
        p[m] = traj.p[i0] + alpha[:, None] * (traj.p[i1] - traj.p[i0])
        q[m] = quat_canonical(_slerp(traj.q[i0], traj.q[i1], alpha))
    return q, p


def interpolate(traj: Trajectory, t) -> RigidMotion:
    q, p = interpolate_many(traj, [t])
    return RigidMotion(q[0], p[0])


def angular_rate_central_diff(traj: Trajectory, i: int):
    """Body-frame angular velocity at sample ``i`` from its two neighbours.

    ``log(R_{i-1}^T R_{i+1}) / (t_{i+1} - t_{i-1})`` in rad/s.
    """
    if not 0 < i < len(traj) - 1:
        raise IndexError(f"central difference needs 0 < i < {len(traj) - 1}, got {i}")
    dq = quat_multiply(quat_conj(traj.q[i - 1]), traj.q[i + 1])
    return quat_log(dq) / ((traj.t[i + 1] - traj.t[i - 1]) * 1e-9)


def angular_rates(traj: Trajectory):
    """Vectorised :func:`angular_rate_central_diff` for all interior samples.

    Returns ``(t, omega)`` where ``t`` are the interior timestamps (ns).
    """
    if len(traj) < 3:
        raise IndexError("need at least 3 poses for central differences")
    dq = quat_multiply(quat_conj(traj.q[:-2]), traj.q[2:])
    dt = (traj.t[2:] - traj.t[:-2]) * 1e-9
    return traj.t[1:-1], quat_log(dq) / dt[:, None]
