"""Hand-eye calibration of the marker-to-IMU and world-to-grid transforms.

Each synchronised pair gives the MoCap pose ``T_WM_i`` and the calibration
grid pose seen from the IMU ``T_IG_i``. With the unknowns ``X = T_MI`` and
``Y = T_WG`` the chain ``Y^-1 T_WM_i X T_IG_i`` is the identity, and we
minimise the squared SE(3) logarithm of that chain over both unknowns with
Gauss-Newton on the product manifold (right perturbations).
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .core import (
    RigidMotion,
    Trajectory,
    quat_canonical,
    quat_conj,
    quat_log,
    quat_multiply,
    quat_to_matrix,
    rotation_angle,
    se3_right_jacobian_inv,
    transform_trajectory,
)
from .errors import DegenerateMotion, InsufficientData, NoConvergence

MIN_AXIS_SPREAD_DEG = 15.0
MIN_REL_ANGLE = np.deg2rad(1.0)


@dataclass
class HandEyeSolution:
    T_MI: RigidMotion
    T_WG: RigidMotion
    rms: float  # RMS of the 6-vector residual norms
    iterations: int
    converged: bool = True


def _as_poses(x):
    if isinstance(x, Trajectory):
        return x.poses()
    return list(x)


def residuals(T_WM, T_IG, T_MI, T_WG):
    """``log(T_WG^-1 T_WM_i T_MI T_IG_i)`` for every pair, shape (N, 6)."""
    Yi = T_WG.inverse()
    return np.array([(Yi @ a @ T_MI @ b).log() for a, b in zip(T_WM, T_IG)])


def _relative_pairs(n):
    if n <= 60:
        return list(itertools.combinations(range(n), 2))
    strides = np.unique(np.linspace(1, n - 1, 30).astype(int))
    return [(i, i + s) for s in strides for i in range(n - s)]


def _stack(poses):
    return np.array([x.rotation for x in poses]), np.array([x.translation for x in poses])


def _relative_motions(T_WM, T_IG):
    """``A = T_WM_i^-1 T_WM_j`` and ``B = T_IG_i T_IG_j^-1`` satisfy ``A X = X B``.

    Returned as quaternion and translation arrays; pairs whose relative
    rotation is below ``MIN_REL_ANGLE`` are dropped.
    """
    ij = np.array(_relative_pairs(len(T_WM))).reshape(-1, 2)
    i, j = ij[:, 0], ij[:, 1]
    qm, pm = _stack(T_WM)
    qg, pg = _stack(T_IG)
    qa = quat_canonical(quat_multiply(quat_conj(qm[i]), qm[j]))
    keep = rotation_angle(qa) >= MIN_REL_ANGLE
    i, j, qa = i[keep], j[keep], qa[keep]
    ta = np.einsum("nji,nj->ni", quat_to_matrix(qm[i]), pm[j] - pm[i])
    qb = quat_canonical(quat_multiply(qg[i], quat_conj(qg[j])))
    tb = pg[i] - np.einsum("nij,nj->ni", quat_to_matrix(qb), pg[j])
    return qa, ta, qb, tb


def check_excitation(T_WM, min_spread_deg=MIN_AXIS_SPREAD_DEG):
    """Raise :class:`DegenerateMotion` unless two relative-rotation axes are
    more than ``min_spread_deg`` apart (as lines, so sign is ignored)."""
    qm, _ = _stack(_as_poses(T_WM))
    ij = np.array(_relative_pairs(len(qm))).reshape(-1, 2)
    phi = quat_log(quat_multiply(quat_conj(qm[ij[:, 0]]), qm[ij[:, 1]]))
    th = np.linalg.norm(phi, axis=1)
    U = phi[th >= MIN_REL_ANGLE] / th[th >= MIN_REL_ANGLE, None]
    if len(U) < 2:
        raise DegenerateMotion("relative rotations too small to observe the hand-eye rotation")
    # a few hundred axes suffice to find the widest pair
    if len(U) > 400:
        U = U[np.linspace(0, len(U) - 1, 400).astype(int)]
    c = np.abs(U @ U.T).min()
    spread = float(np.degrees(np.arccos(np.clip(c, -1.0, 1.0))))
    if spread <= min_spread_deg:
        raise DegenerateMotion(
            f"relative rotation axes span only {spread:.2f} deg (need > {min_spread_deg} deg)"
        )
    return spread


def _lmat(q):
    """Batched left-multiplication matrices: ``q * p = L(q) p``."""
    w, x, y, z = np.moveaxis(q, -1, 0)
    return np.stack(
        [np.stack(r, -1) for r in ([w, -x, -y, -z], [x, w, -z, y], [y, z, w, -x], [z, -y, x, w])], -2
    )


def _rmat(q):
    """Batched right-multiplication matrices: ``p * q = R(q) p``."""
    w, x, y, z = np.moveaxis(q, -1, 0)
    return np.stack(
        [np.stack(r, -1) for r in ([w, -x, -y, -z], [x, w, z, -y], [y, -z, w, x], [z, y, -x, w])], -2
    )


def initial_guess(T_WM, T_IG):
    """Closed-form ``AX = XB`` rotation over quaternions, then translation by
    linear least squares; ``Y`` is the mean of ``T_WM_i X T_IG_i``.

    Falls back to identity for ``X`` when no relative motion is large enough.
    """
    T_WM, T_IG = _as_poses(T_WM), _as_poses(T_IG)
    qa, ta, qb, tb = _relative_motions(T_WM, T_IG)
    if len(qa) == 0:
        X = RigidMotion.identity()
    else:
        # q_A q_X = q_X q_B  <=>  (L(q_A) - R(q_B)) q_X = 0, both canonical (w >= 0);
        # q_X is the null vector, i.e. the bottom eigenvector of the normal matrix
        D = _lmat(qa) - _rmat(qb)
        q = np.linalg.eigh(np.einsum("nki,nkj->ij", D, D))[1][:, 0]
        R = quat_to_matrix(q)
        # (R_A - I) t_X = R_X t_B - t_A
        C = (quat_to_matrix(qa) - np.eye(3)).reshape(-1, 3)
        d = (tb @ R.T - ta).reshape(-1)
        t, *_ = np.linalg.lstsq(C, d, rcond=None)
        X = RigidMotion(q, t)
    Ys = [a @ X @ b for a, b in zip(T_WM, T_IG)]
    qs = np.array([y.rotation for y in Ys])
    # sign-aligned quaternion mean via the dominant eigenvector
    qm = np.linalg.eigh(qs.T @ qs)[1][:, -1]
    Y = RigidMotion(qm, np.mean([y.translation for y in Ys], axis=0))
    return X, Y


def solve_handeye(T_WM, T_IG, init=None, weights=(1.0, 1.0), max_iter=100, tol=1e-10, check=True) -> HandEyeSolution:
    """Gauss-Newton over ``(T_MI, T_WG)``.

    ``T_WM`` and ``T_IG`` are sequences of :class:`RigidMotion` or
    trajectories of equal length. ``weights`` scale the translational and
    rotational residual parts. Stops when the update norm drops below ``tol``;
    raises :class:`NoConvergence` (best iterate in ``.best``) after
    ``max_iter`` iterations.
    """
    T_WM, T_IG = _as_poses(T_WM), _as_poses(T_IG)
    if len(T_WM) != len(T_IG):
        raise ValueError("T_WM and T_IG differ in length")
    if len(T_WM) < 3:
        raise InsufficientData(f"hand-eye calibration needs at least 3 pairs, got {len(T_WM)}", n=len(T_WM))
    if check:
        check_excitation(T_WM)
    X, Y = initial_guess(T_WM, T_IG) if init is None else init
    w = np.repeat(np.asarray(weights, dtype=np.float64), 3)

    def cost(X, Y):
        r = residuals(T_WM, T_IG, X, Y) * w
        return float(np.sum(r * r))

    c = cost(X, Y)
    for it in range(1, max_iter + 1):
        H = np.zeros((12, 12))
        g = np.zeros(12)
        Yi = Y.inverse()
        for a, b in zip(T_WM, T_IG):
            E = Yi @ a @ X @ b
            r = E.log()
            Jr_inv = se3_right_jacobian_inv(r)
            J = np.hstack([Jr_inv @ b.inverse().adjoint(), -Jr_inv @ E.inverse().adjoint()]) * w[:, None]
            rw = r * w
            H += J.T @ J
            g += J.T @ rw
        try:
            delta = -np.linalg.solve(H, g)
        except np.linalg.LinAlgError:
            delta = -np.linalg.lstsq(H, g, rcond=None)[0]
        # halve the step until the cost does not increase
        step = 1.0
        for _ in range(30):
            Xn = X @ RigidMotion.exp(step * delta[:6])
            Yn = Y @ RigidMotion.exp(step * delta[6:])
            cn = cost(Xn, Yn)
            if cn <= c:
                break
            step *= 0.5
        else:
            Xn, Yn, cn = X, Y, c
        X, Y, c = Xn, Yn, cn
        if step * np.linalg.norm(delta) < tol:
            return HandEyeSolution(X, Y, float(np.sqrt(c / len(T_WM))), it, True)
    best = HandEyeSolution(X, Y, float(np.sqrt(c / len(T_WM))), max_iter, False)
    raise NoConvergence(f"hand-eye Gauss-Newton did not converge in {max_iter} iterations", best=best)


def rms_residual(T_WM, T_IG, T_MI, T_WG):
    r = residuals(_as_poses(T_WM), _as_poses(T_IG), T_MI, T_WG)
    return float(np.sqrt(np.mean(np.sum(r * r, axis=1))))


def convert_mocap_to_gt(mocap: Trajectory, T_MI: RigidMotion) -> Trajectory:
    """``T_WI = T_WM T_MI`` for every pose; timestamps unchanged."""
    return transform_trajectory(None, mocap, T_MI, parent=mocap.parent, child="I")
