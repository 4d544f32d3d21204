"""Trajectory error metrics against ground truth with gaps.

Ground truth may only cover parts of a run (e.g. the start and the end of a
long walk), so evaluation first splits it into contiguous segments, then
pairs every estimated pose that falls inside a segment with the ground-truth
pose interpolated to its timestamp.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import Trajectory, interpolate_many, quat_conj, quat_multiply, quat_to_matrix, rotation_angle, RigidMotion
from .errors import DegenerateGeometry, EmptyAssociation, NoPairs

DEFAULT_GAP_S = 0.5
DEFAULT_MAX_GAP_S = 0.05
DIVERGENCE_THRESHOLD_M = 2.0
END_WINDOW_S = 10.0


def split_segments(gt: Trajectory, gap_threshold=DEFAULT_GAP_S):
    """Contiguous runs of ``gt`` separated by gaps longer than ``gap_threshold`` seconds."""
    if len(gt) == 0:
        return []
    cut = np.flatnonzero(np.diff(gt.t) > gap_threshold * 1e9) + 1
    bounds = np.concatenate([[0], cut, [len(gt)]])
    return [gt[int(a) : int(b)] for a, b in zip(bounds[:-1], bounds[1:])]


@dataclass
class AssociatedTrack:
    t: np.ndarray  # (N,) int64 ns
    gt_q: np.ndarray
    gt_p: np.ndarray
    est_q: np.ndarray
    est_p: np.ndarray
    segment: np.ndarray  # (N,) segment label per pair

    def __len__(self):
        return len(self.t)

    def select(self, mask):
        return AssociatedTrack(self.t[mask], self.gt_q[mask], self.gt_p[mask], self.est_q[mask], self.est_p[mask], self.segment[mask])

    @property
    def segments(self):
        return [int(s) for s in np.unique(self.segment)]


def associate(gt: Trajectory, est: Trajectory, max_gap=DEFAULT_MAX_GAP_S, gap_threshold=DEFAULT_GAP_S) -> AssociatedTrack:
    """Pair each estimate inside a ground-truth segment with interpolated ground truth.

    An estimate is kept when the ground-truth samples bracketing it are both
    within ``max_gap`` seconds.
    """
    segs = split_segments(gt, gap_threshold)
    parts = []
    gap_ns = max_gap * 1e9
    for label, seg in enumerate(segs):
        inside = (est.t >= seg.t[0]) & (est.t <= seg.t[-1])
        idx = np.flatnonzero(inside)
        if len(idx) == 0:
            continue
        t = est.t[idx]
        hi = np.searchsorted(seg.t, t, side="left")
        lo = np.searchsorted(seg.t, t, side="right") - 1
        hi = np.minimum(hi, len(seg) - 1)
        ok = (t - seg.t[lo] <= gap_ns) & (seg.t[hi] - t <= gap_ns)
        idx, t = idx[ok], t[ok]
        if len(idx) == 0:
            continue
        q, p = interpolate_many(seg, t)
        parts.append((t, q, p, est.q[idx], est.p[idx], np.full(len(idx), label)))
    if not parts:
        raise EmptyAssociation("no estimated pose falls inside the ground-truth coverage")
    cols = [np.concatenate(c) for c in zip(*parts)]
    return AssociatedTrack(*cols)


def align_se3(p, p_hat) -> RigidMotion:
    """Rigid ``T`` minimising ``sum |T p_i - p_hat_i|^2`` (no scale).

    Centroids plus SVD of the cross-covariance, with the determinant sign
    guard against reflections.
    """
    p = np.asarray(p, dtype=np.float64).reshape(-1, 3)
    q = np.asarray(p_hat, dtype=np.float64).reshape(-1, 3)
    if len(p) != len(q):
        raise ValueError("point sets differ in length")
    if len(p) < 3:
        raise DegenerateGeometry(f"alignment needs at least 3 point pairs, got {len(p)}")
    mp, mq = p.mean(axis=0), q.mean(axis=0)
    P, Q = p - mp, q - mq
    sv = np.linalg.svd(P, compute_uv=False)
    if sv[0] == 0 or sv[1] <= 1e-9 * sv[0]:
        raise DegenerateGeometry("points are coincident or collinear; rotation is unobservable")
    U, _, Vt = np.linalg.svd(Q.T @ P)
    S = np.eye(3)
    S[2, 2] = np.sign(np.linalg.det(U @ Vt)) or 1.0
    R = U @ S @ Vt
    return RigidMotion.from_matrix(np.block([[R, (mq - R @ mp)[:, None]], [np.zeros((1, 3)), np.ones((1, 1))]]))


def _ate_residuals(track):
    T = align_se3(track.est_p, track.gt_p)
    return np.linalg.norm(T.apply(track.est_p) - track.gt_p, axis=1)


def ate(track: AssociatedTrack) -> float:
    """RMS position error after one optimal rigid alignment of all pairs."""
    r = _ate_residuals(track)
    return float(np.sqrt(np.mean(r * r)))


def _relative(q, p, i, j):
    """``T_i^-1 T_j`` as quaternion and translation arrays."""
    qi = quat_conj(q[i])
    return quat_multiply(qi, q[j]), np.einsum("nji,nj->ni", quat_to_matrix(q[i]), p[j] - p[i])


def rpe_errors(track: AssociatedTrack, delta=1.0, tolerance=0.1):
    """Per-pair relative errors ``E_i = (G_i^-1 G_j)^-1 (T_i^-1 T_j)``.

    ``G`` is ground truth and ``T`` the estimate; ``j`` is the pose nearest
    to ``t_i + delta`` within the same segment, accepted if it is within
    ``tolerance * delta`` and the target does not lie past the segment end. Returns ``(translation norms, angles rad)``.
    """
    d_ns = delta * 1e9
    I, J = [], []
    for s in track.segments:
        idx = np.flatnonzero(track.segment == s)
        t = track.t[idx].astype(np.float64)
        target = t + d_ns
        k = np.clip(np.searchsorted(t, target), 1, len(t) - 1) if len(t) > 1 else np.zeros(len(t), dtype=int)
        if len(t) > 1:
            k = np.where(np.abs(t[k - 1] - target) <= np.abs(t[k] - target), k - 1, k)
        # targets past the segment end have no partner; snapping them to the
        # last pose would shorten the interval
        ok = (np.abs(t[k] - target) <= tolerance * d_ns) & (k != np.arange(len(t))) & (target <= t[-1] + 0.5)
        I.append(idx[ok])
        J.append(idx[k[ok]])
    i = np.concatenate(I) if I else np.array([], dtype=int)
    j = np.concatenate(J) if J else np.array([], dtype=int)
    if len(i) == 0:
        raise NoPairs(f"no pose pairs {delta} s apart inside a ground-truth segment")
    gq, gp = _relative(track.gt_q, track.gt_p, i, j)
    eq, ep = _relative(track.est_q, track.est_p, i, j)
    # E = G_rel^-1 T_rel
    Eq = quat_multiply(quat_conj(gq), eq)
    Et = np.einsum("nji,nj->ni", quat_to_matrix(gq), ep - gp)
    return np.linalg.norm(Et, axis=1), rotation_angle(Eq)


def rpe(track: AssociatedTrack, delta=1.0, tolerance=0.1):
    """RMS translational (m) and rotational (deg) relative pose error."""
    trans, ang = rpe_errors(track, delta, tolerance)
    return float(np.sqrt(np.mean(trans**2))), float(np.degrees(np.sqrt(np.mean(ang**2))))


def is_diverged(end_ate, threshold=DIVERGENCE_THRESHOLD_M) -> bool:
    return bool(end_ate > threshold)


def end_segment(track: AssociatedTrack, end_window_s=END_WINDOW_S) -> AssociatedTrack:
    """Pairs of the last ground-truth segment, or of the final ``end_window_s``
    seconds when ground truth covers the run in one piece."""
    segs = track.segments
    if len(segs) >= 2:
        return track.select(track.segment == segs[-1])
    return track.select(track.t >= track.t[-1] - end_window_s * 1e9)


def classify_divergence(track: AssociatedTrack, threshold=DIVERGENCE_THRESHOLD_M, end_window_s=END_WINDOW_S):
    """``(diverged, end_ate)``: diverged iff the end-segment ATE exceeds ``threshold``."""
    e = ate(end_segment(track, end_window_s))
    return is_diverged(e, threshold), e


def trajectory_length(gt: Trajectory, gap_threshold=DEFAULT_GAP_S) -> float:
    """Sum of inter-sample translation norms within each ground-truth segment."""
    return float(sum(np.sum(np.linalg.norm(np.diff(s.p, axis=0), axis=1)) for s in split_segments(gt, gap_threshold)))


@dataclass
class EvalReport:
    ate_m: float
    rpe_trans_m: float
    rpe_rot_deg: float
    delta_s: float
    segment_ate_m: list = field(default_factory=list)
    end_ate_m: float = 0.0
    diverged: bool = False
    length_m: float = 0.0
    n_pairs: int = 0

    def lines(self):
        out = [
            f"ate_m={self.ate_m:.6f}",
            f"rpe_trans_m={self.rpe_trans_m:.6f}",
            f"rpe_rot_deg={self.rpe_rot_deg:.6f}",
            f"delta_s={self.delta_s:g}",
        ]
        out += [f"segment_{i}_ate_m={v:.6f}" for i, v in enumerate(self.segment_ate_m)]
        out += [
            f"end_ate_m={self.end_ate_m:.6f}",
            f"diverged={'true' if self.diverged else 'false'}",
            f"length_m={self.length_m:.6f}",
            f"n_pairs={self.n_pairs}",
        ]
        return out


def evaluate(gt: Trajectory, est: Trajectory, delta_s=1.0, max_gap=DEFAULT_MAX_GAP_S, gap_threshold=DEFAULT_GAP_S) -> EvalReport:
    """Full report: joint-alignment ATE, RPE at ``delta_s``, per-segment ATEs
    (each with its own alignment), divergence and ground-truth length.

    RPE fields are NaN when no pose pairs ``delta_s`` apart exist.
    """
    track = associate(gt, est, max_gap, gap_threshold)
    try:
        rt, rr = rpe(track, delta_s)
    except NoPairs:
        rt = rr = float("nan")
    seg_ates = [ate(track.select(track.segment == s)) for s in track.segments]
    diverged, end_ate = classify_divergence(track)
    return EvalReport(
        ate(track), rt, rr, delta_s, seg_ates, end_ate, diverged, trajectory_length(gt, gap_threshold), len(track)
    )
