"""Overlapping Allan deviation and white-noise / bias random-walk fits.

For a series ``g`` sampled every ``tau0`` the cluster means over ``n``
samples are ``gbar_k = (S[k+n] - S[k]) / n`` with ``S`` the prefix sum, and
the overlapping estimator is

    sigma_A^2(n tau0) = 1 / (2 (M - 2n + 1)) * sum_k (gbar_{k+n} - gbar_k)^2

over all ``M - 2n + 1`` start indices, so each cluster size costs O(M).

Two noise processes are fitted on a log-log plot: white noise
(``sigma_A = sigma_w / sqrt(tau)``, read at 1 s) and a bias random walk
(``sigma_A = sigma_b sqrt(tau / 3)``, read at 3 s).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EmptyRange, InsufficientData

_CHUNK = 1 << 20


@dataclass
class AllanCurve:
    tau: np.ndarray  # (K,) seconds
    dev: np.ndarray  # (K, A) deviation per axis
    counts: np.ndarray  # (K,) number of averaged differences

    @property
    def n_axes(self):
        return self.dev.shape[1]

    def mean_dev(self, axes=None):
        """Deviation averaged over ``axes`` (all by default)."""
        d = self.dev if axes is None else self.dev[:, list(np.atleast_1d(axes))]
        return d.mean(axis=1)


@dataclass
class NoiseParams:
    sigma_w: float
    sigma_b: float
    white_range: tuple = (0.02, 1.0)
    rw_range: tuple = (1000.0, 6000.0)


def default_cluster_sizes(m, per_decade=30, max_fraction=1.0 / 3.0):
    """Log-spaced unique cluster sizes from 1 up to ``m * max_fraction``."""
    top = int(m * max_fraction)
    if top < 1:
        return np.array([], dtype=np.int64)
    k = int(np.ceil(np.log10(top) * per_decade)) + 1
    n = np.unique(np.floor(np.logspace(0, np.log10(top), k)).astype(np.int64))
    return n[n >= 1]


def _prefix(x):
    s = np.empty(len(x) + 1)
    s[0] = 0.0
    np.cumsum(x, out=s[1:])
    return s


def _avar_1d(s, n):
    """Overlapping Allan variance for one cluster size from prefix sums ``s``."""
    count = len(s) - 2 * n
    total = 0.0
    for k0 in range(0, count, _CHUNK):
        k1 = min(count, k0 + _CHUNK)
        d = s[k0 + 2 * n : k1 + 2 * n] - 2.0 * s[k0 + n : k1 + n] + s[k0:k1]
        total += float(np.dot(d, d))
    return total / (2.0 * count * n * n), count


def allan_deviation(samples, tau0, cluster_sizes=None) -> AllanCurve:
    """Overlapping Allan deviation of one or more axes.

    ``samples`` is ``(M,)`` or ``(M, A)``; ``cluster_sizes`` defaults to
    :func:`default_cluster_sizes`. Raises :class:`InsufficientData` when a
    cluster size needs more than ``M`` samples.
    """
    x = np.asarray(samples, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    m = x.shape[0]
    ns = default_cluster_sizes(m) if cluster_sizes is None else np.asarray(cluster_sizes, dtype=np.int64).reshape(-1)
    if len(ns) == 0:
        raise InsufficientData(f"{m} samples are too few for any cluster size", n=None)
    ns = np.unique(ns)
    if ns[0] < 1:
        raise InsufficientData(f"cluster size must be >= 1, got {ns[0]}", n=int(ns[0]))
    if m < 2 * ns[-1] + 1:
        raise InsufficientData(f"cluster size n={ns[-1]} needs at least {2 * ns[-1] + 1} samples, got {m}", n=int(ns[-1]))
    # centring keeps prefix sums small; the estimator is offset-invariant anyway
    xc = x - x.mean(axis=0)
    var = np.empty((len(ns), x.shape[1]))
    counts = np.empty(len(ns), dtype=np.int64)
    for a in range(x.shape[1]):
        s = _prefix(xc[:, a])
        for j, n in enumerate(ns):
            var[j, a], counts[j] = _avar_1d(s, int(n))
    return AllanCurve(ns * float(tau0), np.sqrt(var), counts)


def allan_rw_closed_form(n, sigma_b_step):
    """Exact Allan variance of a discrete random walk with step std ``sigma_b_step``."""
    n = np.asarray(n, dtype=np.float64)
    return sigma_b_step**2 * (1.0 / (6.0 * n) + n / 3.0)


def _select(curve, tau_range, axes):
    lo, hi = tau_range
    dev = curve.mean_dev(axes)
    m = (curve.tau >= lo) & (curve.tau <= hi)
    if np.count_nonzero(m) < 2:
        raise EmptyRange(f"fewer than 2 curve points in tau range [{lo}, {hi}] s")
    return curve.tau[m], dev[m]


def _fit_half_slope(tau, dev, slope, tau_ref):
    if np.any(dev <= 0):
        return 0.0
    return float(np.exp(np.mean(np.log(dev) - slope * np.log(tau / tau_ref))))


def fit_white_noise(curve: AllanCurve, tau_range=(0.02, 1.0), axes=None) -> float:
    """Fit a slope -1/2 line in log-log space and return its value at 1 s."""
    tau, dev = _select(curve, tau_range, axes)
    return _fit_half_slope(tau, dev, -0.5, 1.0)


def fit_bias_rw(curve: AllanCurve, tau_range=(1000.0, 6000.0), axes=None) -> float:
    """Fit a slope +1/2 line in log-log space and return its value at 3 s."""
    tau, dev = _select(curve, tau_range, axes)
    return _fit_half_slope(tau, dev, 0.5, 3.0)


def loglog_slope(curve: AllanCurve, tau_range, axes=None) -> float:
    tau, dev = _select(curve, tau_range, axes)
    return float(np.polyfit(np.log(tau), np.log(dev), 1)[0])


def identify_noise(samples, tau0, white_range=(0.02, 1.0), rw_range=(1000.0, 6000.0), axes=None, cluster_sizes=None):
    curve = allan_deviation(samples, tau0, cluster_sizes)
    return curve, NoiseParams(
        fit_white_noise(curve, white_range, axes), fit_bias_rw(curve, rw_range, axes), tuple(white_range), tuple(rw_range)
    )


def write_curve(curve: AllanCurve, path):
    """CSV with ``#tau_s,dev_x,dev_y,dev_z,dev_mean``."""
    names = [f"dev_{a}" for a in "xyz"[: curve.n_axes]] if curve.n_axes <= 3 else [f"dev_{i}" for i in range(curve.n_axes)]
    table = np.column_stack([curve.tau, curve.dev, curve.mean_dev()])
    header = "#" + ",".join(["tau_s", *names, "dev_mean"])
    rows = [",".join(repr(float(v)) for v in r) for r in table]
    with open(path, "w", encoding="ascii", newline="\n") as f:
        f.write("\n".join([header, *rows]) + "\n")
