"""Linear photometric model ``I(x) = t V(x) B(p(x))``.

``t`` is the exposure time, ``V`` the per-pixel vignette in [0, 1] and ``B``
the irradiance of the planar target point ``p(x)`` a pixel looks at. Pixel
to target correspondences are integer index maps: ``corr[y, x]`` is the flat
index of the texel seen by pixel ``(x, y)``, or -1 when it sees none.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import AllSaturated, DataError, MissingCorrespondence, MissingFile, ParseError, UnobservedPixel

MIN_VIGNETTE = 0.01
VIEWS_HEADER = "#file,exposure_ns,dx,dy"
_INT_RE = re.compile(r"[+-]?[0-9]+", re.ASCII)


def shift_correspondence(width, height, tex_shape, offset):
    """Fronto-parallel view: pixel ``(x, y)`` sees texel ``(x + dx, y + dy)``."""
    dx, dy = offset
    th, tw = tex_shape
    if dx < 0 or dy < 0 or dx + width > tw or dy + height > th:
        raise MissingCorrespondence(f"view offset {offset} leaves the {tw}x{th} target")
    y, x = np.mgrid[0:height, 0:width]
    return (y + dy) * tw + (x + dx)


def render_image(texture, t, V, corr):
    """``I = t * V * B[corr]`` with unit response scale."""
    B = np.asarray(texture, dtype=np.float64).reshape(-1)
    corr = np.asarray(corr)
    if corr.shape != np.shape(V):
        raise MissingCorrespondence(f"correspondence shape {corr.shape} differs from image {np.shape(V)}")
    if np.any(corr < 0) or np.any(corr >= B.size):
        raise MissingCorrespondence("some pixels have no texel correspondence")
    return t * np.asarray(V, dtype=np.float64) * B[corr]


def correct_image(image, t, V, min_vignette=MIN_VIGNETTE):
    """Irradiance ``I / (t V)``; returns ``(B_hat, valid)`` with NaN where ``V < min_vignette``."""
    if t <= 0:
        raise ValueError("exposure time must be positive")
    V = np.asarray(V, dtype=np.float64)
    valid = V >= min_vignette
    out = np.full(V.shape, np.nan)
    out[valid] = np.asarray(image, dtype=np.float64)[valid] / (t * V[valid])
    return out, valid


@dataclass
class VignetteResult:
    V: np.ndarray  # (H, W), max 1
    texture: np.ndarray  # flat irradiance per texel, NaN where unobserved
    objective: list = field(default_factory=list)  # after every half-step
    iterations: int = 0
    converged: bool = False


def _objective(I, t, V, B, pix, tex):
    r = I - t * V[pix] * B[tex]
    return float(np.dot(r, r))


def estimate_vignette(images, times, corrs, n_texels=None, max_iter=200, tol=1e-8):
    """Alternating least squares for vignette and target texture.

    Each half-step is the closed-form per-texel (then per-pixel) minimiser
    of ``sum (I - t V B)^2``, so the objective never increases. Stops when
    the relative objective change drops below ``tol`` or the objective
    reaches the rounding level of the intensities; the result is scaled so ``max V = 1`` and clipped to [0, 1].
    Pixels with ``corr < 0`` or non-finite intensity are ignored.
    """
    if len(images) < 2:
        raise DataError("vignette estimation needs at least two images")
    shape = np.shape(images[0])
    npix = int(np.prod(shape))
    I_all, t_all, pix_all, tex_all = [], [], [], []
    for img, t, c in zip(images, times, corrs):
        img = np.asarray(img, dtype=np.float64).reshape(-1)
        c = np.asarray(c).reshape(-1)
        if img.size != npix or c.size != npix:
            raise DataError("images and correspondences must share one shape")
        ok = (c >= 0) & np.isfinite(img)
        I_all.append(img[ok])
        t_all.append(np.full(np.count_nonzero(ok), float(t)))
        pix_all.append(np.flatnonzero(ok))
        tex_all.append(c[ok])
    I = np.concatenate(I_all)
    t = np.concatenate(t_all)
    pix = np.concatenate(pix_all)
    tex = np.concatenate(tex_all).astype(np.int64)
    n_tex = int(tex.max()) + 1 if n_texels is None else int(n_texels)
    if np.any(np.bincount(pix, minlength=npix) == 0):
        bad = int(np.flatnonzero(np.bincount(pix, minlength=npix) == 0)[0])
        raise UnobservedPixel(f"pixel (x={bad % shape[1]}, y={bad // shape[1]}) is not observed in any image")
    seen = np.bincount(tex, minlength=n_tex) > 0

    # below this the residuals are rounding noise and the objective only jitters
    floor = (16.0 * np.finfo(np.float64).eps) ** 2 * float(np.dot(I, I))
    V = np.ones(npix)
    B = np.zeros(n_tex)
    history = []
    prev = None
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        a = t * V[pix]
        num = np.bincount(tex, a * I, n_tex)
        den = np.bincount(tex, a * a, n_tex)
        B = np.divide(num, den, out=np.zeros(n_tex), where=den > 0)
        history.append(_objective(I, t, V, B, pix, tex))
        b = t * B[tex]
        num = np.bincount(pix, b * I, npix)
        den = np.bincount(pix, b * b, npix)
        V = np.divide(num, den, out=np.ones(npix), where=den > 0)
        cur = _objective(I, t, V, B, pix, tex)
        history.append(cur)
        if cur <= floor or (prev is not None and abs(prev - cur) <= tol * prev):
            converged = True
            break
        prev = cur
    s = V.max()
    V = np.clip(V / s, 0.0, 1.0).reshape(shape)
    B = np.where(seen, B * s, np.nan)
    return VignetteResult(V, B, history, it, converged)


# --------------------------------------------------------------------------
# Exposure control
# --------------------------------------------------------------------------


@dataclass
class ExposureModel:
    k: float  # lux * s
    t_min: float
    t_max: float

    def __post_init__(self):
        if not (self.k > 0 and 0 < self.t_min < self.t_max):
            raise ValueError(f"invalid exposure model k={self.k}, t_min={self.t_min}, t_max={self.t_max}")

    def predict(self, lux):
        return np.clip(self.k / np.asarray(lux, dtype=np.float64), self.t_min, self.t_max)


def fit_exposure_control(lux, t, t_min=None, t_max=None) -> ExposureModel:
    """Least-squares ``k`` in ``t = k / L`` over unsaturated samples.

    Samples at or beyond the clamp bounds are excluded; the bounds default to
    the smallest and largest observed exposure.
    """
    L = np.asarray(lux, dtype=np.float64).reshape(-1)
    t = np.asarray(t, dtype=np.float64).reshape(-1)
    ok = np.isfinite(L) & (L > 0) & np.isfinite(t)
    L, t = L[ok], t[ok]
    if len(t) == 0:
        raise AllSaturated("no usable exposure samples")
    t_min = float(t.min()) if t_min is None else float(t_min)
    t_max = float(t.max()) if t_max is None else float(t_max)
    free = (t > t_min) & (t < t_max)
    if not np.any(free):
        raise AllSaturated("every exposure sample sits at a clamp bound")
    u = 1.0 / L[free]
    k = float(np.dot(u, t[free]) / np.dot(u, u))
    return ExposureModel(k, t_min, t_max)


# --------------------------------------------------------------------------
# PGM and view-set I/O
# --------------------------------------------------------------------------


def write_pgm(path, values):
    """16-bit binary PGM with ``round(65535 * clip(values, 0, 1))``."""
    a = np.asarray(values, dtype=np.float64)
    h, w = a.shape
    data = np.rint(65535.0 * np.clip(a, 0.0, 1.0)).astype(">u2")
    Path(path).write_bytes(f"P5\n{w} {h}\n65535\n".encode("ascii") + data.tobytes())


def _pgm_tokens(data, count):
    tokens, i = [], 2
    while len(tokens) < count:
        while i < len(data) and (chr(data[i]).isspace() or data[i] == ord("#")):
            if data[i] == ord("#"):
                while i < len(data) and data[i] not in b"\r\n":
                    i += 1
            i += 1
        j = i
        while j < len(data) and not chr(data[j]).isspace():
            j += 1
        if j == i:
            raise ParseError("truncated PGM header")
        tokens.append(data[i:j])
        i = j
    return tokens, i + 1


def parse_pgm(data: bytes, source=None):
    """Binary (P5) PGM to floats in [0, 1]."""
    if data[:2] != b"P5":
        raise ParseError("not a binary PGM (missing P5 magic)", source=source)
    try:
        tokens, start = _pgm_tokens(data, 3)
        w, h, maxval = (int(x.decode("ascii")) for x in tokens)
    except (ValueError, UnicodeDecodeError):
        raise ParseError("malformed PGM header", source=source) from None
    if w <= 0 or h <= 0 or not 0 < maxval < 65536:
        raise ParseError(f"bad PGM dimensions {w}x{h} maxval {maxval}", source=source)
    dtype = ">u2" if maxval > 255 else "u1"
    n = w * h * np.dtype(dtype).itemsize
    if len(data) - start < n:
        raise ParseError("PGM pixel data truncated", source=source)
    px = np.frombuffer(data, dtype=dtype, count=w * h, offset=start)
    return px.reshape(h, w).astype(np.float64) / maxval


def read_pgm(path):
    path = Path(path)
    try:
        data = path.read_bytes()
    except FileNotFoundError:
        raise MissingFile(path) from None
    return parse_pgm(data, source=path)


def write_views(directory, images, times, offsets):
    """Store a view set: ``view_NNN.pgm`` plus ``views.csv``."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    rows = [VIEWS_HEADER]
    for i, (img, t, (dx, dy)) in enumerate(zip(images, times, offsets)):
        name = f"view_{i:03d}.pgm"
        write_pgm(d / name, img)
        rows.append(f"{name},{int(round(t * 1e9))},{int(dx)},{int(dy)}")
    (d / "views.csv").write_bytes(("\n".join(rows) + "\n").encode("ascii"))


def parse_views_index(text, source=None):
    """Entries ``(file, exposure_ns, dx, dy)`` of a ``views.csv`` index."""
    if isinstance(text, (bytes, bytearray)):
        try:
            text = bytes(text).decode("ascii")
        except UnicodeDecodeError:
            raise ParseError("non-ASCII byte", source=source) from None
    lines = [ln.rstrip("\r") for ln in text.split("\n") if ln.strip()]
    if not lines or lines[0] != VIEWS_HEADER:
        raise ParseError(f"bad header; expected {VIEWS_HEADER!r}", 1, source)
    entries = []
    for no, ln in enumerate(lines[1:], start=2):
        f = [s.strip() for s in ln.split(",")]
        if len(f) != 4:
            raise ParseError(f"expected 4 columns, got {len(f)}", no, source)
        if not all(_INT_RE.fullmatch(s) for s in f[1:]):
            raise ParseError("malformed integer", no, source)
        e, dx, dy = int(f[1]), int(f[2]), int(f[3])
        if e <= 0 or dx < 0 or dy < 0:
            raise ParseError("exposure must be positive and offsets non-negative", no, source)
        if not f[0] or "/" in f[0] or "\\" in f[0]:
            raise ParseError("view file must be a bare file name", no, source)
        entries.append((f[0], e, dx, dy))
    if not entries:
        raise ParseError("no views listed", source=source)
    return entries


def read_views(directory):
    """Load a view set; returns ``(images, times_s, corrs)``.

    The target is taken just large enough to contain every shifted view.
    """
    d = Path(directory)
    index = d / "views.csv"
    try:
        data = index.read_bytes()
    except FileNotFoundError:
        raise MissingFile(index) from None
    entries = parse_views_index(data, index)
    images = [read_pgm(d / name) for name, *_ in entries]
    h, w = images[0].shape
    if any(img.shape != (h, w) for img in images):
        raise DataError("views differ in size")
    tex_shape = (h + max(e[3] for e in entries), w + max(e[2] for e in entries))
    corrs = [shift_correspondence(w, h, tex_shape, (dx, dy)) for _, _, dx, dy in entries]
    return images, [e[1] * 1e-9 for e in entries], corrs
