"""On-disk dataset layout: CSV streams and the INI calibration file.

CSV files are comma separated with a single ``#``-prefixed header line, UNIX
newlines and ASCII decimal numbers::

    imu.csv        #t_ns,gx,gy,gz,ax,ay,az,temp_c        (temp_c may be empty)
    mocap.csv      #t_ns,tx,ty,tz,qw,qx,qy,qz
    exposures.csv  #t_ns,exposure_ns,lux                 (lux may be empty)
    pairs.csv      #t_ns,<T_WM tx..qz>,<T_IG tx..qz>

Floats are written with ``repr`` (shortest string that round-trips), so
``load(write(x)) == x`` bit for bit. Every parser accepts a path, ``bytes`` or
``str`` and reports failures as :class:`~vicalib.errors.ParseError`
subclasses carrying the 1-based line number.
"""

from __future__ import annotations

import configparser
import logging
import re
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .core import RigidMotion, Trajectory
from .errors import DataError, MissingFile, MissingSection, MonotonicityError, NormError, ParseError
from .imu import ImuData
from .imucal import ImuIntrinsics

log = logging.getLogger(__name__)

IMU_HEADER = "#t_ns,gx,gy,gz,ax,ay,az,temp_c"
MOCAP_HEADER = "#t_ns,tx,ty,tz,qw,qx,qy,qz"
EXPOSURE_HEADER = "#t_ns,exposure_ns,lux"
PAIRS_HEADER = (
    "#t_ns,twm_tx,twm_ty,twm_tz,twm_qw,twm_qx,twm_qy,twm_qz,"
    "tig_tx,tig_ty,tig_tz,tig_qw,tig_qx,tig_qy,tig_qz"
)

NORM_WARN = 1e-3
NORM_REJECT = 1e-2
MAX_TIME_SHIFT_NS = 1_000_000_000

_INT_RE = re.compile(r"[+-]?[0-9]+", re.ASCII)
_FLOAT_RE = re.compile(r"[+-]?(?:[0-9]+\.?[0-9]*|\.[0-9]+)(?:[eE][+-]?[0-9]+)?", re.ASCII)
_I64 = np.iinfo(np.int64)


class NormWarning(UserWarning):
    """Quaternion norm off by more than the warning tolerance; normalised."""


# --------------------------------------------------------------------------
# Scalar parsing
# --------------------------------------------------------------------------


def _int(s, line, source, what="integer"):
    if not _INT_RE.fullmatch(s):
        raise ParseError(f"malformed {what} {s[:40]!r}", line, source)
    v = int(s)
    if not _I64.min <= v <= _I64.max:
        raise ParseError(f"{what} {s[:40]} out of int64 range", line, source)
    return v


def _float(s, line, source):
    if not _FLOAT_RE.fullmatch(s):
        raise ParseError(f"malformed number {s[:40]!r}", line, source)
    v = float(s)
    if not np.isfinite(v):
        raise ParseError(f"number {s[:40]} overflows", line, source)
    return v


def _fmt(v):
    return repr(float(v))


# --------------------------------------------------------------------------
# Generic CSV reader
# --------------------------------------------------------------------------


def _read_text(src):
    """Return ``(text, source_name)`` from a path, bytes or str."""
    if isinstance(src, (bytes, bytearray, memoryview)):
        data, name = bytes(src), "<bytes>"
    elif isinstance(src, str) and ("\n" in src or src.startswith("#")):
        return src, "<string>"
    else:
        path = Path(src)
        try:
            data = path.read_bytes()
        except FileNotFoundError:
            raise MissingFile(path) from None
        except OSError as e:
            raise DataError(f"{path}: {e.strerror or e}") from e
        name = str(path)
    try:
        return data.decode("ascii"), name
    except UnicodeDecodeError as e:
        line = data[: e.start].count(b"\n") + 1
        raise ParseError("non-ASCII byte", line, name) from None


def _rows(src, header, ncols):
    """Yield ``(line_no, fields)`` for each data row after checking the header."""
    text, name = _read_text(src)
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines:
        raise ParseError("empty file; expected header " + header, 1, name)
    if lines[0].rstrip("\r") != header:
        raise ParseError(f"bad header {lines[0][:60]!r}; expected {header!r}", 1, name)
    out = []
    for no, raw in enumerate(lines[1:], start=2):
        row = raw[:-1] if raw.endswith("\r") else raw
        if not row.strip() or row.startswith("#"):
            continue
        fields = row.split(",")
        if len(fields) != ncols:
            raise ParseError(f"expected {ncols} columns, got {len(fields)}", no, name)
        out.append((no, [f.strip() for f in fields]))
    return out, name


def _check_increasing(t, lines, name):
    if len(t) > 1:
        bad = np.flatnonzero(np.diff(t) <= 0)
        if len(bad):
            i = int(bad[0])
            raise MonotonicityError(int(t[i]), int(t[i + 1]), lines[i + 1], name)


def _quat(vals, line, name):
    q = np.array(vals, dtype=np.float64)
    n = float(np.linalg.norm(q))
    dev = abs(n - 1.0)
    if dev > NORM_REJECT:
        raise NormError(f"quaternion norm {n:.6g} deviates from 1 by more than {NORM_REJECT}", line, name)
    if dev > NORM_WARN:
        where = name if line is None else f"{name}:line {line}"
        msg = f"{where}: quaternion norm {n:.6g} normalised"
        warnings.warn(msg, NormWarning, stacklevel=4)
        log.warning(msg)
    return q


def _write_lines(path, header, rows):
    Path(path).write_bytes(("\n".join([header, *rows]) + "\n").encode("ascii"))


# --------------------------------------------------------------------------
# IMU
# --------------------------------------------------------------------------


def load_imu(src) -> ImuData:
    rows, name = _rows(src, IMU_HEADER, 8)
    n = len(rows)
    t = np.empty(n, dtype=np.int64)
    vals = np.empty((n, 6))
    temp = np.full(n, np.nan)
    lines = []
    for i, (no, f) in enumerate(rows):
        t[i] = _int(f[0], no, name, "timestamp")
        vals[i] = [_float(s, no, name) for s in f[1:7]]
        if f[7]:
            temp[i] = _float(f[7], no, name)
        lines.append(no)
    _check_increasing(t, lines, name)
    return ImuData(t, vals[:, :3], vals[:, 3:], temp)


def write_imu(imu: ImuData, path):
    rows = []
    for i in range(len(imu)):
        temp = "" if np.isnan(imu.temp_c[i]) else _fmt(imu.temp_c[i])
        nums = ",".join(_fmt(v) for v in (*imu.gyro[i], *imu.accel[i]))
        rows.append(f"{int(imu.t[i])},{nums},{temp}")
    _write_lines(path, IMU_HEADER, rows)


# --------------------------------------------------------------------------
# Poses
# --------------------------------------------------------------------------


def _parse_pose_columns(rows, name, start):
    n = len(rows)
    p = np.empty((n, 3))
    q = np.empty((n, 4))
    for i, (no, f) in enumerate(rows):
        p[i] = [_float(s, no, name) for s in f[start : start + 3]]
        q[i] = _quat([_float(s, no, name) for s in f[start + 3 : start + 7]], no, name)
    return q, p


def load_mocap(src, parent="W", child="M") -> Trajectory:
    """MoCap (or any pose) stream; quaternions are normalised on load."""
    rows, name = _rows(src, MOCAP_HEADER, 8)
    t = np.array([_int(f[0], no, name, "timestamp") for no, f in rows], dtype=np.int64)
    _check_increasing(t, [no for no, _ in rows], name)
    q, p = _parse_pose_columns(rows, name, 1)
    return Trajectory(t, q, p, parent, child)


def _pose_fields(q, p):
    return ",".join(_fmt(v) for v in (*p, *q))


def write_mocap(traj: Trajectory, path):
    rows = [f"{int(traj.t[i])},{_pose_fields(traj.q[i], traj.p[i])}" for i in range(len(traj))]
    _write_lines(path, MOCAP_HEADER, rows)


def load_pairs(src):
    """Hand-eye pairs; returns ``(t, T_WM trajectory, T_IG trajectory)``."""
    rows, name = _rows(src, PAIRS_HEADER, 15)
    t = np.array([_int(f[0], no, name, "timestamp") for no, f in rows], dtype=np.int64)
    _check_increasing(t, [no for no, _ in rows], name)
    q_wm, p_wm = _parse_pose_columns(rows, name, 1)
    q_ig, p_ig = _parse_pose_columns(rows, name, 8)
    return t, Trajectory(t, q_wm, p_wm, "W", "M"), Trajectory(t, q_ig, p_ig, "I", "G")


def write_pairs(t, twm: Trajectory, tig: Trajectory, path):
    rows = [
        f"{int(t[i])},{_pose_fields(twm.q[i], twm.p[i])},{_pose_fields(tig.q[i], tig.p[i])}"
        for i in range(len(t))
    ]
    _write_lines(path, PAIRS_HEADER, rows)


# --------------------------------------------------------------------------
# Exposures
# --------------------------------------------------------------------------


class Exposures(NamedTuple):
    t: np.ndarray  # int64 ns
    exposure_ns: np.ndarray  # int64 ns
    lux: np.ndarray  # NaN where not recorded


def load_exposures(src) -> Exposures:
    rows, name = _rows(src, EXPOSURE_HEADER, 3)
    n = len(rows)
    t = np.empty(n, dtype=np.int64)
    e = np.empty(n, dtype=np.int64)
    lux = np.full(n, np.nan)
    for i, (no, f) in enumerate(rows):
        t[i] = _int(f[0], no, name, "timestamp")
        e[i] = _int(f[1], no, name, "exposure")
        if e[i] <= 0:
            raise ParseError(f"exposure must be positive, got {e[i]}", no, name)
        if f[2]:
            lux[i] = _float(f[2], no, name)
            if lux[i] < 0:
                raise ParseError(f"illuminance must be non-negative, got {f[2]}", no, name)
    _check_increasing(t, [no for no, _ in rows], name)
    return Exposures(t, e, lux)


def write_exposures(t, exposure_ns, lux, path):
    rows = []
    for ti, ei, li in zip(t, exposure_ns, lux):
        rows.append(f"{int(ti)},{int(ei)},{'' if np.isnan(li) else _fmt(li)}")
    _write_lines(path, EXPOSURE_HEADER, rows)


# --------------------------------------------------------------------------
# Calibration file
# --------------------------------------------------------------------------


@dataclass
class NoiseSection:
    accel_sigma_w: float = 0.0
    accel_sigma_b: float = 0.0
    gyro_sigma_w: float = 0.0
    gyro_sigma_b: float = 0.0


@dataclass
class ExposureParams:
    k: float
    t_min: float
    t_max: float


@dataclass
class CalibrationFile:
    intrinsics: ImuIntrinsics = field(default_factory=ImuIntrinsics)
    time_shift_ns: int = 0  # camera minus IMU clock
    mocap_time_shift_ns: int = 0  # MoCap minus IMU clock
    T_MI: RigidMotion = field(default_factory=RigidMotion.identity)
    T_WG: RigidMotion = field(default_factory=RigidMotion.identity)
    noise: NoiseSection = field(default_factory=NoiseSection)
    exposure: ExposureParams | None = None
    # unknown sections are carried through untouched
    extra: dict = field(default_factory=dict)

    def __eq__(self, other):
        if not isinstance(other, CalibrationFile):
            return NotImplemented
        same_motion = all(
            np.array_equal(getattr(self, k).rotation, getattr(other, k).rotation)
            and np.array_equal(getattr(self, k).translation, getattr(other, k).translation)
            for k in ("T_MI", "T_WG")
        )
        return (
            self.intrinsics == other.intrinsics
            and same_motion
            and self.time_shift_ns == other.time_shift_ns
            and self.mocap_time_shift_ns == other.mocap_time_shift_ns
            and self.noise == other.noise
            and self.exposure == other.exposure
            and self.extra == other.extra
        )


_CALIB_SECTIONS = ("M_a", "M_g", "b_a", "b_g", "T_MI", "T_WG", "time_shift", "noise")


def _g17(v):
    return format(float(v), ".17g")


def _join(vals):
    return ", ".join(_g17(v) for v in vals)


def _write_matrix_sections(intr: ImuIntrinsics):
    lines = []
    for name in ("M_a", "M_g"):
        M = getattr(intr, name)
        lines.append(f"[{name}]")
        lines += [f"row{i} = {_join(M[i])}" for i in range(3)]
        lines.append("")
    for name in ("b_a", "b_g"):
        lines += [f"[{name}]", f"value = {_join(getattr(intr, name))}", ""]
    return lines


def _write_motion(name, T: RigidMotion):
    return [f"[{name}]", f"translation = {_join(T.translation)}", f"rotation = {_join(T.rotation)}", ""]


def _values(cp, section, key, n, path):
    try:
        raw = cp[section][key]
    except KeyError:
        raise ParseError(f"[{section}] lacks key {key!r}", source=path) from None
    parts = [s.strip() for s in raw.split(",")]
    if len(parts) != n:
        raise ParseError(f"[{section}] {key}: expected {n} values, got {len(parts)}", source=path)
    return np.array([_float(s, None, f"{path} [{section}] {key}") for s in parts])


def _require(cp, section, path):
    if not cp.has_section(section):
        raise MissingSection(section, source=path)


def _read_intrinsics(cp, path, required=True) -> ImuIntrinsics:
    kw = {}
    for name in ("M_a", "M_g"):
        if required:
            _require(cp, name, path)
        if cp.has_section(name):
            kw[name] = np.array([_values(cp, name, f"row{i}", 3, path) for i in range(3)])
    for name in ("b_a", "b_g"):
        if required:
            _require(cp, name, path)
        if cp.has_section(name):
            kw[name] = _values(cp, name, "value", 3, path)
    try:
        return ImuIntrinsics(**kw)
    except ValueError as e:
        raise ParseError(str(e), source=path) from None


def _read_motion(cp, name, path) -> RigidMotion:
    _require(cp, name, path)
    t = _values(cp, name, "translation", 3, path)
    q = _quat(_values(cp, name, "rotation", 4, path), None, f"{path} [{name}]")
    return RigidMotion(q, t)


def _read_int(cp, section, key, path):
    try:
        raw = cp[section][key].strip()
    except KeyError:
        raise ParseError(f"[{section}] lacks key {key!r}", source=path) from None
    return _int(raw, None, f"{path} [{section}] {key}")


def parse_calibration(src) -> CalibrationFile:
    text, name = _read_text(src)
    cp = configparser.ConfigParser(interpolation=None, default_section="\x00default")
    cp.optionxform = str
    try:
        cp.read_string(text, source=name)
    except configparser.Error as e:
        raise ParseError(str(e).splitlines()[0][:200], getattr(e, "lineno", None), name) from None
    for s in _CALIB_SECTIONS:
        _require(cp, s, name)
    intr = _read_intrinsics(cp, name)
    shifts = []
    for key in ("cam_imu_ns", "mocap_imu_ns"):
        v = _read_int(cp, "time_shift", key, name)
        if abs(v) >= MAX_TIME_SHIFT_NS:
            raise ParseError(f"[time_shift] {key}={v} exceeds 1 s", source=name)
        shifts.append(v)
    noise = NoiseSection(
        *(float(_values(cp, "noise", k, 1, name)[0]) for k in ("accel_sigma_w", "accel_sigma_b", "gyro_sigma_w", "gyro_sigma_b"))
    )
    if any(v < 0 for v in vars(noise).values()):
        raise ParseError("[noise] densities must be non-negative", source=name)
    exposure = None
    if cp.has_section("exposure"):
        exposure = ExposureParams(*(float(_values(cp, "exposure", k, 1, name)[0]) for k in ("k", "t_min", "t_max")))
    known = set(_CALIB_SECTIONS) | {"exposure"}
    extra = {s: dict(cp[s]) for s in cp.sections() if s not in known}
    return CalibrationFile(
        intr,
        shifts[0],
        shifts[1],
        _read_motion(cp, "T_MI", name),
        _read_motion(cp, "T_WG", name),
        noise,
        exposure,
        extra,
    )


def load_calibration(path) -> CalibrationFile:
    return parse_calibration(Path(path))


def format_calibration(calib: CalibrationFile) -> str:
    lines = _write_matrix_sections(calib.intrinsics)
    lines += _write_motion("T_MI", calib.T_MI)
    lines += _write_motion("T_WG", calib.T_WG)
    lines += ["[time_shift]", f"cam_imu_ns = {int(calib.time_shift_ns)}", f"mocap_imu_ns = {int(calib.mocap_time_shift_ns)}", ""]
    lines.append("[noise]")
    lines += [f"{k} = {_g17(v)}" for k, v in vars(calib.noise).items()]
    lines.append("")
    if calib.exposure is not None:
        lines.append("[exposure]")
        lines += [f"{k} = {_g17(v)}" for k, v in vars(calib.exposure).items()]
        lines.append("")
    for sec, items in calib.extra.items():
        lines.append(f"[{sec}]")
        lines += [f"{k} = {v}" for k, v in items.items()]
        lines.append("")
    return "\n".join(lines)


def write_calibration(calib: CalibrationFile, path):
    Path(path).write_bytes(format_calibration(calib).encode("ascii"))
