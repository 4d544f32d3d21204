"""Command-line entry point.

Every subcommand prints its results as ``key=value`` lines on stdout and
accumulates calibration results in ``calib.txt``. Exit codes: 0 success,
1 usage error, 2 bad or missing data, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import allan, handeye, imucal, ingest, photometric, synth, timesync, trajeval
from .errors import DataError, NumericalError, VicalibError

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3

log = logging.getLogger("vicalib")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: error: {message}\n{self.format_usage()}")


def _emit(**kv):
    for k, v in kv.items():
        if isinstance(v, bool):
            v = "true" if v else "false"
        elif isinstance(v, float):
            v = repr(v)
        elif isinstance(v, (list, tuple, np.ndarray)):
            v = ",".join(repr(float(x)) for x in np.ravel(v))
        print(f"{k}={v}")


def _calib_path(args):
    if getattr(args, "calib", None):
        return Path(args.calib)
    return Path(args.dataset) / "calib.txt"


def _load_calib(path):
    path = Path(path)
    if path.exists():
        return ingest.load_calibration(path)
    return ingest.CalibrationFile()


def _dataset_file(args, name):
    path = Path(args.dataset) / name
    if not path.exists():
        raise ingest.MissingFile(path)
    return path


# --------------------------------------------------------------------------
# Subcommands
# --------------------------------------------------------------------------


def cmd_simulate(args):
    if args.config:
        cfg = synth.load_rig_config(args.config)
    else:
        cfg = synth.PRESETS[args.preset](seed=args.seed or 0)
    if args.seed is not None:
        cfg.seed = args.seed
    if args.duration_s is not None:
        cfg.duration_s = args.duration_s
    out = synth.simulate(cfg, args.out)
    if args.save_config:
        synth.write_rig_config(cfg, out / "rig.txt")
    _emit(out=str(out), seed=cfg.seed, duration_s=float(cfg.duration_s))


def cmd_allan(args):
    imu = ingest.load_imu(_dataset_file(args, "imu.csv"))
    calib_path = _calib_path(args)
    calib = _load_calib(calib_path)
    if not args.raw:
        imu = imucal.apply_calibration(imu, calib.intrinsics)
    tau0 = float(np.median(np.diff(imu.t))) * 1e-9
    curves = {}
    for sensor in ("gyro", "accel"):
        curves[sensor] = allan.allan_deviation(getattr(imu, sensor), tau0)
    allan.write_curve(curves["gyro"], args.out)
    if args.out_accel:
        allan.write_curve(curves["accel"], args.out_accel)
    _emit(tau0_s=tau0, n_samples=len(imu), n_tau=len(curves["gyro"].tau))
    if args.fit:
        axes = args.axes if args.axes else None
        noise = {}
        for sensor, c in curves.items():
            noise[f"{sensor}_sigma_w"] = allan.fit_white_noise(c, tuple(args.white_range), axes)
            noise[f"{sensor}_sigma_b"] = allan.fit_bias_rw(c, tuple(args.rw_range), axes)
        calib.noise = ingest.NoiseSection(noise["accel_sigma_w"], noise["accel_sigma_b"], noise["gyro_sigma_w"], noise["gyro_sigma_b"])
        ingest.write_calibration(calib, calib_path)
        _emit(**noise)


def cmd_timesync(args):
    imu = ingest.load_imu(_dataset_file(args, "imu.csv"))
    mocap = ingest.load_mocap(_dataset_file(args, "mocap.csv"))
    calib_path = _calib_path(args)
    calib = _load_calib(calib_path)
    est = timesync.time_align(
        imu,
        mocap,
        half_window=int(round(args.window_s * 1e9)),
        step=int(round(args.step_us * 1e3)),
        window=args.median_window,
        intrinsics=None if args.raw else calib.intrinsics,
        smoothing_s=args.smoothing_s,
    )
    if args.dump_cost:
        np.savetxt(args.dump_cost, est.cost_curve, delimiter=",", header="offset_ns,cost", comments="#", fmt="%.17g")
    calib.mocap_time_shift_ns = est.offset_ns_int
    ingest.write_calibration(calib, calib_path)
    _emit(offset_ns=est.offset_ns_int, offset_ms=est.offset_ns * 1e-6)


def cmd_handeye(args):
    pairs = Path(args.pairs) if args.pairs else _dataset_file(args, "pairs.csv")
    _, twm, tig = ingest.load_pairs(pairs)
    calib_path = Path(args.calib) if args.calib else pairs.parent / "calib.txt"
    calib = _load_calib(calib_path)
    sol = handeye.solve_handeye(twm, tig)
    calib.T_MI, calib.T_WG = sol.T_MI, sol.T_WG
    ingest.write_calibration(calib, calib_path)
    _emit(
        n_pairs=len(twm),
        iterations=sol.iterations,
        rms=sol.rms,
        T_MI_translation=sol.T_MI.translation,
        T_MI_rotation=sol.T_MI.rotation,
        T_WG_translation=sol.T_WG.translation,
        T_WG_rotation=sol.T_WG.rotation,
    )


def cmd_imu_calib(args):
    imu = ingest.load_imu(_dataset_file(args, "imu.csv"))
    mocap = ingest.load_mocap(_dataset_file(args, "mocap.csv"))
    calib_path = _calib_path(args)
    calib = _load_calib(calib_path)
    if args.median_window:
        mocap = timesync.median_filter_positions(mocap, args.median_window)
    intr = imucal.calibrate_from_mocap(imu, mocap, calib.T_MI, calib.mocap_time_shift_ns, smoothing_s=args.smoothing_s)
    intr.check_invertible()
    calib.intrinsics = intr
    ingest.write_calibration(calib, calib_path)
    _emit(M_a=intr.M_a, M_g=intr.M_g, b_a=intr.b_a, b_g=intr.b_g)


def cmd_vignette(args):
    images, times, corrs = photometric.read_views(args.images)
    res = photometric.estimate_vignette(images, times, corrs, max_iter=args.max_iter, tol=args.tol)
    photometric.write_pgm(args.out, res.V)
    rms = float(np.sqrt(res.objective[-1] / sum(np.size(i) for i in images)))
    _emit(out=str(args.out), iterations=res.iterations, converged=res.converged, residual_rms=rms, v_min=float(res.V.min()))


def cmd_exposure_fit(args):
    ex = ingest.load_exposures(_dataset_file(args, "exposures.csv"))
    model = photometric.fit_exposure_control(ex.lux, ex.exposure_ns * 1e-9, args.t_min, args.t_max)
    calib_path = _calib_path(args)
    calib = _load_calib(calib_path)
    calib.exposure = ingest.ExposureParams(model.k, model.t_min, model.t_max)
    ingest.write_calibration(calib, calib_path)
    _emit(k=model.k, t_min=model.t_min, t_max=model.t_max)


def cmd_evaluate(args):
    gt = ingest.load_mocap(args.gt, "W", "I")
    est = ingest.load_mocap(args.est, "W", "I")
    report = trajeval.evaluate(gt, est, args.delta_s, args.max_gap_s, args.gap_s)
    for line in report.lines():
        print(line)


def cmd_convert(args):
    mocap = ingest.load_mocap(_dataset_file(args, "mocap.csv"))
    calib = ingest.load_calibration(_calib_path(args))
    if args.median_window:
        mocap = timesync.median_filter_positions(mocap, args.median_window)
    gt = handeye.convert_mocap_to_gt(mocap.shifted(-calib.mocap_time_shift_ns), calib.T_MI)
    ingest.write_mocap(gt, args.out)
    _emit(out=str(args.out), n_poses=len(gt))


# --------------------------------------------------------------------------
# Parser
# --------------------------------------------------------------------------


def build_parser():
    p = _Parser(prog="vicalib", description="Visual-inertial calibration and evaluation toolkit.")
    p.add_argument("--verbose", "-v", action="store_true", help="debug logging on stderr")
    p.add_argument("--seed", type=int, default=None, help="random seed for simulation")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("simulate", help="write a synthetic dataset")
    g = s.add_mutually_exclusive_group(required=True)
    g.add_argument("--config", help="rig description (INI)")
    g.add_argument("--preset", choices=sorted(synth.PRESETS))
    s.add_argument("--out", required=True)
    s.add_argument("--duration-s", type=float)
    s.add_argument("--save-config", action="store_true", help="also write rig.txt into the output")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("allan", help="Allan deviation and noise densities")
    s.add_argument("--dataset", required=True)
    s.add_argument("--out", required=True, help="gyroscope curve CSV")
    s.add_argument("--out-accel", help="accelerometer curve CSV")
    s.add_argument("--fit", action="store_true", help="fit noise densities into calib.txt [noise]")
    s.add_argument("--white-range", type=float, nargs=2, default=(0.02, 1.0), metavar=("LO", "HI"))
    s.add_argument("--rw-range", type=float, nargs=2, default=(1000.0, 6000.0), metavar=("LO", "HI"))
    s.add_argument("--axes", type=int, nargs="+", choices=(0, 1, 2), help="axes averaged for the fit")
    s.add_argument("--raw", action="store_true", help="skip intrinsics from calib.txt")
    s.add_argument("--calib")
    s.set_defaults(func=cmd_allan)

    s = sub.add_parser("timesync", help="MoCap to IMU clock offset")
    s.add_argument("--dataset", required=True)
    s.add_argument("--step-us", type=float, default=timesync.DEFAULT_STEP_NS / 1e3)
    s.add_argument("--window-s", type=float, default=timesync.DEFAULT_HALF_WINDOW_NS / 1e9)
    s.add_argument("--median-window", type=int, default=timesync.DEFAULT_MEDIAN_WINDOW)
    s.add_argument("--smoothing-s", type=float, default=timesync.DEFAULT_SMOOTHING_S)
    s.add_argument("--dump-cost", help="write the cost curve as CSV")
    s.add_argument("--raw", action="store_true", help="skip gyro intrinsics from calib.txt")
    s.add_argument("--calib")
    s.set_defaults(func=cmd_timesync)

    s = sub.add_parser("handeye", help="T_MI and T_WG from pose pairs")
    s.add_argument("--pairs")
    s.add_argument("--dataset")
    s.add_argument("--calib")
    s.set_defaults(func=cmd_handeye)

    s = sub.add_parser("imu-calib", help="IMU intrinsics from time-aligned MoCap")
    s.add_argument("--dataset", required=True)
    s.add_argument("--calib")
    s.add_argument("--smoothing-s", type=float, default=imucal.DEFAULT_SMOOTHING_S)
    s.add_argument("--median-window", type=int, default=0, help="median-filter MoCap positions first (0: off)")
    s.set_defaults(func=cmd_imu_calib)

    s = sub.add_parser("vignette", help="vignette from a view set")
    s.add_argument("--images", required=True, help="directory with views.csv and PGM views")
    s.add_argument("--out", required=True)
    s.add_argument("--max-iter", type=int, default=200)
    s.add_argument("--tol", type=float, default=1e-8)
    s.set_defaults(func=cmd_vignette)

    s = sub.add_parser("exposure-fit", help="illuminance to exposure-time law")
    s.add_argument("--dataset", required=True)
    s.add_argument("--t-min", type=float)
    s.add_argument("--t-max", type=float)
    s.add_argument("--calib")
    s.set_defaults(func=cmd_exposure_fit)

    s = sub.add_parser("evaluate", help="ATE / RPE / divergence of an estimate")
    s.add_argument("--gt", required=True)
    s.add_argument("--est", required=True)
    s.add_argument("--delta-s", type=float, default=1.0)
    s.add_argument("--max-gap-s", type=float, default=trajeval.DEFAULT_MAX_GAP_S)
    s.add_argument("--gap-s", type=float, default=trajeval.DEFAULT_GAP_S)
    s.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("convert", help="MoCap to IMU-frame ground truth in IMU time")
    s.add_argument("--dataset", required=True)
    s.add_argument("--calib")
    s.add_argument("--out", required=True)
    s.add_argument("--median-window", type=int, default=timesync.DEFAULT_MEDIAN_WINDOW)
    s.set_defaults(func=cmd_convert)
    return p


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as e:
        print(str(e).rstrip(), file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as e:  # --help
        return EXIT_OK if e.code in (0, None) else EXIT_USAGE
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    if args.command == "handeye" and not (args.pairs or args.dataset):
        print("vicalib handeye: error: one of --pairs or --dataset is required", file=sys.stderr)
        return EXIT_USAGE
    try:
        args.func(args)
    except DataError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_DATA
    except NumericalError as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    except VicalibError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_DATA
    except (OSError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
