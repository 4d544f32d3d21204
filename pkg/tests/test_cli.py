import hashlib
import subprocess
import sys

import numpy as np
import pytest

from vicalib import cli, ingest, synth
from vicalib.core import RigidMotion, Trajectory


def kv(text):
    return dict(line.split("=", 1) for line in text.splitlines() if "=" in line)


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    cfg = synth.calib_config(
        seed=11, duration_s=20.0, time_offset_ns=3_000_000, n_pairs=40, exposure_k=0.01, vignette_size=12, vignette_views=4
    )
    synth.write_rig_config(cfg, root / "rig.txt")
    return root, cfg


def digest(directory):
    return {p.name: hashlib.sha256(p.read_bytes()).hexdigest() for p in sorted(directory.rglob("*")) if p.is_file() and p.name != "calib.txt"}


def test_no_command_is_usage_error(capsys):
    assert cli.run([]) == 1


def test_unknown_flag(capsys):
    assert cli.run(["evaluate", "--gt", "a", "--est", "b", "--bogus"]) == 1
    assert "usage" in capsys.readouterr().err


@pytest.mark.parametrize("argv", [["--help"], ["timesync", "--help"], ["evaluate", "--help"]])
def test_help(argv, capsys):
    assert cli.run(argv) == 0
    assert "usage" in capsys.readouterr().out


def test_missing_dataset_names_file(tmp_path, capsys):
    assert cli.run(["timesync", "--dataset", str(tmp_path / "nope")]) == 2
    assert "imu.csv" in capsys.readouterr().err


def test_handeye_needs_input(capsys):
    assert cli.run(["handeye"]) == 1


def test_evaluate_ground_truth_against_itself(tmp_path, capsys):
    t = np.arange(100) * 50_000_000
    rng = np.random.default_rng(0)
    traj = Trajectory(t, np.tile([1.0, 0, 0, 0], (100, 1)), np.cumsum(rng.normal(size=(100, 3)), axis=0), "W", "I")
    ingest.write_mocap(traj, tmp_path / "g.csv")
    assert cli.run(["evaluate", "--gt", str(tmp_path / "g.csv"), "--est", str(tmp_path / "g.csv")]) == 0
    out = capsys.readouterr().out
    assert out.splitlines()[0] == "ate_m=0.000000"
    assert kv(out)["diverged"] == "false"


def test_malformed_file_is_data_error(tmp_path, capsys):
    (tmp_path / "g.csv").write_text("#t_ns,tx,ty,tz,qw,qx,qy,qz\n0,1,2\n")
    assert cli.run(["evaluate", "--gt", str(tmp_path / "g.csv"), "--est", str(tmp_path / "g.csv")]) == 2
    assert "line 2" in capsys.readouterr().err


def test_degenerate_pairs_numerical_exit(tmp_path, capsys):
    x = RigidMotion.from_rotvec([0.1, 0.2, 0.3], [1, 2, 3])
    n = 5
    t = np.arange(n)
    twm = Trajectory(t, np.tile(x.rotation, (n, 1)), np.tile(x.translation, (n, 1)), "W", "M")
    tig = Trajectory(t, np.tile(x.inverse().rotation, (n, 1)), np.tile(x.inverse().translation, (n, 1)), "I", "G")
    ingest.write_pairs(t, twm, tig, tmp_path / "pairs.csv")
    assert cli.run(["handeye", "--pairs", str(tmp_path / "pairs.csv")]) == 3
    assert "numerical failure" in capsys.readouterr().err


def test_pipeline(dataset, capsys):
    root, cfg = dataset
    d = root / "data"
    assert cli.run(["simulate", "--config", str(root / "rig.txt"), "--out", str(d)]) == 0
    before = digest(d)
    capsys.readouterr()
    assert cli.run(["handeye", "--dataset", str(d)]) == 0
    assert cli.run(["timesync", "--dataset", str(d), "--raw"]) == 0
    assert cli.run(["imu-calib", "--dataset", str(d)]) == 0
    assert cli.run(["timesync", "--dataset", str(d)]) == 0
    assert cli.run(["vignette", "--images", str(d / "vignette"), "--out", str(root / "v.pgm")]) == 0
    assert cli.run(["exposure-fit", "--dataset", str(d)]) == 0
    assert cli.run(["convert", "--dataset", str(d), "--out", str(root / "gt_est.csv")]) == 0
    out = kv(capsys.readouterr().out)
    assert out["converged"] == "true"
    assert digest(d) == before
    calib = ingest.load_calibration(d / "calib.txt")
    assert abs(calib.mocap_time_shift_ns - cfg.time_offset_ns) < 20_000
    assert (calib.T_MI.inverse() @ cfg.T_MI).angle() < 1e-6
    np.testing.assert_allclose(calib.exposure.k, cfg.exposure_k, rtol=1e-9)
    np.testing.assert_allclose(calib.intrinsics.M_g, cfg.intrinsics.M_g, atol=2e-3)
    assert np.all(np.triu(calib.intrinsics.M_a, 1) == 0)
    assert cli.run(["evaluate", "--gt", str(d / "gt.csv"), "--est", str(root / "gt_est.csv")]) == 0
    assert float(kv(capsys.readouterr().out)["ate_m"]) < 0.01


def test_simulate_preset_and_allan(tmp_path, capsys):
    d = tmp_path / "static"
    assert cli.run(["--seed", "4", "simulate", "--preset", "static", "--duration-s", "600", "--out", str(d), "--save-config"]) == 0
    assert (d / "rig.txt").exists()
    assert synth.load_rig_config(d / "rig.txt").seed == 4
    capsys.readouterr()
    args = ["allan", "--dataset", str(d), "--raw", "--out", str(tmp_path / "g.csv"), "--fit", "--rw-range", "20", "100"]
    assert cli.run(args) == 0
    out = kv(capsys.readouterr().out)
    np.testing.assert_allclose(float(out["gyro_sigma_w"]), 8.0e-5, rtol=0.05)
    assert ingest.load_calibration(d / "calib.txt").noise.gyro_sigma_w == float(out["gyro_sigma_w"])


def test_allan_empty_range_is_data_error(tmp_path, capsys):
    d = tmp_path / "s"
    assert cli.run(["simulate", "--preset", "static", "--duration-s", "20", "--out", str(d)]) == 0
    assert cli.run(["allan", "--dataset", str(d), "--out", str(tmp_path / "g.csv"), "--fit"]) == 2


def test_module_entry_point():
    r = subprocess.run([sys.executable, "-m", "vicalib", "--help"], capture_output=True, text=True)
    assert r.returncode == 0
    assert "simulate" in r.stdout
