import json

import numpy as np
import pytest

from mvmocap import formats
from mvmocap.cli import main
from mvmocap.geometry import Camera, Intrinsics, RigidPose
from mvmocap.calibration import RigCalibration
from mvmocap.render import read_ppm


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture(scope="module")
def synth_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("synth")
    assert main(["synth", "--out", str(d), "--poses", "40", "--frames", "48", "--threads", "1"]) == 0
    return d


def test_usage_errors(capsys):
    assert run(capsys)[0] == 1
    code, _, err = run(capsys, "bogus")
    assert code == 1 and "error[E_USAGE]" in err
    code, _, err = run(capsys, "compare", "a", "b", "--out", "x", "--threads", "0")
    assert code == 1
    assert run(capsys, "--help")[0] == 0


def test_data_errors(capsys, tmp_path):
    code, out, err = run(capsys, "compare", tmp_path / "none.txt", tmp_path / "none.txt", "--out", tmp_path / "r.txt")
    assert code == 2 and err.startswith("mvmocap: error[") and out == ""
    (tmp_path / "bad.txt").write_text("mvmocap sequence 9\n")
    code, _, err = run(capsys, "retarget", tmp_path / "bad.txt", "--body", tmp_path / "bad.txt", "--out", tmp_path / "o")
    assert code == 2 and "error[E_VERSION_MISMATCH]" in err


def test_synth_outputs(synth_dir):
    names = {p.name for p in synth_dir.iterdir()}
    assert {"rig_truth.txt", "observations.txt", "skeleton2d.txt", "coach_truth.txt", "student.txt",
            "body.txt"} <= names
    assert len(formats.read_calibration(synth_dir / "rig_truth.txt").cameras) == 32


def test_compare_identical_files(capsys, synth_dir, tmp_path):
    coach = synth_dir / "coach_truth.txt"
    code, out, _ = run(capsys, "compare", coach, coach, "--out", tmp_path / "rep.txt")
    assert code == 0 and "flags=none" in out
    rep = formats.read_report(tmp_path / "rep.txt")
    assert rep.mean_angle_deg == 0.0 and rep.mean_distance_cm < 1e-9 and rep.flags == ()


def test_compare_flags_knee(capsys, synth_dir, tmp_path):
    code, out, _ = run(capsys, "compare", synth_dir / "student.txt", synth_dir / "coach_truth.txt",
                       "--body", synth_dir / "body.txt", "--out", tmp_path / "rep.txt")
    assert code == 0 and "flags=K-r[30,48)" in out


def test_config_precedence(capsys, synth_dir, tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"threshold-deg": 40.0, "body": str(synth_dir / "body.txt")}))
    args = [synth_dir / "student.txt", synth_dir / "coach_truth.txt", "--out", tmp_path / "r.txt", "--config", cfg]
    code, out, _ = run(capsys, "compare", *args)
    assert code == 0 and "flags=none" in out
    code, out, _ = run(capsys, "compare", *args, "--threshold-deg", "10")
    assert code == 0 and "flags=K-r[30,48)" in out


@pytest.mark.parametrize("doc", [{"nope": 1}, {"threshold-deg": "x"}, {"out": "elsewhere"}, [1, 2]])
def test_bad_config(capsys, tmp_path, doc):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps(doc))
    code, _, err = run(capsys, "compare", "a", "b", "--out", tmp_path / "r", "--config", cfg)
    assert code == 1 and "error[E_USAGE]" in err


def test_calibrate_and_fuse(capsys, synth_dir, tmp_path):
    cal = tmp_path / "cal.txt"
    code, out, _ = run(capsys, "calibrate", synth_dir / "observations.txt", "--out", cal,
                       "--anchor", synth_dir / "rig_truth.txt")
    assert code == 0 and out.startswith("cameras=32 rms_px=")
    truth = formats.read_calibration(synth_dir / "rig_truth.txt")
    est = formats.read_calibration(cal)
    for c in truth.cameras:
        assert np.abs(est.cameras[c].pose.translation - truth.cameras[c].pose.translation).max() < 1e-6
    seq = tmp_path / "fused.txt"
    code, out, _ = run(capsys, "fuse", cal, synth_dir / "skeleton2d.txt", "--out", seq, "--truth",
                       synth_dir / "coach_truth.txt", "--report", tmp_path / "res.txt")
    assert code == 0
    err = float(out.split("max_error_cm=")[1].split()[0])
    assert err < 1e-6
    assert formats.read_sequence(seq).length == 48


def test_render_homogeneous_closed_form(capsys, tmp_path):
    cam = Camera(Intrinsics(20.0, 20.0, 8.0, 6.0), RigidPose.identity(), (16, 12))
    formats.write_calibration(tmp_path / "cal.txt", RigCalibration({"c": cam}, reference_camera="c"))
    (tmp_path / "field.json").write_text(json.dumps({"primitives": [{"type": "homogeneous", "sigma": 0.01,
                                                                        "color": [1.0, 0.5, 0.0]}]}))
    code, _, _ = run(capsys, "render", tmp_path / "field.json", "--calibration", tmp_path / "cal.txt",
                     "--out", tmp_path / "img.ppm", "--t-near", 10, "--t-far", 110, "--samples", 1024)
    assert code == 0
    img = read_ppm(tmp_path / "img.ppm")
    a = 1.0 - np.exp(-1.0)
    expected = np.rint(np.array([1.0, 0.5, 0.0]) * a * 255).astype(np.uint8)
    assert img.shape == (12, 16, 3) and np.all(img == expected)


def test_render_bad_spec(capsys, tmp_path):
    cam = Camera(Intrinsics(20.0, 20.0, 8.0, 6.0), RigidPose.identity(), (16, 12))
    formats.write_calibration(tmp_path / "cal.txt", RigCalibration({"c": cam}))
    (tmp_path / "field.json").write_text("{not json")
    code, _, err = run(capsys, "render", tmp_path / "field.json", "--calibration", tmp_path / "cal.txt",
                       "--out", tmp_path / "img.ppm")
    assert code == 2 and "error[E_PARSE]" in err
    (tmp_path / "field.json").write_text('{"primitives": []}')
    code, _, err = run(capsys, "render", tmp_path / "field.json", "--calibration", tmp_path / "cal.txt",
                       "--out", tmp_path / "img.ppm", "--t-near", 5, "--t-far", 1)
    assert code == 2
