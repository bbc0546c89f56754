import numpy as np
import pytest
from hypothesis import HealthCheck, given, settings, strategies as st

from mvmocap import formats
from mvmocap.analysis import CompareConfig, StandardBody, compare
from mvmocap.calibration import CheckerboardSpec, RigCalibration
from mvmocap.errors import MocapError, ParseError, VersionMismatch
from mvmocap.fusion import fuse_frames
from mvmocap.geometry import Camera, Intrinsics, RigidPose
from mvmocap.skeleton import BODY25, BODY25_REST_POSE
from mvmocap.synth import MotionSpec, RigSpec, animate_skeleton, build_rig, inject_flexion, project_sequence

from conftest import small_scene


def random_quaternion_pose(rng):
    q = rng.normal(size=4)
    return RigidPose.from_quaternion(q / np.linalg.norm(q), rng.uniform(-500, 500, 3))


def random_calibration(rng, n_cameras, n_boards=3):
    cams, rms = {}, {}
    for i in range(n_cameras):
        k = Intrinsics(*rng.uniform(100, 5000, 2), *rng.uniform(0, 3000, 2), rng.normal())
        cid = f"c{i:05d}"
        cams[cid] = Camera(k, random_quaternion_pose(rng), tuple(int(v) for v in rng.integers(1, 8000, 2)))
        rms[cid] = float(rng.exponential())
    boards = {int(f): random_quaternion_pose(rng) for f in rng.choice(1000, n_boards, replace=False)}
    return RigCalibration(cams, float(rng.exponential()), rms, CheckerboardSpec(), boards, "c00000",
                          int(rng.integers(0, 100)))


def same_pose(a, b):
    return np.array_equal(a.rotation, b.rotation) and np.array_equal(a.translation, b.translation)


def test_float_format_is_shortest_round_trip(rng):
    for x in np.concatenate([rng.normal(size=1000) * 10.0 ** rng.integers(-300, 300, 1000), [0.0, -0.0, 1e-320]]):
        s = formats.fmt(x)
        assert float(s) == x and s == repr(float(x))


def test_calibration_round_trip_10000_records():
    rng = np.random.default_rng(2024)
    for _ in range(100):
        cal = random_calibration(rng, 100)
        text = formats.format_calibration(cal)
        back = formats.parse_calibration(text)
        assert formats.format_calibration(back) == text
        assert back.rms_reprojection_px == cal.rms_reprojection_px and back.iterations == cal.iterations
        assert back.per_camera_rms == cal.per_camera_rms
        for cid, cam in cal.cameras.items():
            got = back.cameras[cid]
            assert np.array_equal(got.intrinsics.as_array(), cam.intrinsics.as_array())
            assert got.image_size == cam.image_size
            assert same_pose(got.pose, cam.pose)
        assert all(same_pose(back.board_poses[f], p) for f, p in cal.board_poses.items())


def test_calibration_file_round_trip(tmp_path):
    cal = random_calibration(np.random.default_rng(1), 4)
    formats.write_calibration(tmp_path / "cal.txt", cal)
    text = (tmp_path / "cal.txt").read_text()
    formats.write_calibration(tmp_path / "again.txt", formats.read_calibration(tmp_path / "cal.txt"))
    assert (tmp_path / "again.txt").read_text() == text


def test_observations_round_trip():
    _, board, obs, _ = small_scene(noise_px=0.3, seed=1, columns=2, poses=5)
    text = formats.format_observations(obs, board)
    back, spec = formats.parse_observations(text)
    assert spec == board
    assert len(back) == len(obs)
    for a, b in zip(obs, back):
        assert (a.camera_id, a.frame_id) == (b.camera_id, b.frame_id)
        assert np.array_equal(a.indices, b.indices) and np.array_equal(a.pixels, b.pixels)
    assert formats.format_observations(back, spec) == text


@pytest.fixture(scope="module")
def fused():
    cams = build_rig(RigSpec(column_count=4))
    seq = animate_skeleton(MotionSpec(frames=3))
    views = project_sequence(seq, cams, noise_px=0.4, dropout=0.3, seed=0, confidence_range=(0.2, 1.0))
    return seq, views, fuse_frames(views, cams)


def test_skeleton2d_round_trip(fused):
    _, views, _ = fused
    flat = [v for f in views for v in f]
    text = formats.format_skeleton2d(flat)
    back = formats.parse_skeleton2d(text)
    assert len(back) == len(flat)
    for a, b in zip(flat, back):
        assert (a.camera_id, a.frame_id) == (b.camera_id, b.frame_id)
        assert np.array_equal(a.joints, b.joints) and np.array_equal(a.confidence, b.confidence)
    assert formats.format_skeleton2d(back) == text
    regrouped = formats.views_by_frame(back)
    assert [[v.camera_id for v in f] for f in regrouped] == [[v.camera_id for v in f] for f in views]


def test_skeleton3d_round_trip(fused):
    _, _, sks = fused
    assert not all(s.valid.all() for s in sks)  # exercise invalid rows too
    text = formats.format_skeleton3d(sks)
    back = formats.parse_skeleton3d(text)
    for a, b in zip(sks, back):
        assert np.array_equal(a.valid, b.valid) and np.array_equal(a.joints[a.valid], b.joints[b.valid])
        assert np.array_equal(a.view_count, b.view_count) and a.reasons == b.reasons
        assert np.array_equal(a.rms_px[a.valid], b.rms_px[b.valid])
    assert formats.format_skeleton3d(back) == text


def test_sequence_round_trip(fused):
    seq, _, _ = fused
    seq = seq.replace(subject="coach A")
    text = formats.format_sequence(seq)
    back = formats.parse_sequence(text)
    assert np.array_equal(back.frames, seq.frames) and np.array_equal(back.valid, seq.valid)
    assert back.frame_rate == seq.frame_rate and back.subject == seq.subject
    assert formats.format_sequence(back) == text


def test_empty_sequence_rejected(fused):
    seq, _, _ = fused
    header = formats.format_sequence(seq).splitlines()
    cut = next(i for i, line in enumerate(header) if line.startswith("columns="))
    with pytest.raises(ParseError):
        formats.parse_sequence("\n".join(header[:cut + 1]) + "\n")


def test_body_round_trip():
    body = StandardBody(BODY25, np.random.default_rng(0).uniform(1, 50, 25))
    text = formats.format_body(body)
    back = formats.parse_body(text)
    assert np.array_equal(back.lengths, body.lengths)
    assert formats.format_body(back) == text


def test_report_round_trip():
    coach = animate_skeleton(MotionSpec(frames=48))
    student = inject_flexion(coach, BODY25.index("RKnee"), 15.0, 30)
    rep = compare(student, coach, CompareConfig())
    text = formats.format_report(rep)
    back = formats.parse_report(text)
    assert back.flags == rep.flags
    assert np.array_equal(np.isnan(back.angle_deg), np.isnan(rep.angle_deg))
    assert np.array_equal(np.nan_to_num(back.angle_deg), np.nan_to_num(rep.angle_deg))
    assert back.mean_angle_deg == rep.mean_angle_deg
    assert formats.format_report(back) == text


def test_version_mismatch():
    text = formats.format_body(StandardBody.from_pose(BODY25, BODY25_REST_POSE))
    with pytest.raises(VersionMismatch):
        formats.parse_body(text.replace("mvmocap body 1", "mvmocap body 2", 1))
    with pytest.raises(ParseError):
        formats.parse_body(text.replace("mvmocap body 1", "mvmocap sequence 1", 1))


def test_parse_error_location():
    cal = formats.format_calibration(random_calibration(np.random.default_rng(3), 2))
    lines = cal.splitlines()
    i = next(k for k, line in enumerate(lines) if line.startswith("fy="))
    lines[i] = "fy=abc"
    with pytest.raises(ParseError) as err:
        formats.parse_calibration("\n".join(lines) + "\n", "cal.txt")
    assert err.value.line == i + 1 and err.value.column == 4
    assert "cal.txt" in str(err.value)
    lines[i] = "focal=1.0"
    with pytest.raises(ParseError, match="unknown key"):
        formats.parse_calibration("\n".join(lines) + "\n")


def documents():
    rng = np.random.default_rng(5)
    coach = animate_skeleton(MotionSpec(frames=4))
    _, board, obs, _ = small_scene(columns=2, poses=2)
    return [
        (formats.parse_calibration, formats.format_calibration(random_calibration(rng, 2))),
        (formats.parse_observations, formats.format_observations(obs[:2], board)),
        (formats.parse_sequence, formats.format_sequence(coach)),
        (formats.parse_body, formats.format_body(StandardBody.from_pose(BODY25, BODY25_REST_POSE))),
        (formats.parse_report, formats.format_report(compare(coach, coach))),
    ]


DOCS = documents()


@given(st.integers(0, len(DOCS) - 1), st.data())
@settings(max_examples=400, deadline=None, suppress_health_check=[HealthCheck.too_slow])
def test_parsers_only_raise_structured_errors(which, data):
    parse, text = DOCS[which]
    op = data.draw(st.sampled_from(["insert", "delete", "replace", "truncate"]))
    pos = data.draw(st.integers(0, len(text)))
    junk = data.draw(st.text(alphabet=st.characters(codec="utf-8"), max_size=8))
    if op == "insert":
        text = text[:pos] + junk + text[pos:]
    elif op == "delete":
        text = text[:pos] + text[pos + len(junk) + 1:]
    elif op == "replace":
        text = text[:pos] + junk + text[pos + len(junk):]
    else:
        text = text[:pos]
    try:
        parse(text)
    except MocapError:
        pass


def test_writers_are_deterministic(fused):
    seq, views, sks = fused
    flat = [v for f in views for v in f]
    assert formats.format_skeleton2d(flat) == formats.format_skeleton2d(list(flat))
    assert formats.format_skeleton3d(sks) == formats.format_skeleton3d(list(sks))
