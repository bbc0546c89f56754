import numpy as np
import pytest

from mvmocap.calibration import CheckerboardSpec
from mvmocap.errors import InvalidSpec
from mvmocap.skeleton import BODY25
from mvmocap.synth import (JointPerturbation, MotionSpec, RigSpec, animate_skeleton, column_pairs,
                           project_sequence, sweep_checkerboard, uniform_sweep)


def test_rig_layout(rig32):
    assert len(rig32) == 32 and sorted(rig32) == [f"cam{i:02d}" for i in range(32)]
    for i, cam in enumerate(rig32.values()):
        c = cam.center
        assert np.hypot(c[0], c[1]) == pytest.approx(225.0)
        level = i // 16
        assert c[2] == pytest.approx((100.0, 200.0)[level])
        axis = cam.optical_axis
        assert np.degrees(np.arcsin(-axis[2])) == pytest.approx((10.0, 20.0)[level])
        # horizontal part of the axis points at the rig centre
        inward = -c[:2] / np.linalg.norm(c[:2])
        assert axis[0] * inward[1] - axis[1] * inward[0] == pytest.approx(0.0, abs=1e-12)
        assert cam.intrinsics.fx == 2000.0 and cam.image_size == (2448, 2048)


def test_column_pairs():
    pairs = column_pairs()
    assert len(pairs) == 16 and pairs[3] == ("cam03", "cam19")
    assert column_pairs(RigSpec(heights=(150.0,), tilts_deg=(0.0,))) == []


@pytest.mark.parametrize("kw", [dict(column_count=1), dict(diameter=0.0), dict(heights=(200.0, 100.0)),
                                dict(tilts_deg=(10.0,)), dict(tilts_deg=(10.0, 90.0))])
def test_rig_spec_validation(kw):
    with pytest.raises(InvalidSpec):
        RigSpec(**kw)


def test_sweep_coverage(rig32):
    board = CheckerboardSpec()
    poses = uniform_sweep(board, 100)
    assert len(poses) == 100
    normals = np.array([p.rotation[:, 2] for p in poses])
    assert np.all(np.abs(np.degrees(np.arcsin(normals[:, 2]))) <= 25.0 + 1e-9)
    obs, truth = sweep_checkerboard(board, poses, rig32)
    per_cam = {c: sum(o.camera_id == c for o in obs) for c in rig32}
    assert min(per_cam.values()) >= 10
    for o in obs[:50]:
        cam = rig32[o.camera_id]
        assert np.abs(cam.project(truth[o.frame_id].apply(board.points(o.indices))) - o.pixels).max() < 1e-9


def test_sweep_noise_is_seeded(rig32):
    board = CheckerboardSpec()
    poses = uniform_sweep(board, 5)
    a, _ = sweep_checkerboard(board, poses, rig32, 0.2, seed=1)
    b, _ = sweep_checkerboard(board, poses, rig32, 0.2, seed=1)
    exact, _ = sweep_checkerboard(board, poses, rig32)
    assert all(np.array_equal(x.pixels, y.pixels) for x, y in zip(a, b))
    d = np.concatenate([x.pixels - y.pixels for x, y in zip(a, exact) if len(x.indices) == len(y.indices)])
    assert 0.17 < d.std() < 0.23


def test_animation_keeps_bone_lengths(rng):
    perts = tuple(JointPerturbation(j, tuple(rng.normal(size=3)), 30.0, 0.7, 0.3) for j in (1, 2, 3, 9, 10, 12))
    seq = animate_skeleton(MotionSpec(frames=30, perturbations=perts, root_yaw_deg_per_s=45.0,
                                      root_sway_cm=(5.0, 2.0, 1.0)))
    for p, c in BODY25.edges:
        L = np.linalg.norm(seq.frames[:, c] - seq.frames[:, p], axis=1)
        assert np.ptp(L) < 1e-9


def test_keyframed_perturbation():
    k = JointPerturbation(10, (1.0, 0.0, 0.0), keyframes=((0, 0.0), (10, 20.0)))
    assert np.degrees(k.angles([0, 5, 10, 20], 30.0)) == pytest.approx([0.0, 10.0, 20.0, 20.0])


def test_motion_spec_validation():
    with pytest.raises(InvalidSpec):
        MotionSpec(frames=0)
    with pytest.raises(InvalidSpec):
        MotionSpec(perturbations=(JointPerturbation(99),))
    with pytest.raises(InvalidSpec):
        MotionSpec(rest_pose=np.zeros((25, 3)))


def test_project_sequence(rig32):
    seq = animate_skeleton(MotionSpec(frames=2))
    frames = project_sequence(seq, rig32, noise_px=0.0, dropout=0.25, seed=3)
    assert len(frames) == 2 and all(len(f) == 32 for f in frames)
    conf = np.array([[v.confidence for v in f] for f in frames])
    assert 0.6 < (conf > 0).mean() < 0.9
    v = frames[0][0]
    seen = v.confidence > 0
    assert np.abs(rig32[v.camera_id].project(seq.frames[0][seen]) - v.joints[seen]).max() < 1e-9
    again = project_sequence(seq, rig32, noise_px=0.0, dropout=0.25, seed=3)
    assert all(np.array_equal(a.confidence, b.confidence) for a, b in zip(frames[1], again[1]))
