"""Ground-truth scenes: the 32-camera ring, checkerboard sweeps, animated skeletons."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .calibration.board import BoardObservation, CheckerboardSpec
from .errors import InvalidSpec
from .geometry import Camera, Intrinsics, RigidPose, look_at, rotvec_to_matrix
from .skeleton import BODY25, BODY25_REST_POSE, Skeleton2D, SkeletonModel, SkeletonSequence


@dataclass(frozen=True)
class RigSpec:
    column_count: int = 16
    diameter: float = 450.0
    heights: tuple = (100.0, 200.0)
    tilts_deg: tuple = (10.0, 20.0)
    intrinsics: Intrinsics = field(default_factory=lambda: Intrinsics(2000.0, 2000.0, 1224.0, 1024.0))
    image_size: tuple = (2448, 2048)

    def __post_init__(self):
        if int(self.column_count) < 2:
            raise InvalidSpec("column_count must be >= 2")
        if not float(self.diameter) > 0:
            raise InvalidSpec("diameter must be positive")
        h = np.asarray(self.heights, dtype=float)
        if h.size == 0 or np.any(np.diff(h) <= 0):
            raise InvalidSpec("heights must be strictly increasing")
        if len(self.tilts_deg) != len(self.heights):
            raise InvalidSpec("one tilt per height is required")
        if any(not -89.0 < float(t) < 89.0 for t in self.tilts_deg):
            raise InvalidSpec("tilt must lie strictly between -89 and 89 degrees")
        object.__setattr__(self, "heights", tuple(float(v) for v in self.heights))
        object.__setattr__(self, "tilts_deg", tuple(float(v) for v in self.tilts_deg))


def camera_id(index):
    return f"cam{index:02d}"


def build_rig(spec: RigSpec = RigSpec()) -> dict[str, Camera]:
    """Cameras on a regular polygon at each height, aimed at the rig axis.

    Cameras are numbered ring by ring from the lowest height, so with the
    default spec ``cam00..cam15`` sit at 100 cm and ``cam16..cam31`` at 200 cm,
    and ``cam{k}`` / ``cam{k+16}`` share column ``k``.
    """
    radius = spec.diameter / 2.0
    cams = {}
    n = spec.column_count
    for level, (h, tilt) in enumerate(zip(spec.heights, spec.tilts_deg)):
        tau = np.radians(tilt)
        for k in range(n):
            phi = 2.0 * np.pi * k / n
            eye = np.array([radius * np.cos(phi), radius * np.sin(phi), h])
            inward = -np.array([np.cos(phi), np.sin(phi), 0.0])
            axis = np.cos(tau) * inward + np.sin(tau) * np.array([0.0, 0.0, -1.0])
            cams[camera_id(level * n + k)] = Camera(spec.intrinsics, look_at(eye, eye + axis), spec.image_size)
    return cams


def column_pairs(spec: RigSpec = RigSpec()):
    """Vertically stacked camera pairs, one per column (needs two heights)."""
    if len(spec.heights) < 2:
        return []
    n = spec.column_count
    return [(camera_id(k), camera_id(n + k)) for k in range(n)]


# ---------------------------------------------------------------------------
# checkerboard sweeps
# ---------------------------------------------------------------------------

def board_pose_facing(spec: CheckerboardSpec, center, yaw, pitch, roll=0.0) -> RigidPose:
    """Board-to-world pose with the board centre at ``center``.

    The board normal points horizontally along ``yaw`` (radians from +x),
    raised by ``pitch``; ``roll`` spins the board about its normal.
    """
    n = np.array([np.cos(yaw) * np.cos(pitch), np.sin(yaw) * np.cos(pitch), np.sin(pitch)])
    e1 = np.array([-np.sin(yaw), np.cos(yaw), 0.0])
    e2 = np.cross(n, e1)
    R = np.column_stack([e1, e2, n]) @ rotvec_to_matrix(np.array([0.0, 0.0, roll]))
    return RigidPose(R, np.asarray(center, dtype=float) - R @ spec.center())


def uniform_sweep(spec: CheckerboardSpec, n_poses=100, center=(0.0, 0.0, 110.0), max_pitch_deg=25.0,
                  max_roll_deg=15.0, turns=3):
    """Board schedule whose orientation and pitch change uniformly.

    The board normal turns ``turns`` times around the vertical while the
    pitch and roll oscillate, so every camera sees many non-parallel poses.
    """
    poses = []
    for i in range(n_poses):
        s = i / n_poses
        yaw = 2.0 * np.pi * turns * s
        pitch = np.radians(max_pitch_deg) * np.sin(2.0 * np.pi * (2 * turns + 1) * s)
        roll = np.radians(max_roll_deg) * np.cos(2.0 * np.pi * (turns + 2) * s)
        poses.append(board_pose_facing(spec, center, yaw, pitch, roll))
    return poses


def sweep_checkerboard(spec: CheckerboardSpec, poses, cameras, noise_px=0.0, seed=None,
                       max_view_angle_deg=65.0, min_corners=4):
    """Synthetic corner detections for a board schedule.

    Corners are projected exactly, then perturbed by Gaussian noise of
    ``noise_px`` per coordinate. A board is seen only from its front side and
    within ``max_view_angle_deg`` of its normal; corners outside the image are
    dropped, and views keeping fewer than ``min_corners`` are discarded.

    Returns:
        ``(observations, ground_truth_poses)`` where the poses are keyed by frame id.
    """
    rng = np.random.default_rng(seed)
    cos_limit = np.cos(np.radians(max_view_angle_deg))
    corners = spec.points()
    observations = []
    truth = {}
    for f, pose in enumerate(poses):
        truth[f] = pose
        world = pose.apply(corners)
        normal = pose.rotation[:, 2]
        centre = pose.apply(spec.center())
        for cid in sorted(cameras):
            cam = cameras[cid]
            to_cam = cam.center - centre
            if normal @ to_cam < cos_limit * np.linalg.norm(to_cam):
                continue
            depth = cam.to_camera(world)[:, 2]
            front = depth > 1e-9
            if front.sum() < min_corners:
                continue
            px = cam.project(world[front])
            if noise_px > 0:
                px = px + rng.normal(0.0, noise_px, px.shape)
            idx = np.flatnonzero(front)
            inside = cam.in_image(px)
            if inside.sum() < min_corners:
                continue
            observations.append(BoardObservation(cid, f, idx[inside], px[inside]))
    return observations, truth


# ---------------------------------------------------------------------------
# skeleton motion
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class JointPerturbation:
    """Rotation of everything below ``joint`` about ``axis``.

    The axis is expressed in the rest-pose frame and is carried along by
    any rotation applied higher up the tree.

    The angle follows ``amplitude_deg * sin(2 pi f t + phase)`` or, when
    ``keyframes`` is given as ``[(frame, angle_deg), ...]``, linear
    interpolation between keyframes.
    """

    joint: int
    axis: tuple = (1.0, 0.0, 0.0)
    amplitude_deg: float = 0.0
    frequency_hz: float = 0.5
    phase: float = 0.0
    keyframes: tuple = ()

    def angles(self, frames, frame_rate):
        frames = np.asarray(frames, dtype=float)
        if self.keyframes:
            k = np.array(self.keyframes, dtype=float)
            return np.radians(np.interp(frames, k[:, 0], k[:, 1]))
        t = frames / frame_rate
        return np.radians(self.amplitude_deg) * np.sin(2.0 * np.pi * self.frequency_hz * t + self.phase)


@dataclass(frozen=True)
class MotionSpec:
    """Rest pose plus joint rotations; rotations keep every bone length."""

    frames: int = 48
    frame_rate: float = 30.0
    model: SkeletonModel = BODY25
    rest_pose: np.ndarray = None
    perturbations: tuple = ()
    root_offset: tuple = (0.0, 0.0, 0.0)
    root_sway_cm: tuple = (0.0, 0.0, 0.0)
    root_yaw_deg_per_s: float = 0.0
    subject: str = "synthetic"

    def __post_init__(self):
        if int(self.frames) < 1:
            raise InvalidSpec("a motion needs at least one frame")
        if float(self.frame_rate) <= 0:
            raise InvalidSpec("frame_rate must be positive")
        rest = BODY25_REST_POSE if self.rest_pose is None else self.rest_pose
        rest = np.array(rest, dtype=float)
        if rest.shape != (self.model.joint_count, 3):
            raise InvalidSpec("rest pose does not match the skeleton model")
        for p, c in self.model.edges:
            if np.linalg.norm(rest[c] - rest[p]) < 1e-6:
                raise InvalidSpec(f"rest pose has a zero-length bone {p}->{c}")
        for pert in self.perturbations:
            if not 0 <= pert.joint < self.model.joint_count or np.linalg.norm(pert.axis) == 0:
                raise InvalidSpec(f"bad perturbation {pert}")
        rest.setflags(write=False)
        object.__setattr__(self, "rest_pose", rest)


def animate_skeleton(motion: MotionSpec) -> SkeletonSequence:
    """Deterministic ground-truth 3D sequence for ``motion``."""
    model, rest = motion.model, motion.rest_pose
    T = int(motion.frames)
    frames = np.arange(T)
    local = np.tile(np.eye(3), (T, model.joint_count, 1, 1))
    for pert in motion.perturbations:
        axis = np.asarray(pert.axis, dtype=float)
        axis = axis / np.linalg.norm(axis)
        ang = pert.angles(frames, motion.frame_rate)
        local[:, pert.joint] = rotvec_to_matrix(ang[:, None] * axis) @ local[:, pert.joint]

    t = frames / motion.frame_rate
    yaw = np.radians(motion.root_yaw_deg_per_s) * t
    root_R = rotvec_to_matrix(yaw[:, None] * np.array([0.0, 0.0, 1.0]))
    sway = np.asarray(motion.root_sway_cm, dtype=float)
    root_pos = rest[model.root] + np.asarray(motion.root_offset, dtype=float) + np.sin(2.0 * np.pi * 0.25 * t)[:, None] * sway

    out = np.zeros((T, model.joint_count, 3))
    acc = np.zeros((T, model.joint_count, 3, 3))
    r = model.root
    acc[:, r] = root_R @ local[:, r]
    out[:, r] = root_pos
    for p, c in model.edges:
        bone = rest[c] - rest[p]
        out[:, c] = out[:, p] + np.einsum("tij,j->ti", acc[:, p], bone)
        acc[:, c] = acc[:, p] @ local[:, c]
    return SkeletonSequence(model, out, None, motion.frame_rate, motion.subject)


def inject_flexion(seq: SkeletonSequence, joint: int, degrees: float, start: int, end: int | None = None,
                   child: int | None = None) -> SkeletonSequence:
    """Bend ``joint`` further by ``degrees`` on frames ``[start, end)``.

    The subtree below ``joint`` is rotated about the joint, about the normal
    of the plane spanned by the parent and child bones, so the interior angle
    parent-joint-child shrinks by exactly ``degrees``. Bone lengths and every
    angle that does not have ``joint`` as its vertex are unchanged.
    """
    model = seq.model
    parent = model.parents[joint]
    child = model.children[joint][0] if child is None else child
    if parent < 0 or model.parents[child] != joint:
        raise InvalidSpec(f"joint {joint} needs a parent and child {child}")
    end = seq.length if end is None else end
    moved = list(model.descendants(joint))
    X = seq.frames.copy()
    for t in range(max(start, 0), min(end, seq.length)):
        a = X[t, parent] - X[t, joint]
        b = X[t, child] - X[t, joint]
        n = np.cross(b, a)
        norm = np.linalg.norm(n)
        if norm < 1e-9 * np.linalg.norm(a) * np.linalg.norm(b):
            raise InvalidSpec(f"frame {t}: bones at joint {joint} are collinear")
        R = rotvec_to_matrix(np.radians(degrees) * n / norm)
        X[t, moved] = X[t, joint] + (X[t, moved] - X[t, joint]) @ R.T
    return seq.replace(frames=X)


def project_sequence(seq: SkeletonSequence, cameras, noise_px=0.0, dropout=0.0, seed=None,
                     confidence_range=(1.0, 1.0)):
    """Per-frame, per-camera 2D skeletons for a ground-truth sequence.

    Joints behind a camera or outside its image get confidence 0, as do
    joints removed by the random per-view ``dropout``.

    Returns:
        list over frames of lists of :class:`Skeleton2D` (cameras sorted by id).
    """
    rng = np.random.default_rng(seed)
    lo, hi = confidence_range
    out = []
    for t in range(seq.length):
        X = seq.frames[t]
        views = []
        for cid in sorted(cameras):
            cam = cameras[cid]
            depth = cam.to_camera(X)[:, 2]
            front = depth > 1e-9
            px = np.zeros((len(X), 2))
            px[front] = cam.project(X[front])
            if noise_px > 0:
                px = px + rng.normal(0.0, noise_px, px.shape)
            conf = rng.uniform(lo, hi, len(X)) if hi > lo else np.full(len(X), float(hi))
            seen = front & cam.in_image(px) & seq.valid[t]
            if dropout > 0:
                seen &= rng.random(len(X)) >= dropout
            conf = np.where(seen, conf, 0.0)
            px[~seen] = 0.0
            views.append(Skeleton2D(seq.model, px, conf, cid, int(seq.frame_ids[t])))
        out.append(views)
    return out
