"""Joint angles, bone-length retargeting and student/coach comparison."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateAlignment, InvalidInput, ModelMismatch, TopologyMismatch, ZeroLengthBone
from .geometry import RigidPose, rot_z
from .skeleton import SkeletonModel, SkeletonSequence

MIN_BONE = 1e-6  # cm


@dataclass(frozen=True, eq=False)
class StandardBody:
    """Target bone lengths, indexed by child joint (the root entry is unused)."""

    model: SkeletonModel
    lengths: np.ndarray

    def __post_init__(self):
        L = np.array(self.lengths, dtype=float).reshape(-1)
        if L.shape != (self.model.joint_count,):
            raise InvalidInput("one bone length per joint is required")
        L[self.model.root] = 0.0
        bones = [c for _, c in self.model.edges]
        if np.any(~np.isfinite(L[bones])) or np.any(L[bones] <= 0):
            raise InvalidInput("bone lengths must be positive and finite")
        L.setflags(write=False)
        object.__setattr__(self, "lengths", L)

    @classmethod
    def from_pose(cls, model, pose):
        pose = np.asarray(pose, dtype=float)
        L = np.zeros(model.joint_count)
        for p, c in model.edges:
            L[c] = np.linalg.norm(pose[c] - pose[p])
        return cls(model, L)

    @classmethod
    def from_sequence(cls, seq: SkeletonSequence):
        """Median bone lengths over frames where both ends are valid."""
        L = np.zeros(seq.model.joint_count)
        for p, c in seq.model.edges:
            ok = seq.valid[:, p] & seq.valid[:, c]
            if not ok.any():
                raise InvalidInput(f"bone {p}->{c} is never observed")
            L[c] = np.median(np.linalg.norm(seq.frames[ok, c] - seq.frames[ok, p], axis=1))
        return cls(seq.model, L)

    def edge_lengths(self):
        return {(p, c): float(self.lengths[c]) for p, c in self.model.edges}


@dataclass(frozen=True, eq=False)
class AngleSequence:
    """Per-triple angles in radians, ``(T, K)``; invalid samples hold ``nan``."""

    model: SkeletonModel
    values: np.ndarray
    valid: np.ndarray

    @property
    def degrees(self):
        return np.degrees(self.values)

    @property
    def names(self):
        return self.model.triple_names


def joint_angles(seq: SkeletonSequence) -> AngleSequence:
    """Angle at the middle joint of every triple, ``arccos`` of the clamped cosine.

    A sample is invalid when a member joint is invalid or either bone is
    shorter than 1e-6 cm.
    """
    triples = np.array(seq.model.angle_triples, dtype=int).reshape(-1, 3)
    X, ok = seq.frames, seq.valid
    a, j, b = triples.T
    u = X[:, a] - X[:, j]
    v = X[:, b] - X[:, j]
    nu = np.linalg.norm(u, axis=2)
    nv = np.linalg.norm(v, axis=2)
    valid = ok[:, a] & ok[:, j] & ok[:, b] & (nu >= MIN_BONE) & (nv >= MIN_BONE)
    with np.errstate(invalid="ignore", divide="ignore"):
        cos = np.einsum("tkc,tkc->tk", u, v) / (nu * nv)
    theta = np.where(valid, np.arccos(np.clip(np.where(valid, cos, 1.0), -1.0, 1.0)), np.nan)
    return AngleSequence(seq.model, theta, valid)


def retarget(seq: SkeletonSequence, target: StandardBody, strict=False) -> SkeletonSequence:
    """Re-draw ``seq`` with the target's bone lengths, keeping every bone direction.

    The root stays where it is. A bone whose source length is below 1e-6 cm
    (or whose end is invalid) has no direction; its child and that child's
    subtree become invalid in the affected frames, unless ``strict`` is set,
    in which case :class:`ZeroLengthBone` is raised.
    """
    model = seq.model
    if not model.same_topology(target.model):
        raise TopologyMismatch(f"sequence model {model.name!r} does not match the standard body {target.model.name!r}")
    X = seq.frames
    out = np.zeros_like(X)
    valid = np.zeros_like(seq.valid)
    r = model.root
    out[:, r] = np.where(seq.valid[:, r, None], X[:, r], 0.0)
    valid[:, r] = seq.valid[:, r]
    for p, c in model.edges:
        d = X[:, c] - X[:, p]
        n = np.linalg.norm(d, axis=1)
        ok = valid[:, p] & seq.valid[:, c] & (n >= MIN_BONE)
        if strict and np.any(seq.valid[:, p] & seq.valid[:, c] & (n < MIN_BONE)):
            raise ZeroLengthBone(f"bone {p}->{c} has zero length")
        step = target.lengths[c] * d / np.where(ok, n, 1.0)[:, None]
        out[:, c] = np.where(ok[:, None], out[:, p] + step, 0.0)
        valid[:, c] = ok
    return seq.replace(frames=out, valid=valid)


def _alignment_points(seq, reference, joints):
    joints = list(joints)
    both = seq.valid[:, joints] & reference.valid[:, joints]
    frame_ok = both.all(axis=1)
    if frame_ok.sum() * 2 < seq.length:
        raise DegenerateAlignment("alignment joints are invalid in more than half of the frames")
    return seq.frames[frame_ok][:, joints].reshape(-1, 3), reference.frames[frame_ok][:, joints].reshape(-1, 3)


def estimate_alignment(seq: SkeletonSequence, reference: SkeletonSequence, joints=None) -> RigidPose:
    """Yaw rotation plus translation minimising the squared joint distances.

    The fit uses the model's alignment joints (root and hips by default) in
    every frame where all of them are valid in both sequences.
    """
    if not seq.model.same_topology(reference.model):
        raise ModelMismatch("sequences use different skeleton models")
    if seq.length != reference.length:
        raise InvalidInput("sequences must have the same length")
    P, Q = _alignment_points(seq, reference, joints or seq.model.alignment_joints)
    pc, qc = P.mean(axis=0), Q.mean(axis=0)
    p, q = P - pc, Q - qc
    s = np.sum(p[:, 0] * q[:, 1] - p[:, 1] * q[:, 0])
    c = np.sum(p[:, 0] * q[:, 0] + p[:, 1] * q[:, 1])
    if np.hypot(s, c) < 1e-12 * max(1.0, np.sum(p[:, :2] ** 2)):
        raise DegenerateAlignment("alignment joints do not constrain the heading")
    R = rot_z(np.arctan2(s, c))
    return RigidPose(R, qc - R @ pc)


def apply_pose(seq: SkeletonSequence, pose: RigidPose) -> SkeletonSequence:
    X = np.where(seq.valid[..., None], pose.apply(seq.frames.reshape(-1, 3)).reshape(seq.frames.shape), 0.0)
    return seq.replace(frames=X)


def align_global(seq: SkeletonSequence, reference: SkeletonSequence, joints=None) -> SkeletonSequence:
    """``seq`` moved by the yaw + translation that best matches ``reference``."""
    return apply_pose(seq, estimate_alignment(seq, reference, joints))


def resample(seq: SkeletonSequence, length: int) -> SkeletonSequence:
    """Uniform linear time-resampling to ``length`` frames (end points kept).

    An interpolated sample is valid when both neighbours are valid.
    """
    T = seq.length
    if length == T:
        return seq
    if length < 1:
        raise InvalidInput("length must be positive")
    s = np.linspace(0.0, T - 1, length) if length > 1 else np.zeros(1)
    lo = np.floor(s).astype(int)
    hi = np.minimum(lo + 1, T - 1)
    w = (s - lo)[:, None, None]
    X = (1.0 - w) * seq.frames[lo] + w * seq.frames[hi]
    exact = w[:, 0, 0] == 0.0
    valid = seq.valid[lo] & (seq.valid[hi] | exact[:, None])
    X = np.where(valid[..., None], X, 0.0)
    rate = seq.frame_rate * (length - 1) / (T - 1) if length > 1 and T > 1 else seq.frame_rate
    return SkeletonSequence(seq.model, X, valid, rate, seq.subject)


@dataclass(frozen=True)
class CompareConfig:
    flag_threshold_deg: float = 10.0
    flag_min_frames: int = 3
    align: bool = True

    def __post_init__(self):
        if not float(self.flag_threshold_deg) >= 0:
            raise InvalidInput("flag_threshold_deg must be non-negative")
        if int(self.flag_min_frames) < 1:
            raise InvalidInput("flag_min_frames must be >= 1")


@dataclass(frozen=True)
class Flag:
    """Frames ``[start, end)`` where triple ``triple`` deviates beyond the threshold."""

    triple: int
    name: str
    joint: int
    start: int
    end: int
    peak_deg: float


@dataclass(frozen=True, eq=False)
class ComparisonReport:
    """Per-frame deviations of a student from a coach.

    ``distance_cm`` is ``(T, N)`` and ``angle_deg`` is ``(T, K)``; invalid
    samples hold ``nan`` and are excluded from the means.
    """

    model: SkeletonModel
    distance_cm: np.ndarray
    angle_deg: np.ndarray
    mean_distance_cm: float
    mean_angle_deg: float
    flags: tuple
    alignment: RigidPose = field(default_factory=RigidPose.identity)
    student: str = ""
    coach: str = ""

    @property
    def frames(self):
        return self.distance_cm.shape[0]

    def per_joint_mean_distance(self):
        return _nanmean(self.distance_cm, axis=0)

    def per_triple_mean_angle(self):
        return _nanmean(self.angle_deg, axis=0)


def _nanmean(a, axis=None):
    ok = np.isfinite(a)
    n = ok.sum(axis=axis)
    total = np.where(ok, a, 0.0).sum(axis=axis)
    with np.errstate(invalid="ignore", divide="ignore"):
        return total / n


def flag_runs(dev_deg, threshold, min_frames):
    """Maximal runs ``(start, end)`` of at least ``min_frames`` samples above ``threshold``."""
    above = np.nan_to_num(np.asarray(dev_deg, dtype=float), nan=-np.inf) > threshold
    edges = np.flatnonzero(np.diff(np.r_[0, above.astype(np.int8), 0]))
    return [(int(a), int(b)) for a, b in zip(edges[::2], edges[1::2]) if b - a >= min_frames]


def compare(student: SkeletonSequence, coach: SkeletonSequence, config: CompareConfig | None = None,
            alignment: RigidPose | None = None) -> ComparisonReport:
    """Trajectory and angle deviations of ``student`` relative to ``coach``.

    Both should already be retargeted to one standard body. The longer
    sequence is resampled to the shorter length, the student is aligned to
    the coach (unless ``config.align`` is off or an explicit ``alignment`` is
    given), and angle deviations above the threshold for at least
    ``flag_min_frames`` consecutive frames are flagged.

    Raises:
        ModelMismatch: the sequences use different skeleton models.
    """
    config = config or CompareConfig()
    if not student.model.same_topology(coach.model) or student.model.angle_triples != coach.model.angle_triples:
        raise ModelMismatch(f"cannot compare {student.model.name!r} with {coach.model.name!r}")
    T = min(student.length, coach.length)
    s, c = resample(student, T), resample(coach, T)
    if alignment is None:
        alignment = estimate_alignment(s, c) if config.align else RigidPose.identity()
    s = apply_pose(s, alignment)

    both = s.valid & c.valid
    dist = np.where(both, np.linalg.norm(s.frames - c.frames, axis=2), np.nan)
    a_s, a_c = joint_angles(s), joint_angles(c)
    ok = a_s.valid & a_c.valid
    ang = np.where(ok, np.degrees(np.abs(np.where(ok, a_s.values - a_c.values, 0.0))), np.nan)

    flags = []
    for k, (name, triple) in enumerate(zip(s.model.triple_names, s.model.angle_triples)):
        for a, b in flag_runs(ang[:, k], config.flag_threshold_deg, config.flag_min_frames):
            flags.append(Flag(k, name, triple[1], a, b, float(np.nanmax(ang[a:b, k]))))
    return ComparisonReport(s.model, dist, ang, float(_nanmean(dist)), float(_nanmean(ang)), tuple(flags),
                            alignment, student.subject, coach.subject)
