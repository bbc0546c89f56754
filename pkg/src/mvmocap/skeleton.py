"""Skeleton models and the per-frame / per-sequence skeleton containers."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import InvalidInput

INSUFFICIENT_VIEWS = "insufficient-views"
DEGENERATE_GEOMETRY = "degenerate-geometry"
INVALID_SOURCE = "invalid-source"
ZERO_LENGTH_BONE = "zero-length-bone"


@dataclass(frozen=True)
class SkeletonModel:
    """Joint names, kinematic tree and the angle triples ``(a, j, b)``.

    The angle at joint ``j`` is measured between the bones ``j -> a`` and
    ``j -> b``. Triples must follow tree edges so that the angles survive
    bone-length retargeting.
    """

    name: str
    joint_names: tuple
    parents: tuple
    angle_triples: tuple = ()
    triple_names: tuple = ()
    alignment_joints: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "joint_names", tuple(self.joint_names))
        object.__setattr__(self, "parents", tuple(int(p) for p in self.parents))
        object.__setattr__(self, "angle_triples", tuple(tuple(int(i) for i in t) for t in self.angle_triples))
        names = tuple(self.triple_names) or tuple(self.joint_names[t[1]] for t in self.angle_triples)
        object.__setattr__(self, "triple_names", names)
        n = len(self.joint_names)
        if len(self.parents) != n or n == 0:
            raise InvalidInput("one parent index per joint is required")
        roots = [j for j, p in enumerate(self.parents) if p < 0]
        if len(roots) != 1:
            raise InvalidInput(f"skeleton tree needs exactly one root, found {len(roots)}")
        if any(p >= n for p in self.parents):
            raise InvalidInput("parent index out of range")
        if len(self.tree_order) != n:
            raise InvalidInput("skeleton tree contains a cycle")
        edges = {frozenset(e) for e in self.edges}
        for t in self.angle_triples:
            if len(t) != 3 or any(not 0 <= i < n for i in t):
                raise InvalidInput(f"angle triple {t} references unknown joints")
            if frozenset((t[0], t[1])) not in edges or frozenset((t[1], t[2])) not in edges:
                raise InvalidInput(f"angle triple {t} must follow skeleton bones")
        if len(self.triple_names) != len(self.angle_triples):
            raise InvalidInput("one name per angle triple is required")
        if not self.alignment_joints:
            object.__setattr__(self, "alignment_joints", (self.root,))
        object.__setattr__(self, "alignment_joints", tuple(int(j) for j in self.alignment_joints))

    @property
    def joint_count(self):
        return len(self.joint_names)

    @property
    def root(self):
        return next(j for j, p in enumerate(self.parents) if p < 0)

    @cached_property
    def children(self):
        out = [[] for _ in self.joint_names]
        for j, p in enumerate(self.parents):
            if p >= 0:
                out[p].append(j)
        return tuple(tuple(c) for c in out)

    @cached_property
    def tree_order(self):
        """Joints in breadth-first order from the root (parents before children)."""
        order, queue, seen = [], deque([self.root]), set()
        while queue:
            j = queue.popleft()
            if j in seen:
                break
            seen.add(j)
            order.append(j)
            queue.extend(c for c, p in enumerate(self.parents) if p == j)
        return tuple(order)

    @property
    def edges(self):
        """``(parent, child)`` pairs in tree order."""
        return tuple((self.parents[j], j) for j in self.tree_order if self.parents[j] >= 0)

    def descendants(self, joint):
        out, stack = [], list(self.children[joint])
        while stack:
            j = stack.pop()
            out.append(j)
            stack.extend(self.children[j])
        return sorted(out)

    def index(self, name):
        return self.joint_names.index(name)

    def same_topology(self, other):
        return self.parents == other.parents and self.joint_count == other.joint_count

    def truncated(self, n, name=None):
        """The first ``n`` joints as a model of its own (they must form a subtree)."""
        if any(p >= n for p in self.parents[:n]):
            raise InvalidInput(f"the first {n} joints do not form a subtree")
        keep = [i for i, t in enumerate(self.angle_triples) if max(t) < n]
        return SkeletonModel(
            name or f"{self.name}-{n}",
            self.joint_names[:n],
            self.parents[:n],
            [self.angle_triples[i] for i in keep],
            [self.triple_names[i] for i in keep],
            [j for j in self.alignment_joints if j < n],
        )


BODY25_JOINTS = (
    "Nose", "Neck", "RShoulder", "RElbow", "RWrist", "LShoulder", "LElbow", "LWrist",
    "MidHip", "RHip", "RKnee", "RAnkle", "LHip", "LKnee", "LAnkle",
    "REye", "LEye", "REar", "LEar", "LBigToe", "LSmallToe", "LHeel", "RBigToe", "RSmallToe", "RHeel",
)
# rooted at MidHip; otherwise the OpenPose Body-25 limb pairs
BODY25_PARENTS = (1, 8, 1, 2, 3, 1, 5, 6, -1, 8, 9, 10, 8, 12, 13, 0, 0, 15, 16, 14, 19, 14, 11, 22, 11)
BODY25_TRIPLES = (
    (1, 2, 3), (1, 5, 6),       # shoulders
    (2, 3, 4), (5, 6, 7),       # elbows
    (8, 9, 10), (8, 12, 13),    # hips
    (9, 10, 11), (12, 13, 14),  # knees
)
BODY25_TRIPLE_NAMES = ("S-r", "S-l", "E-r", "E-l", "H-r", "H-l", "K-r", "K-l")

BODY25 = SkeletonModel("body25", BODY25_JOINTS, BODY25_PARENTS, BODY25_TRIPLES, BODY25_TRIPLE_NAMES, (8, 9, 12))
BODY15 = BODY25.truncated(15, "body15")

MODELS = {m.name: m for m in (BODY25, BODY15)}


def get_model(name) -> SkeletonModel:
    try:
        return MODELS[name]
    except KeyError:
        raise InvalidInput(f"unknown skeleton model {name!r}; known: {', '.join(sorted(MODELS))}") from None


# standing pose, facing +y, right side towards +x, cm
BODY25_REST_POSE = np.array([
    [0.0, 8.0, 165.0],
    [0.0, 0.0, 150.0],
    [18.0, 0.0, 147.0],
    [22.0, 6.0, 120.0],
    [20.0, 25.0, 105.0],
    [-18.0, 0.0, 147.0],
    [-22.0, 6.0, 120.0],
    [-20.0, 25.0, 105.0],
    [0.0, 0.0, 95.0],
    [10.0, 0.0, 95.0],
    [14.0, 14.0, 52.0],
    [15.0, 0.0, 9.0],
    [-10.0, 0.0, 95.0],
    [-14.0, 14.0, 52.0],
    [-15.0, 0.0, 9.0],
    [3.5, 7.0, 168.0],
    [-3.5, 7.0, 168.0],
    [7.5, 1.0, 166.0],
    [-7.5, 1.0, 166.0],
    [-17.0, 18.0, 2.0],
    [-22.0, 15.0, 2.0],
    [-15.0, -4.0, 3.0],
    [17.0, 18.0, 2.0],
    [22.0, 15.0, 2.0],
    [15.0, -4.0, 3.0],
])


def _ro(a, dtype=float):
    a = np.array(a, dtype=dtype)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Skeleton2D:
    """One camera's detection for one frame; missing joints have confidence 0."""

    model: SkeletonModel
    joints: np.ndarray
    confidence: np.ndarray
    camera_id: str
    frame_id: int

    def __post_init__(self):
        pts = _ro(self.joints).reshape(-1, 2)
        conf = _ro(self.confidence).reshape(-1)
        n = self.model.joint_count
        if len(pts) != n or len(conf) != n:
            raise InvalidInput(f"expected {n} joints")
        if np.any(~np.isfinite(conf)) or np.any((conf < 0) | (conf > 1)):
            raise InvalidInput("confidence must lie in [0, 1]")
        if np.any(~np.isfinite(pts[conf > 0])):
            raise InvalidInput("detected joints must have finite pixels")
        object.__setattr__(self, "joints", pts)
        object.__setattr__(self, "confidence", conf)
        object.__setattr__(self, "camera_id", str(self.camera_id))
        object.__setattr__(self, "frame_id", int(self.frame_id))


@dataclass(frozen=True, eq=False)
class Skeleton3D:
    model: SkeletonModel
    joints: np.ndarray
    valid: np.ndarray
    frame_id: int
    rms_px: np.ndarray = None
    view_count: np.ndarray = None
    reasons: tuple = ()

    def __post_init__(self):
        n = self.model.joint_count
        pts = _ro(self.joints).reshape(-1, 3)
        valid = _ro(self.valid, bool).reshape(-1)
        if len(pts) != n or len(valid) != n:
            raise InvalidInput(f"expected {n} joints")
        if np.any(~np.isfinite(pts[valid])):
            raise InvalidInput("valid joints must be finite")
        rms = _ro(np.full(n, np.nan) if self.rms_px is None else self.rms_px).reshape(n)
        views = _ro(np.zeros(n, int) if self.view_count is None else self.view_count, int).reshape(n)
        reasons = tuple(self.reasons) if self.reasons else tuple(None if v else INSUFFICIENT_VIEWS for v in valid)
        object.__setattr__(self, "joints", pts)
        object.__setattr__(self, "valid", valid)
        object.__setattr__(self, "frame_id", int(self.frame_id))
        object.__setattr__(self, "rms_px", rms)
        object.__setattr__(self, "view_count", views)
        object.__setattr__(self, "reasons", reasons)


@dataclass(frozen=True, eq=False)
class SkeletonSequence:
    """``T x N`` joint track in cm with per-sample validity."""

    model: SkeletonModel
    frames: np.ndarray
    valid: np.ndarray = None
    frame_rate: float = 30.0
    subject: str = ""
    frame_ids: np.ndarray = field(default=None)

    def __post_init__(self):
        X = _ro(self.frames)
        if X.ndim != 3 or X.shape[1:] != (self.model.joint_count, 3):
            raise InvalidInput(f"frames must have shape (T, {self.model.joint_count}, 3)")
        if X.shape[0] < 1:
            raise InvalidInput("a sequence needs at least one frame")
        valid = np.isfinite(X).all(axis=2) if self.valid is None else np.array(self.valid, dtype=bool)
        if valid.shape != X.shape[:2]:
            raise InvalidInput("valid mask shape does not match frames")
        if np.any(~np.isfinite(X[valid])):
            raise InvalidInput("valid samples must be finite")
        if not float(self.frame_rate) > 0:
            raise InvalidInput("frame_rate must be positive")
        ids = np.arange(X.shape[0]) if self.frame_ids is None else np.asarray(self.frame_ids, dtype=int)
        if ids.shape != (X.shape[0],):
            raise InvalidInput("one frame id per frame is required")
        object.__setattr__(self, "frames", X)
        object.__setattr__(self, "valid", _ro(valid, bool))
        object.__setattr__(self, "frame_rate", float(self.frame_rate))
        object.__setattr__(self, "subject", str(self.subject))
        object.__setattr__(self, "frame_ids", _ro(ids, int))

    @property
    def length(self):
        return self.frames.shape[0]

    def replace(self, frames=None, valid=None, **kw):
        return SkeletonSequence(
            kw.pop("model", self.model),
            self.frames if frames is None else frames,
            self.valid if valid is None else valid,
            kw.pop("frame_rate", self.frame_rate),
            kw.pop("subject", self.subject),
            kw.pop("frame_ids", self.frame_ids),
        )

    @classmethod
    def from_skeletons(cls, skeletons, frame_rate=30.0, subject=""):
        skeletons = sorted(skeletons, key=lambda s: s.frame_id)
        if not skeletons:
            raise InvalidInput("a sequence needs at least one frame")
        model = skeletons[0].model
        return cls(model, np.array([s.joints for s in skeletons]), np.array([s.valid for s in skeletons]),
                   frame_rate, subject, np.array([s.frame_id for s in skeletons]))
