"""Multi-view triangulation of 2D skeletons into 3D skeletons."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from itertools import combinations

import numpy as np

from .calibration.board import RigCalibration
from .errors import DegenerateGeometry, FrameMismatch, InsufficientViews, InvalidInput, UnknownCamera
from .geometry import Camera
from .skeleton import DEGENERATE_GEOMETRY, INSUFFICIENT_VIEWS, Skeleton3D, SkeletonSequence

DEGENERACY_RATIO = 0.99


@dataclass(frozen=True)
class FusionConfig:
    """Triangulation settings.

    ``mode="all"`` solves one DLT system over every contributing view.
    ``mode="pairwise"`` triangulates each camera pair separately and averages
    the results; ``pairs`` restricts which pairs are used (default: every
    pair of contributing views).
    """

    min_confidence: float = 0.3
    min_views: int = 2
    mode: str = "all"
    pairs: tuple = ()
    threads: int = 1

    def __post_init__(self):
        if not 0.0 <= float(self.min_confidence) <= 1.0:
            raise InvalidInput("min_confidence must lie in [0, 1]")
        if int(self.min_views) < 2:
            raise InvalidInput("min_views must be at least 2")
        if self.mode not in ("all", "pairwise"):
            raise InvalidInput(f"unknown fusion mode {self.mode!r}")
        if int(self.threads) < 1:
            raise InvalidInput("threads must be >= 1")
        object.__setattr__(self, "pairs", tuple(tuple(str(c) for c in p) for p in self.pairs))


def _unit_projection(camera: Camera):
    P = camera.projection_matrix
    return P / np.linalg.norm(P)


def triangulate_dlt(observations) -> np.ndarray:
    """Weighted homogeneous least-squares point from ``(camera, pixel, weight)`` triples.

    Each camera matrix is scaled to unit Frobenius norm; the two DLT rows of
    an observation are then multiplied by its weight. Observations with zero
    weight are ignored.

    Raises:
        InsufficientViews: fewer than two observations with positive weight.
        DegenerateGeometry: coincident camera centres, a point at infinity, or
            ``s_min / s_second > 0.99`` for the design matrix.
    """
    used = []
    for cam, px, w in observations:
        w = float(w)
        if not np.isfinite(w) or w < 0:
            raise InvalidInput("weights must be finite and non-negative")
        if w > 0:
            used.append((cam, np.asarray(px, dtype=float).reshape(2), w))
    if len(used) < 2:
        raise InsufficientViews(f"need at least 2 weighted views, got {len(used)}")

    centres = np.array([c.center for c, _, _ in used])
    spread = np.linalg.norm(centres - centres[0], axis=1).max()
    if spread <= 1e-9 * max(1.0, np.abs(centres).max()):
        raise DegenerateGeometry("all camera centres coincide")

    A = np.empty((2 * len(used), 4))
    for i, (cam, (u, v), w) in enumerate(used):
        P = _unit_projection(cam)
        A[2 * i] = w * (u * P[2] - P[0])
        A[2 * i + 1] = w * (v * P[2] - P[1])
    _, s, vt = np.linalg.svd(A)
    if s[-2] <= 0 or s[-1] / s[-2] > DEGENERACY_RATIO:
        raise DegenerateGeometry("triangulation direction is ill-defined")
    X = vt[-1]
    if abs(X[3]) < 1e-12 * np.abs(X[:3]).max():
        raise DegenerateGeometry("triangulated point lies at infinity")
    return X[:3] / X[3]


def _cameras_of(rig):
    return rig.cameras if isinstance(rig, RigCalibration) else rig


def _check_views(views, rig):
    views = list(views)
    if not views:
        raise InvalidInput("no views to fuse")
    model = views[0].model
    frames = {v.frame_id for v in views}
    if len(frames) > 1:
        raise FrameMismatch(f"views come from several frames: {sorted(frames)}")
    cameras = _cameras_of(rig)
    for v in views:
        if not model.same_topology(v.model):
            raise InvalidInput("views use different skeleton models")
        if v.camera_id not in cameras:
            raise UnknownCamera(v.camera_id)
    ids = [v.camera_id for v in views]
    if len(set(ids)) != len(ids):
        raise InvalidInput("more than one view per camera")
    return views, cameras


def _residuals(point, cameras, pixels):
    """Pixel residual norms; ``inf`` where the point is not in front of a camera."""
    out = np.empty(len(cameras))
    for i, (cam, px) in enumerate(zip(cameras, pixels)):
        z = cam.to_camera(point)[2]
        out[i] = np.inf if z <= 1e-9 else np.linalg.norm(cam.project(point) - px)
    return out


def _contributors(views, joint, config):
    return [v for v in views if v.confidence[joint] > 0 and v.confidence[joint] >= config.min_confidence]


def _triangulate_joint(contrib, joint, cameras, config):
    if config.mode == "all":
        return triangulate_dlt([(cameras[v.camera_id], v.joints[joint], v.confidence[joint]) for v in contrib])
    by_id = {v.camera_id: v for v in contrib}
    pairs = config.pairs or tuple(combinations(sorted(by_id), 2))
    pts = []
    for a, b in pairs:
        if a in by_id and b in by_id:
            obs = [(cameras[c], by_id[c].joints[joint], by_id[c].confidence[joint]) for c in (a, b)]
            try:
                pts.append(triangulate_dlt(obs))
            except DegenerateGeometry:
                continue
    if not pts:
        raise InsufficientViews("no usable camera pair")
    return np.mean(pts, axis=0)


def fuse_skeleton(views, rig, config: FusionConfig | None = None) -> Skeleton3D:
    """Triangulate every joint of one frame from its per-camera detections.

    A view contributes to a joint when its confidence is positive and at
    least ``min_confidence``; joints with fewer than ``min_views``
    contributors are marked invalid. The reported rms is over the residual
    norms of the contributing views.

    Raises:
        FrameMismatch: views from different frames.
        UnknownCamera: a view's camera is not in ``rig``.
    """
    config = config or FusionConfig()
    views, cameras = _check_views(views, rig)
    model = views[0].model
    n = model.joint_count
    joints = np.zeros((n, 3))
    valid = np.zeros(n, bool)
    rms_px = np.full(n, np.nan)
    counts = np.zeros(n, int)
    reasons = [None] * n
    for j in range(n):
        contrib = _contributors(views, j, config)
        counts[j] = len(contrib)
        if len(contrib) < config.min_views:
            reasons[j] = INSUFFICIENT_VIEWS
            continue
        try:
            X = _triangulate_joint(contrib, j, cameras, config)
        except InsufficientViews:
            reasons[j] = INSUFFICIENT_VIEWS
            continue
        except DegenerateGeometry:
            reasons[j] = DEGENERATE_GEOMETRY
            continue
        res = _residuals(X, [cameras[v.camera_id] for v in contrib], [v.joints[j] for v in contrib])
        if not np.all(np.isfinite(res)):
            # the solution sits behind a contributing camera
            reasons[j] = DEGENERATE_GEOMETRY
            continue
        joints[j] = X
        valid[j] = True
        rms_px[j] = np.sqrt(np.mean(res**2))
    return Skeleton3D(model, joints, valid, views[0].frame_id, rms_px, counts, tuple(reasons))


def fuse_frames(frames, rig, config: FusionConfig | None = None) -> list[Skeleton3D]:
    """Fuse a list of per-frame view lists; frames run on ``config.threads`` workers."""
    config = config or FusionConfig()
    frames = list(frames)
    if config.threads > 1 and len(frames) > 1:
        with ThreadPoolExecutor(config.threads) as pool:
            return list(pool.map(lambda v: fuse_skeleton(v, rig, config), frames))
    return [fuse_skeleton(v, rig, config) for v in frames]


def fuse_sequence(frames, rig, config: FusionConfig | None = None, frame_rate=30.0, subject="") -> SkeletonSequence:
    return SkeletonSequence.from_skeletons(fuse_frames(frames, rig, config), frame_rate, subject)


@dataclass(frozen=True)
class ResidualRow:
    joint: int
    camera_id: str
    residual_px: float
    outlier: bool


@dataclass(frozen=True)
class ReprojectionReport:
    frame_id: int
    rows: tuple
    joint_rms: np.ndarray   # nan for joints without contributions

    def for_joint(self, joint):
        return [r for r in self.rows if r.joint == joint]

    def outliers(self):
        return [r for r in self.rows if r.outlier]


def reprojection_report(skeleton: Skeleton3D, views, rig, config: FusionConfig | None = None,
                        outlier_factor=5.0, min_outlier_px=1e-3) -> ReprojectionReport:
    """Residual of every contributing (joint, camera) pair of a fused frame.

    A row is an outlier when its residual exceeds ``outlier_factor`` times the
    median residual of its joint (and ``min_outlier_px``, so that rounding
    noise on exact data is never flagged).
    """
    config = config or FusionConfig()
    views, cameras = _check_views(views, rig)
    if views[0].frame_id != skeleton.frame_id:
        raise FrameMismatch(f"skeleton is frame {skeleton.frame_id}, views are frame {views[0].frame_id}")
    if not skeleton.model.same_topology(views[0].model):
        raise InvalidInput("skeleton and views use different models")
    rows = []
    joint_rms = np.full(skeleton.model.joint_count, np.nan)
    for j in np.flatnonzero(skeleton.valid):
        contrib = _contributors(views, j, config)
        if not contrib:
            continue
        res = _residuals(skeleton.joints[j], [cameras[v.camera_id] for v in contrib], [v.joints[j] for v in contrib])
        med = np.median(res)
        limit = max(outlier_factor * med, min_outlier_px)
        rows.extend(ResidualRow(int(j), v.camera_id, float(r), bool(r > limit)) for v, r in zip(contrib, res))
        joint_rms[j] = np.sqrt(np.mean(res**2))
    return ReprojectionReport(skeleton.frame_id, tuple(rows), joint_rms)


__all__ = [
    "FusionConfig",
    "ReprojectionReport",
    "ResidualRow",
    "fuse_frames",
    "fuse_sequence",
    "fuse_skeleton",
    "reprojection_report",
    "triangulate_dlt",
]
