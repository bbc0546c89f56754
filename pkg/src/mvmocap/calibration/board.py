from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import InvalidInput
from ..geometry import Camera, RigidPose


@dataclass(frozen=True)
class CheckerboardSpec:
    """Planar target with ``rows x cols`` inner corners spaced ``square_size`` cm.

    Board index ``k`` sits at row ``k // cols``, column ``k % cols``; board
    coordinates are ``(col * square, row * square, 0)``.
    """

    rows: int = 10
    cols: int = 15
    square_size: float = 5.0

    def __post_init__(self):
        if int(self.rows) < 3 or int(self.cols) < 3:
            raise InvalidInput("checkerboard needs at least 3x3 inner corners")
        if not 0 < float(self.square_size) < np.inf:
            raise InvalidInput("square_size must be positive and finite")
        object.__setattr__(self, "rows", int(self.rows))
        object.__setattr__(self, "cols", int(self.cols))
        object.__setattr__(self, "square_size", float(self.square_size))

    @property
    def corner_count(self):
        return self.rows * self.cols

    def points(self, indices=None):
        """Board-frame 3D corner positions, ``(n, 3)``."""
        idx = np.arange(self.corner_count) if indices is None else np.asarray(indices, dtype=int)
        r, c = np.divmod(idx, self.cols)
        return np.stack([c * self.square_size, r * self.square_size, np.zeros(len(idx))], axis=-1)

    def center(self):
        return np.array([(self.cols - 1) * self.square_size / 2, (self.rows - 1) * self.square_size / 2, 0.0])


@dataclass(frozen=True, eq=False)
class BoardObservation:
    """Corners of one board frame detected by one camera."""

    camera_id: str
    frame_id: int
    indices: np.ndarray
    pixels: np.ndarray

    def __post_init__(self):
        idx = np.asarray(self.indices, dtype=int).reshape(-1)
        px = np.asarray(self.pixels, dtype=float).reshape(-1, 2)
        if len(idx) != len(px):
            raise InvalidInput("indices and pixels differ in length")
        if len(np.unique(idx)) != len(idx):
            raise InvalidInput("board_index must be unique within one observation")
        if np.any(idx < 0):
            raise InvalidInput("board_index must be non-negative")
        if not np.all(np.isfinite(px)):
            raise InvalidInput("corner pixels must be finite")
        idx.setflags(write=False)
        px.setflags(write=False)
        object.__setattr__(self, "camera_id", str(self.camera_id))
        object.__setattr__(self, "frame_id", int(self.frame_id))
        object.__setattr__(self, "indices", idx)
        object.__setattr__(self, "pixels", px)

    @classmethod
    def from_corners(cls, camera_id, frame_id, corners):
        corners = list(corners)
        idx = [k for k, _ in corners]
        px = [p for _, p in corners]
        return cls(camera_id, frame_id, np.array(idx, dtype=int), np.array(px, dtype=float).reshape(-1, 2))

    @property
    def corners(self):
        return list(zip(self.indices.tolist(), self.pixels))

    @property
    def usable(self):
        return len(self.indices) >= 4

    def validate(self, spec: CheckerboardSpec):
        if len(self.indices) > spec.corner_count or (len(self.indices) and self.indices.max() >= spec.corner_count):
            raise InvalidInput(f"observation {self.camera_id}/{self.frame_id} has corner indices outside the board")


@dataclass(frozen=True, eq=False)
class RigCalibration:
    """Calibrated cameras in one world frame.

    ``rms_reprojection_px`` is the root mean square of the per-corner residual
    norms over every retained correspondence.
    """

    cameras: dict[str, Camera]
    rms_reprojection_px: float = float("nan")
    per_camera_rms: dict[str, float] = field(default_factory=dict)
    board: CheckerboardSpec | None = None
    board_poses: dict[int, RigidPose] = field(default_factory=dict)
    reference_camera: str | None = None
    iterations: int = 0
    log: list = field(default_factory=list, repr=False)

    def __getitem__(self, camera_id):
        return self.cameras[camera_id]

    @property
    def camera_ids(self):
        return sorted(self.cameras)

    def transformed(self, world_from_new: RigidPose) -> "RigCalibration":
        """Re-express the rig in a new world frame (``world_from_new`` maps new -> current)."""
        inv = world_from_new.inverse()
        cams = {k: c.transformed(world_from_new) for k, c in self.cameras.items()}
        boards = {f: inv @ p for f, p in self.board_poses.items()}
        return RigCalibration(cams, self.rms_reprojection_px, dict(self.per_camera_rms), self.board,
                              boards, self.reference_camera, self.iterations, list(self.log))


def reprojection_errors(cameras, board_poses, observations, spec: CheckerboardSpec):
    """Per-corner residual norms, concatenated in observation order."""
    out = []
    for ob in observations:
        cam = cameras[ob.camera_id]
        world = board_poses[ob.frame_id].apply(spec.points(ob.indices))
        out.append(np.linalg.norm(cam.project(world) - ob.pixels, axis=1))
    return np.concatenate(out) if out else np.zeros(0)


def rms(values):
    values = np.asarray(values, dtype=float)
    return float(np.sqrt(np.mean(values**2))) if values.size else float("nan")
