"""Multi-view motion-capture geometry: rig calibration, skeleton fusion,
joint-angle analysis and a small volume-rendering integrator."""

from .calibration import BAConfig, BoardObservation, CheckerboardSpec, RigCalibration, calibrate_rig
from .errors import MocapError
from .geometry import Camera, Intrinsics, Ray, RigidPose
from .skeleton import BODY15, BODY25, Skeleton2D, Skeleton3D, SkeletonModel, SkeletonSequence

__version__ = "0.1.0"

__all__ = [
    "BAConfig",
    "BODY15",
    "BODY25",
    "BoardObservation",
    "Camera",
    "CheckerboardSpec",
    "Intrinsics",
    "MocapError",
    "Ray",
    "RigCalibration",
    "RigidPose",
    "Skeleton2D",
    "Skeleton3D",
    "SkeletonModel",
    "SkeletonSequence",
    "calibrate_rig",
]
