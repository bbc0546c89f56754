"""Multi-camera calibration from planar checkerboard views."""

from .board import BoardObservation, CheckerboardSpec, RigCalibration, reprojection_errors
from .bundle import BAConfig, ReprojectionProblem, bundle_adjust, initial_board_poses, levenberg_marquardt
from .homography import apply_homography, estimate_homography
from .pipeline import calibrate_rig
from .rig import register_rig
from .zhang import estimate_board_pose, init_intrinsics_zhang

__all__ = [
    "BAConfig",
    "BoardObservation",
    "CheckerboardSpec",
    "ReprojectionProblem",
    "RigCalibration",
    "apply_homography",
    "bundle_adjust",
    "calibrate_rig",
    "estimate_board_pose",
    "estimate_homography",
    "init_intrinsics_zhang",
    "initial_board_poses",
    "levenberg_marquardt",
    "register_rig",
    "reprojection_errors",
]
