"""End-to-end rig calibration from board observations."""

from __future__ import annotations

import logging
from collections import defaultdict

from ..errors import DegenerateConfiguration, InsufficientViews
from ..geometry import Camera, RigidPose
from .board import CheckerboardSpec, RigCalibration, reprojection_errors, rms
from .bundle import BAConfig, bundle_adjust
from .homography import estimate_homography
from .rig import register_rig
from .zhang import estimate_board_pose, init_intrinsics_zhang

logger = logging.getLogger(__name__)


def calibrate_rig(observations, spec: CheckerboardSpec, image_sizes=None, *, reference_camera=None,
                  anchor: RigidPose | None = None, config: BAConfig | None = None, zero_skew=True,
                  min_corners=None) -> RigCalibration:
    """Zhang initialisation per camera, rig registration, then bundle adjustment.

    Args:
        observations: iterable of :class:`BoardObservation`.
        spec: the checkerboard.
        image_sizes: optional ``{camera_id: (w, h)}``; used for conditioning
            and carried into the result.
        reference_camera: world-frame camera; defaults to the smallest id.
        anchor: known world-to-camera pose of the reference camera. Without
            it the result is expressed in the reference camera's frame.
        min_corners: observations with fewer corners are skipped for the
            closed-form steps (default: half the board).
    """
    config = config or BAConfig()
    image_sizes = image_sizes or {}
    observations = [ob for ob in observations if ob.usable]
    for ob in observations:
        ob.validate(spec)
    min_corners = spec.corner_count // 2 if min_corners is None else min_corners

    homographies = {}
    for ob in observations:
        if len(ob.indices) < min_corners:
            continue
        try:
            homographies[(ob.camera_id, ob.frame_id)] = estimate_homography(spec.points(ob.indices)[:, :2], ob.pixels)
        except DegenerateConfiguration:
            logger.debug("skipping degenerate board view %s/%s", ob.camera_id, ob.frame_id)

    per_cam = defaultdict(list)
    for (c, f), H in homographies.items():
        per_cam[c].append(H)
    all_cams = sorted({ob.camera_id for ob in observations})
    intrinsics = {}
    for c in all_cams:
        Hs = per_cam.get(c, [])
        if len(Hs) < 3:
            raise InsufficientViews(f"camera {c} has {len(Hs)} usable board views, need >= 3")
        intrinsics[c] = init_intrinsics_zhang(Hs, image_sizes.get(c), zero_skew=zero_skew)

    board_to_cam = {key: estimate_board_pose(intrinsics[key[0]], H) for key, H in homographies.items()}
    ref = reference_camera or config.reference_camera or all_cams[0]
    cam_poses, board_poses = register_rig(board_to_cam, ref, with_boards=True)
    if anchor is not None:
        cam_poses = {c: p @ anchor for c, p in cam_poses.items()}
        a_inv = anchor.inverse()
        board_poses = {f: a_inv @ p for f, p in board_poses.items()}

    cameras = {c: Camera(intrinsics[c], cam_poses[c], image_sizes.get(c, (2448, 2048))) for c in all_cams}
    used = [ob for ob in observations if ob.frame_id in board_poses]
    initial_rms = rms(reprojection_errors(cameras, board_poses, used, spec))
    logger.info("initial rig estimate: rms %.4g px over %d cameras, %d boards", initial_rms, len(cameras), len(board_poses))
    initial = RigCalibration(cameras, initial_rms, {}, spec, board_poses, ref)
    return bundle_adjust(initial, used, config)
