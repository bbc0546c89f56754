"""Chain per-camera board poses into one rig frame."""

from __future__ import annotations

from collections import defaultdict, deque

import numpy as np

from ..errors import DisconnectedRig, InvalidInput
from ..geometry import RigidPose, matrix_to_quaternion, quaternion_mean, quaternion_to_matrix


def _average(poses_R, poses_t):
    q = quaternion_mean(matrix_to_quaternion(np.asarray(poses_R)))
    return quaternion_to_matrix(q), np.mean(poses_t, axis=0)


def register_rig(per_camera_board_poses, reference_camera=None, *, with_boards=False,
                 max_sweeps=25, tol=1e-12):
    """Camera poses in the reference camera's frame.

    Args:
        per_camera_board_poses: ``{(camera_id, frame_id): board_to_camera}``.
        reference_camera: camera that defines the world frame; defaults to the
            lexicographically smallest id.
        with_boards: also return ``{frame_id: board_to_world}``.

    A spanning tree of the camera/board co-observation graph gives the first
    estimate. It is then refined by alternating closed-form averages: each
    board from every camera that sees it, each camera from every board it
    sees (quaternion mean for rotation, least-squares mean for translation),
    so every co-observation path contributes.

    Raises:
        DisconnectedRig: some cameras share no chain of boards with the reference.
    """
    obs = {(str(c), int(f)): p for (c, f), p in per_camera_board_poses.items()}
    if not obs:
        raise InvalidInput("no board poses given")
    by_cam, by_frame = defaultdict(list), defaultdict(list)
    for c, f in obs:
        by_cam[c].append(f)
        by_frame[f].append(c)
    cams = sorted(by_cam)
    ref = cams[0] if reference_camera is None else str(reference_camera)
    if ref not in by_cam:
        raise InvalidInput(f"reference camera {ref!r} has no observations")

    cam_R = {ref: np.eye(3)}
    cam_t = {ref: np.zeros(3)}
    board_R, board_t = {}, {}
    queue = deque([("c", ref)])
    while queue:
        kind, key = queue.popleft()
        if kind == "c":
            for f in sorted(by_cam[key]):
                if f in board_R:
                    continue
                p = obs[(key, f)]
                board_R[f] = cam_R[key].T @ p.rotation
                board_t[f] = cam_R[key].T @ (p.translation - cam_t[key])
                queue.append(("b", f))
        else:
            for c in sorted(by_frame[key]):
                if c in cam_R:
                    continue
                p = obs[(c, key)]
                cam_R[c] = p.rotation @ board_R[key].T
                cam_t[c] = p.translation - cam_R[c] @ board_t[key]
                queue.append(("c", c))
    missing = set(cams) - set(cam_R)
    if missing:
        raise DisconnectedRig(missing)

    for _ in range(max_sweeps):
        change = 0.0
        for f in sorted(by_frame):
            Rs = [cam_R[c].T @ obs[(c, f)].rotation for c in by_frame[f]]
            R = _average(Rs, np.zeros((len(Rs), 3)))[0]
            t = np.mean([cam_R[c].T @ (obs[(c, f)].translation - cam_t[c]) for c in by_frame[f]], axis=0)
            change = max(change, np.abs(R - board_R[f]).max(), np.abs(t - board_t[f]).max() / 100.0)
            board_R[f], board_t[f] = R, t
        for c in cams:
            if c == ref:
                continue
            Rs = [obs[(c, f)].rotation @ board_R[f].T for f in by_cam[c]]
            R = _average(Rs, np.zeros((len(Rs), 3)))[0]
            t = np.mean([obs[(c, f)].translation - R @ board_t[f] for f in by_cam[c]], axis=0)
            change = max(change, np.abs(R - cam_R[c]).max(), np.abs(t - cam_t[c]).max() / 100.0)
            cam_R[c], cam_t[c] = R, t
        if change < tol:
            break

    cameras = {c: RigidPose(cam_R[c], cam_t[c]) for c in cams}
    if with_boards:
        return cameras, {f: RigidPose(board_R[f], board_t[f]) for f in sorted(board_R)}
    return cameras
