"""Closed-form intrinsics and board pose from plane homographies."""

from __future__ import annotations

import numpy as np

from ..errors import IllConditioned, InsufficientViews
from ..geometry import Intrinsics, RigidPose, nearest_rotation

MAX_CONDITION = 1e12


def _v(H, i, j):
    hi, hj = H[:, i], H[:, j]
    return np.array([
        hi[0] * hj[0],
        hi[0] * hj[1] + hi[1] * hj[0],
        hi[1] * hj[1],
        hi[2] * hj[0] + hi[0] * hj[2],
        hi[2] * hj[1] + hi[1] * hj[2],
        hi[2] * hj[2],
    ])


def _pixel_normalizer(homographies, image_size):
    if image_size is not None:
        w, h = image_size
        ox, oy, s = w / 2.0, h / 2.0, 2.0 / (w + h)
    else:
        # images of the board origins give the pixel range in use
        org = np.array([H[:2, 2] / H[2, 2] for H in homographies])
        ox, oy = org.mean(axis=0)
        spread = np.abs(org - (ox, oy)).mean()
        s = 1.0 / max(spread, 1.0)
    return np.array([[s, 0.0, -s * ox], [0.0, s, -s * oy], [0.0, 0.0, 1.0]])


def init_intrinsics_zhang(homographies, image_size=None, zero_skew=True) -> Intrinsics:
    """Intrinsics from the image of the absolute conic.

    Each homography contributes the two orthonormality constraints on
    ``B = K^-T K^-1``; the stacked system is solved by SVD. Pixels are first
    mapped to a unit-scale frame so the conic system stays well conditioned.

    Raises:
        InsufficientViews: fewer than three homographies.
        IllConditioned: the conic system's condition number (largest over
            second-smallest singular value) exceeds 1e12, or the recovered
            conic is not positive definite.
    """
    Hs = [np.asarray(H, dtype=float) for H in homographies]
    if len(Hs) < 3:
        raise InsufficientViews(f"need >= 3 board views for closed-form intrinsics, got {len(Hs)}")
    N = _pixel_normalizer(Hs, image_size)
    V = []
    for H in Hs:
        Hn = N @ H
        Hn = Hn / np.linalg.norm(Hn)
        V.append(_v(Hn, 0, 1))
        V.append(_v(Hn, 0, 0) - _v(Hn, 1, 1))
    V = np.array(V)
    V /= np.linalg.norm(V, axis=1, keepdims=True)
    _, s, Vt = np.linalg.svd(V)
    if s[-2] <= 0 or s[0] / s[-2] > MAX_CONDITION:
        raise IllConditioned("board orientations do not constrain the conic (near-parallel views?)")
    b = Vt[-1]
    if b[0] < 0:
        b = -b
    B11, B12, B22, B13, B23, B33 = b
    den = B11 * B22 - B12**2
    if B11 <= 0 or den <= 0:
        raise IllConditioned("recovered conic is not positive definite")
    v0 = (B12 * B13 - B11 * B23) / den
    lam = B33 - (B13**2 + v0 * (B12 * B13 - B11 * B23)) / B11
    if lam <= 0:
        raise IllConditioned("recovered conic is not positive definite")
    alpha = np.sqrt(lam / B11)
    beta = np.sqrt(lam * B11 / den)
    gamma = -B12 * alpha**2 * beta / lam
    u0 = gamma * v0 / beta - B13 * alpha**2 / lam
    Kn = np.array([[alpha, gamma, u0], [0.0, beta, v0], [0.0, 0.0, 1.0]])
    K = np.linalg.solve(N, Kn)
    K /= K[2, 2]
    k = Intrinsics.from_matrix(K)
    if zero_skew:
        k = Intrinsics(k.fx, k.fy, k.cx, k.cy, 0.0)
    return k


def estimate_board_pose(intrinsics: Intrinsics, homography) -> RigidPose:
    """Board-to-camera pose from ``H ~ K [r1 r2 t]``.

    The rotation is projected onto SO(3) and the sign chosen so the board lies
    in front of the camera.
    """
    A = intrinsics.inverse_matrix @ np.asarray(homography, dtype=float)
    n1, n2 = np.linalg.norm(A[:, 0]), np.linalg.norm(A[:, 1])
    if n1 < 1e-12 or n2 < 1e-12:
        raise IllConditioned("homography columns vanish after removing intrinsics")
    lam = 2.0 / (n1 + n2)
    if A[2, 2] * lam < 0:
        lam = -lam
    r1, r2 = lam * A[:, 0], lam * A[:, 1]
    R = nearest_rotation(np.column_stack([r1, r2, np.cross(r1, r2)]))
    return RigidPose(R, lam * A[:, 2])
