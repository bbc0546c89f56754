"""Plane-to-image homographies by normalised DLT."""

from __future__ import annotations

import numpy as np

from ..errors import DegenerateConfiguration


def _normalizer(pts):
    """Similarity moving the centroid to 0 with mean distance sqrt(2)."""
    c = pts.mean(axis=0)
    d = np.linalg.norm(pts - c, axis=1).mean()
    s = np.sqrt(2.0) / d if d > 0 else 1.0
    return np.array([[s, 0.0, -s * c[0]], [0.0, s, -s * c[1]], [0.0, 0.0, 1.0]])


def estimate_homography(board_points, pixels):
    """Plane-to-image homography by normalised DLT.

    Args:
        board_points: ``(n, 2)`` board-plane coordinates (cm).
        pixels: ``(n, 2)`` image points (px).

    Returns:
        ``H`` with unit Frobenius norm and ``H[2, 2] >= 0`` such that
        ``pixels ~ H @ [x, y, 1]``.
    """
    src = np.asarray(board_points, dtype=float).reshape(-1, 2)
    dst = np.asarray(pixels, dtype=float).reshape(-1, 2)
    if len(src) != len(dst):
        raise ValueError("board_points and pixels differ in length")
    if len(src) < 4:
        raise DegenerateConfiguration(f"homography needs >= 4 correspondences, got {len(src)}")
    Ts, Td = _normalizer(src), _normalizer(dst)
    a = src @ Ts[:2, :2].T + Ts[:2, 2]
    b = dst @ Td[:2, :2].T + Td[:2, 2]
    n = len(a)
    A = np.zeros((2 * n, 9))
    A[0::2, 0:2] = a
    A[0::2, 2] = 1
    A[0::2, 6:8] = -b[:, :1] * a
    A[0::2, 8] = -b[:, 0]
    A[1::2, 3:5] = a
    A[1::2, 5] = 1
    A[1::2, 6:8] = -b[:, 1:] * a
    A[1::2, 8] = -b[:, 1]
    # full_matrices keeps the null vector when only 4 points give 8 rows
    _, s, Vt = np.linalg.svd(A, full_matrices=True)
    if s[7] <= 1e-10 * s[0]:
        raise DegenerateConfiguration("homography design matrix has rank < 8 (collinear or repeated points)")
    Hn = Vt[-1].reshape(3, 3)
    H = np.linalg.solve(Td, Hn @ Ts)
    H /= np.linalg.norm(H)
    if H[2, 2] < 0:
        H = -H
    return H


def apply_homography(H, points):
    p = np.asarray(points, dtype=float)
    h = p @ H[:, :2].T + H[:, 2]
    return h[:, :2] / h[:, 2:]
