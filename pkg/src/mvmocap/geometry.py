"""Pinhole cameras, rigid transforms and rotation helpers.

Conventions used throughout the package:

* world frame is right-handed, origin at the centre of the rig floor, ``z`` up;
  lengths are centimetres;
* a camera's pose maps world points into its own frame (``X_c = R X_w + t``);
  the camera looks down its ``+z`` axis;
* pixel origin is the top-left corner, ``u`` to the right and ``v`` down.

No lens distortion is modelled.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInput, PointBehindCamera

MIN_DEPTH = 1e-9
ROTATION_TOL = 1e-9


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


def _finite(a, name):
    if not np.all(np.isfinite(a)):
        raise InvalidInput(f"{name} must be finite")


# ---------------------------------------------------------------------------
# rotation helpers (vectorised over leading axes)
# ---------------------------------------------------------------------------

def skew(v):
    v = np.asarray(v, dtype=float)
    out = np.zeros(v.shape[:-1] + (3, 3))
    out[..., 0, 1] = -v[..., 2]
    out[..., 0, 2] = v[..., 1]
    out[..., 1, 0] = v[..., 2]
    out[..., 1, 2] = -v[..., 0]
    out[..., 2, 0] = -v[..., 1]
    out[..., 2, 1] = v[..., 0]
    return out


def rotvec_to_matrix(w):
    """Rodrigues' formula; accepts ``(..., 3)`` and returns ``(..., 3, 3)``."""
    w = np.asarray(w, dtype=float)
    theta = np.linalg.norm(w, axis=-1)[..., None, None]
    K = skew(w)
    K2 = K @ K
    small = theta < 1e-8
    safe = np.where(small, 1.0, theta)
    a = np.where(small, 1.0 - theta**2 / 6.0, np.sin(safe) / safe)
    b = np.where(small, 0.5 - theta**2 / 24.0, (1.0 - np.cos(safe)) / safe**2)
    return np.eye(3) + a * K + b * K2


def matrix_to_rotvec(R):
    return quaternion_to_rotvec(matrix_to_quaternion(R))


def quaternion_to_rotvec(q):
    q = np.asarray(q, dtype=float)
    q = q * np.where(q[..., :1] < 0, -1.0, 1.0)
    vec = q[..., 1:]
    s = np.linalg.norm(vec, axis=-1)
    angle = 2.0 * np.arctan2(s, q[..., 0])
    small = s < 1e-12
    scale = np.where(small, 2.0 / np.where(small, q[..., 0], 1.0), angle / np.where(small, 1.0, s))
    return vec * scale[..., None]


def quaternion_to_matrix(q):
    """Unit quaternion ``(w, x, y, z)`` to rotation matrix (input is renormalised)."""
    q = np.asarray(q, dtype=float)
    q = q / np.linalg.norm(q, axis=-1, keepdims=True)
    w, x, y, z = q[..., 0], q[..., 1], q[..., 2], q[..., 3]
    R = np.empty(q.shape[:-1] + (3, 3))
    R[..., 0, 0] = 1 - 2 * (y * y + z * z)
    R[..., 0, 1] = 2 * (x * y - w * z)
    R[..., 0, 2] = 2 * (x * z + w * y)
    R[..., 1, 0] = 2 * (x * y + w * z)
    R[..., 1, 1] = 1 - 2 * (x * x + z * z)
    R[..., 1, 2] = 2 * (y * z - w * x)
    R[..., 2, 0] = 2 * (x * z - w * y)
    R[..., 2, 1] = 2 * (y * z + w * x)
    R[..., 2, 2] = 1 - 2 * (x * x + y * y)
    return R


def matrix_to_quaternion(R):
    """Rotation matrix to unit quaternion ``(w, x, y, z)`` with ``w >= 0``.

    Uses the eigenvector of the symmetric 4x4 Bar-Itzhack matrix, which is
    stable for every rotation angle and also projects slightly non-orthogonal
    input onto the closest quaternion.
    """
    R = np.asarray(R, dtype=float)
    m = R.reshape(-1, 3, 3)
    xx, xy, xz = m[:, 0, 0], m[:, 0, 1], m[:, 0, 2]
    yx, yy, yz = m[:, 1, 0], m[:, 1, 1], m[:, 1, 2]
    zx, zy, zz = m[:, 2, 0], m[:, 2, 1], m[:, 2, 2]
    K = np.empty((len(m), 4, 4))
    K[:, 0] = np.stack([xx - yy - zz, yx + xy, zx + xz, yz - zy], axis=-1)
    K[:, 1] = np.stack([yx + xy, yy - xx - zz, zy + yz, zx - xz], axis=-1)
    K[:, 2] = np.stack([zx + xz, zy + yz, zz - xx - yy, xy - yx], axis=-1)
    K[:, 3] = np.stack([yz - zy, zx - xz, xy - yx, xx + yy + zz], axis=-1)
    _, vecs = np.linalg.eigh(K / 3.0)
    v = vecs[:, :, -1]
    q = np.stack([v[:, 3], -v[:, 0], -v[:, 1], -v[:, 2]], axis=-1)
    q *= np.where(q[:, :1] < 0, -1.0, 1.0)
    q /= np.linalg.norm(q, axis=1, keepdims=True)
    return q.reshape(R.shape[:-2] + (4,))


def nearest_rotation(M):
    """Closest proper rotation to ``M`` in the Frobenius sense (SVD projection)."""
    U, _, Vt = np.linalg.svd(np.asarray(M, dtype=float))
    D = np.eye(3)
    D[2, 2] = np.sign(np.linalg.det(U @ Vt))
    return U @ D @ Vt


def rotation_angle(R):
    """Rotation angle in radians, robust near 0 and pi."""
    q = matrix_to_quaternion(R)
    return 2.0 * np.arctan2(np.linalg.norm(q[..., 1:], axis=-1), np.abs(q[..., 0]))


def rot_x(angle):
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def rot_y(angle):
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def rot_z(angle):
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def quaternion_mean(quaternions, weights=None):
    """Sign-invariant average of unit quaternions (Markley's eigenvector method)."""
    Q = np.asarray(quaternions, dtype=float).reshape(-1, 4)
    w = np.ones(len(Q)) if weights is None else np.asarray(weights, dtype=float)
    M = (Q * w[:, None]).T @ Q
    vals, vecs = np.linalg.eigh(M)
    q = vecs[:, np.argmax(vals)]
    return q if q[0] >= 0 else -q


# ---------------------------------------------------------------------------
# value types
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class RigidPose:
    """``x -> R x + t``.

    ``quaternion`` is kept alongside the matrix when the pose was built from
    one, so that serialisation writes back exactly the value that was read.
    """

    rotation: np.ndarray
    translation: np.ndarray
    _quaternion: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        R = _frozen(self.rotation)
        t = _frozen(self.translation).reshape(3)
        if R.shape != (3, 3):
            raise InvalidInput("rotation must be 3x3")
        _finite(R, "rotation")
        _finite(t, "translation")
        if np.abs(R.T @ R - np.eye(3)).max() > ROTATION_TOL or abs(np.linalg.det(R) - 1.0) > ROTATION_TOL:
            raise InvalidInput("rotation must be orthonormal with determinant +1")
        object.__setattr__(self, "rotation", R)
        object.__setattr__(self, "translation", t)
        if self._quaternion is not None:
            object.__setattr__(self, "_quaternion", _frozen(self._quaternion))

    @classmethod
    def identity(cls):
        return cls(np.eye(3), np.zeros(3))

    @classmethod
    def from_quaternion(cls, q, translation):
        q = np.asarray(q, dtype=float)
        return cls(quaternion_to_matrix(q), translation, q)

    @classmethod
    def from_rotvec(cls, rotvec, translation):
        return cls(rotvec_to_matrix(rotvec), translation)

    @classmethod
    def from_matrix(cls, T):
        T = np.asarray(T, dtype=float)
        return cls(T[:3, :3], T[:3, 3])

    @property
    def quaternion(self):
        if self._quaternion is not None:
            return self._quaternion
        return matrix_to_quaternion(self.rotation)

    @property
    def matrix(self):
        T = np.eye(4)
        T[:3, :3] = self.rotation
        T[:3, 3] = self.translation
        return T

    def apply(self, points):
        """Transform ``(3,)`` or ``(N, 3)`` points."""
        p = np.asarray(points, dtype=float)
        return p @ self.rotation.T + self.translation

    def inverse(self):
        Rt = self.rotation.T
        return RigidPose(Rt, -Rt @ self.translation)

    def __matmul__(self, other):
        return compose(self, other)

    def __eq__(self, other):
        if not isinstance(other, RigidPose):
            return NotImplemented
        return np.array_equal(self.rotation, other.rotation) and np.array_equal(self.translation, other.translation)

    __hash__ = None


def compose(a: RigidPose, b: RigidPose) -> RigidPose:
    """``a ∘ b``: apply ``b`` first, then ``a``."""
    R = a.rotation @ b.rotation
    # re-project to keep long composition chains inside tolerance
    if np.abs(R.T @ R - np.eye(3)).max() > 1e-12:
        R = nearest_rotation(R)
    return RigidPose(R, a.rotation @ b.translation + a.translation)


def invert(a: RigidPose) -> RigidPose:
    return a.inverse()


@dataclass(frozen=True)
class Intrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    skew: float = 0.0

    def __post_init__(self):
        for name in ("fx", "fy", "cx", "cy", "skew"):
            v = float(getattr(self, name))
            if not np.isfinite(v):
                raise InvalidInput(f"{name} must be finite")
            object.__setattr__(self, name, v)
        if self.fx <= 0 or self.fy <= 0:
            raise InvalidInput("focal lengths must be positive")

    @classmethod
    def from_matrix(cls, K):
        K = np.asarray(K, dtype=float)
        K = K / K[2, 2]
        return cls(K[0, 0], K[1, 1], K[0, 2], K[1, 2], K[0, 1])

    @property
    def matrix(self):
        return np.array([[self.fx, self.skew, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]])

    @property
    def inverse_matrix(self):
        return np.linalg.inv(self.matrix)

    def as_array(self):
        return np.array([self.fx, self.fy, self.cx, self.cy, self.skew])


@dataclass(frozen=True)
class Ray:
    origin: np.ndarray
    direction: np.ndarray

    def __post_init__(self):
        o = _frozen(self.origin).reshape(3)
        d = np.array(self.direction, dtype=float).reshape(3)
        _finite(o, "origin")
        _finite(d, "direction")
        n = np.linalg.norm(d)
        if n == 0:
            raise InvalidInput("ray direction must be non-zero")
        if abs(n - 1.0) > 1e-12:
            d = d / n
        object.__setattr__(self, "origin", o)
        object.__setattr__(self, "direction", _frozen(d))

    def at(self, t):
        t = np.asarray(t, dtype=float)
        return self.origin + t[..., None] * self.direction


@dataclass(frozen=True, eq=False)
class Camera:
    intrinsics: Intrinsics
    pose: RigidPose
    image_size: tuple[int, int] = (2448, 2048)

    def __post_init__(self):
        w, h = (int(v) for v in self.image_size)
        if w <= 0 or h <= 0:
            raise InvalidInput("image_size must be positive")
        object.__setattr__(self, "image_size", (w, h))

    @property
    def projection_matrix(self):
        return self.intrinsics.matrix @ np.hstack([self.pose.rotation, self.pose.translation[:, None]])

    @property
    def center(self):
        """Optical centre in world coordinates."""
        return -self.pose.rotation.T @ self.pose.translation

    @property
    def optical_axis(self):
        return self.pose.rotation[2].copy()

    def to_camera(self, points):
        return self.pose.apply(points)

    def project(self, points):
        """World points ``(3,)`` or ``(N, 3)`` to pixels; raises if any is not in front."""
        pc = self.to_camera(points)
        z = pc[..., 2]
        if np.any(z <= MIN_DEPTH):
            raise PointBehindCamera("point is on or behind the camera's principal plane")
        k = self.intrinsics
        x = pc[..., 0] / z
        y = pc[..., 1] / z
        return np.stack([k.fx * x + k.skew * y + k.cx, k.fy * y + k.cy], axis=-1)

    def in_image(self, pixels):
        w, h = self.image_size
        p = np.asarray(pixels)
        return (p[..., 0] >= 0) & (p[..., 0] <= w) & (p[..., 1] >= 0) & (p[..., 1] <= h)

    def pixel_directions(self, pixels):
        """Unit world-frame directions of the rays through ``(N, 2)`` pixels."""
        p = np.asarray(pixels, dtype=float)
        h = np.concatenate([p, np.ones(p.shape[:-1] + (1,))], axis=-1)
        dc = h @ self.intrinsics.inverse_matrix.T
        dw = dc @ self.pose.rotation
        return dw / np.linalg.norm(dw, axis=-1, keepdims=True)

    def backproject(self, pixel):
        return Ray(self.center, self.pixel_directions(np.asarray(pixel, dtype=float).reshape(2)))

    def with_pose(self, pose):
        return Camera(self.intrinsics, pose, self.image_size)

    def transformed(self, world_from_new: RigidPose):
        """Same physical camera expressed in a new world frame.

        ``world_from_new`` maps new-frame coordinates into the current world frame.
        """
        return self.with_pose(compose(self.pose, world_from_new))


def project(camera: Camera, point) -> np.ndarray:
    return camera.project(point)


def backproject(camera: Camera, pixel) -> Ray:
    return camera.backproject(pixel)


def look_at(eye, target, up=(0.0, 0.0, 1.0)) -> RigidPose:
    """World-to-camera pose for a camera at ``eye`` looking at ``target``.

    The image ``v`` axis points along ``-up`` so that the world's vertical
    shows up as image "down".
    """
    eye = np.asarray(eye, dtype=float)
    z = np.asarray(target, dtype=float) - eye
    z /= np.linalg.norm(z)
    x = np.cross(-np.asarray(up, dtype=float), z)
    nx = np.linalg.norm(x)
    if nx < 1e-12:
        raise InvalidInput("viewing direction is parallel to the up vector")
    x /= nx
    y = np.cross(z, x)
    R = np.stack([x, y, z])
    return RigidPose(R, -R @ eye)
