"""Rigid transforms, planar poses, and the pinhole camera model.

Conventions: camera frame is +Z forward, +X right, +Y down; world frame is
+Z up.  Rotations are stored as 3x3 matrices.  Points are float64 arrays of
shape (3,) or (N, 3); every function broadcasts over leading dimensions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidDepth, NonPositiveDepth

TWO_PI = 2.0 * math.pi

# Orthonormality slack for stored rotations (max |R^T R - I|).
ROTATION_TOL = 1e-9


def _as_matrix(r) -> np.ndarray:
    r = np.asarray(r, dtype=np.float64)
    if r.shape != (3, 3):
        raise ValueError(f"rotation must be 3x3, got {r.shape}")
    return r


def _as_vec3(v) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    if v.shape != (3,):
        raise ValueError(f"expected 3-vector, got shape {v.shape}")
    return v


def rot_x(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def rot_y(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def rot_z(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def rotation_about_axis(axis, angle: float) -> np.ndarray:
    """Rodrigues rotation about a (not necessarily unit) axis."""
    axis = _as_vec3(axis)
    n = np.linalg.norm(axis)
    if n == 0.0:
        raise ValueError("zero axis")
    k = axis / n
    kx = skew(k)
    return np.eye(3) + math.sin(angle) * kx + (1.0 - math.cos(angle)) * (kx @ kx)


def skew(v) -> np.ndarray:
    v = _as_vec3(v)
    return np.array(
        [[0.0, -v[2], v[1]], [v[2], 0.0, -v[0]], [-v[1], v[0], 0.0]]
    )


def so3_exp(omega) -> np.ndarray:
    """Exponential map of a rotation vector (axis * angle)."""
    omega = _as_vec3(omega)
    theta = np.linalg.norm(omega)
    w = skew(omega)
    if theta < 1e-10:
        return np.eye(3) + w + 0.5 * (w @ w)
    a = math.sin(theta) / theta
    b = (1.0 - math.cos(theta)) / (theta * theta)
    return np.eye(3) + a * w + b * (w @ w)


def orthonormalize(r) -> np.ndarray:
    """Nearest rotation matrix (SVD projection with det +1)."""
    u, _, vt = np.linalg.svd(_as_matrix(r))
    out = u @ vt
    if np.linalg.det(out) < 0.0:
        u[:, -1] = -u[:, -1]
        out = u @ vt
    return out


def rotation_angle(r) -> float:
    """Geodesic angle of a rotation matrix, in radians."""
    tr = np.clip((np.trace(_as_matrix(r)) - 1.0) / 2.0, -1.0, 1.0)
    return float(np.arccos(tr))


def canonical_yaw(yaw: float) -> float:
    """Wrap an angle into [0, 2*pi)."""
    y = math.fmod(yaw, TWO_PI)
    if y < 0.0:
        y += TWO_PI
    if y >= TWO_PI:  # fmod can round up to 2*pi
        y -= TWO_PI
    return y


@dataclass(frozen=True)
class RigidTransform:
    """SE(3) element: x -> rotation @ x + translation."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        r = _as_matrix(self.rotation)
        t = _as_vec3(self.translation)
        if not (np.isfinite(r).all() and np.isfinite(t).all()):
            raise ValueError("non-finite transform")
        if np.abs(r.T @ r - np.eye(3)).max() > ROTATION_TOL * 10:
            raise ValueError("rotation is not orthonormal")
        r.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "translation", t)

    @staticmethod
    def identity() -> "RigidTransform":
        return RigidTransform(np.eye(3), np.zeros(3))

    def apply(self, points) -> np.ndarray:
        """Transform one point (3,) or a stack (N, 3)."""
        p = np.asarray(points, dtype=np.float64)
        return p @ self.rotation.T + self.translation

    def compose(self, other: "RigidTransform") -> "RigidTransform":
        """self after other: (self * other)(x) = self(other(x))."""
        return RigidTransform(
            self.rotation @ other.rotation,
            self.rotation @ other.translation + self.translation,
        )

    def inverse(self) -> "RigidTransform":
        rt = self.rotation.T
        return RigidTransform(rt, -rt @ self.translation)

    def matrix3x4(self) -> np.ndarray:
        return np.hstack([self.rotation, self.translation[:, None]])

    @staticmethod
    def from_matrix3x4(m) -> "RigidTransform":
        m = np.asarray(m, dtype=np.float64)
        if m.shape != (3, 4):
            raise ValueError(f"expected 3x4 matrix, got {m.shape}")
        return RigidTransform(m[:, :3].copy(), m[:, 3].copy())


def rigid_compose(a: RigidTransform, b: RigidTransform) -> RigidTransform:
    """Composition applying b first, then a."""
    return a.compose(b)


def rigid_apply(t: RigidTransform, p) -> np.ndarray:
    return t.apply(p)


@dataclass(frozen=True)
class Pose3Dof:
    """Planar pose (x, y, yaw); yaw canonicalized to [0, 2*pi)."""

    x: float
    y: float
    yaw: float

    def __post_init__(self):
        object.__setattr__(self, "x", float(self.x))
        object.__setattr__(self, "y", float(self.y))
        object.__setattr__(self, "yaw", canonical_yaw(float(self.yaw)))


def lift_pose3dof(p: Pose3Dof, fixed_z: float) -> RigidTransform:
    """Embed a planar pose at a fixed height: Rz(yaw) + (x, y, fixed_z)."""
    return RigidTransform(rot_z(p.yaw), np.array([p.x, p.y, float(fixed_z)]))


@dataclass(frozen=True)
class CameraIntrinsics:
    """Pinhole camera with an extrinsic camera-to-world pose."""

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int
    camera_pose: RigidTransform = field(default_factory=RigidTransform.identity)

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError("focal lengths must be positive")
        if not (0 < self.cx < self.width and 0 < self.cy < self.height):
            raise ValueError("principal point must be inside the image")

    def world_to_camera(self) -> RigidTransform:
        return self.camera_pose.inverse()


def project_point(k: CameraIntrinsics, p_cam):
    """Project camera-frame point(s) to (u, v, depth).

    Accepts (3,) or (N, 3); raises NonPositiveDepth if any z <= 0.
    """
    p = np.asarray(p_cam, dtype=np.float64)
    z = p[..., 2]
    if np.any(z <= 0.0):
        raise NonPositiveDepth("point behind the camera")
    u = k.fx * p[..., 0] / z + k.cx
    v = k.fy * p[..., 1] / z + k.cy
    return u, v, z


def unproject_pixel(k: CameraIntrinsics, u, v, depth):
    """Back-project continuous pixel coordinates at the given depth(s)."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    z = np.asarray(depth, dtype=np.float64)
    if np.any(z <= 0.0) or not np.all(np.isfinite(z)):
        raise InvalidDepth("depth must be positive and finite")
    x = (u - k.cx) * z / k.fx
    y = (v - k.cy) * z / k.fy
    return np.stack([x, y, z], axis=-1)
