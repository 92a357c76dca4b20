"""Pose hypothesis generation.

6-DoF proposals are the Cartesian product of rotation hypotheses (Fibonacci
viewpoints x in-plane angles) and translation hypotheses (depth samples
along the back-projection ray of the full-bbox center).  3-DoF proposals
are a regular (x, y, yaw) grid lifted to a fixed height.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import NoValidDepth
from .geometry import (
    CameraIntrinsics,
    Pose3Dof,
    RigidTransform,
    lift_pose3dof,
    rot_x,
    rot_z,
    rotation_about_axis,
    unproject_pixel,
)
from .model import DepthImage, Detection

GOLDEN_ANGLE = math.pi * (3.0 - math.sqrt(5.0))


def fibonacci_viewpoints(m: int) -> np.ndarray:
    """M near-equidistant unit directions from the Fibonacci lattice."""
    if m < 1:
        raise ValueError("need at least one viewpoint")
    i = np.arange(m, dtype=np.float64)
    z = 1.0 - 2.0 * (i + 0.5) / m
    az = i * GOLDEN_ANGLE
    r = np.sqrt(np.maximum(0.0, 1.0 - z * z))
    return np.stack([r * np.cos(az), r * np.sin(az), z], axis=1)


def _viewpoint_rotation(v: np.ndarray) -> np.ndarray:
    """Shortest-arc rotation taking +Z to v; v = -Z maps to 180 deg about +X."""
    c = v[2]
    if c <= -1.0 + 1e-12:
        return rot_x(math.pi)
    axis = np.array([-v[1], v[0], 0.0])  # cross(+Z, v)
    s = np.linalg.norm(axis)
    if s < 1e-15:
        return np.eye(3)
    return rotation_about_axis(axis, math.atan2(s, c))


@dataclass(frozen=True)
class RotationProposalSet:
    viewpoint_count: int
    inplane_count: int
    rotations: np.ndarray   # (M*N, 3, 3)
    provenance: np.ndarray  # (M*N, 2) int32: (viewpoint i, in-plane k)

    def __len__(self) -> int:
        return int(self.rotations.shape[0])


def rotation_proposals(m: int, n_inplane: int) -> RotationProposalSet:
    """All combinations of M viewpoints with N in-plane angles."""
    if m < 1 or n_inplane < 1:
        raise ValueError("counts must be >= 1")
    views = fibonacci_viewpoints(m)
    thetas = 2.0 * math.pi * np.arange(n_inplane) / n_inplane
    rotations = np.empty((m * n_inplane, 3, 3))
    provenance = np.empty((m * n_inplane, 2), dtype=np.int32)
    idx = 0
    for i in range(m):
        base = _viewpoint_rotation(views[i])
        for k in range(n_inplane):
            rotations[idx] = base @ rot_z(thetas[k])
            provenance[idx] = (i, k)
            idx += 1
    return RotationProposalSet(m, n_inplane, rotations, provenance)


@dataclass(frozen=True)
class TranslationProposalSet:
    anchor: tuple           # (u_c, v_c) pixels
    z_min: float
    z_max: float
    z_step: float
    z_values: np.ndarray    # (T,)
    translations: np.ndarray  # (T, 3) on the back-projection ray

    def __len__(self) -> int:
        return int(self.translations.shape[0])


def _inclusive_range(lo: float, hi: float, step: float) -> np.ndarray:
    """lo..hi sampled at step, always including both endpoints."""
    if hi < lo:
        raise ValueError("empty range")
    n = int(math.floor((hi - lo) / step + 1e-9))
    vals = lo + np.arange(n + 1) * step
    if vals[-1] < hi - 1e-9:
        vals = np.append(vals, hi)
    return vals


def translation_proposals(det: Detection, depth: DepthImage,
                          labels: np.ndarray, k: CameraIntrinsics,
                          z_step: float = 0.02) -> TranslationProposalSet:
    """Back-project the full-bbox center at depths spanning the object's
    observed depth range."""
    mask = (labels == det.object_id) & depth.valid
    if not mask.any():
        raise NoValidDepth(f"object {det.object_id} has no valid depth pixel")
    d = depth.values[mask]
    z_min = float(d.min())
    z_max = float(d.max())
    u_c, v_c = det.bbox_center
    zs = _inclusive_range(z_min, z_max, z_step)
    translations = unproject_pixel(k, np.full_like(zs, u_c),
                                   np.full_like(zs, v_c), zs)
    return TranslationProposalSet((u_c, v_c), z_min, z_max, z_step,
                                  zs, translations)


@dataclass(frozen=True)
class PoseProposalSet:
    """Flat pose hypotheses with provenance indices.

    6-DoF: provenance = (rotation index, translation index).
    3-DoF grid: provenance = (cell index, yaw index).
    """

    object_id: int
    rotations: np.ndarray    # (P, 3, 3)
    translations: np.ndarray  # (P, 3)
    provenance: np.ndarray   # (P, 2) int32

    def __len__(self) -> int:
        return int(self.rotations.shape[0])

    def pose(self, i: int) -> RigidTransform:
        return RigidTransform(self.rotations[i].copy(),
                              self.translations[i].copy())

    def transforms(self) -> list:
        return [self.pose(i) for i in range(len(self))]

    def to_json_records(self) -> list:
        out = []
        for i in range(len(self)):
            m = np.hstack([self.rotations[i], self.translations[i][:, None]])
            out.append({
                "object_id": self.object_id,
                "provenance": [int(self.provenance[i, 0]),
                               int(self.provenance[i, 1])],
                "pose": [round(float(x), 12) for x in m.reshape(-1)],
            })
        return out


def pose_proposals_6dof(object_id: int, rot: RotationProposalSet,
                        trans: TranslationProposalSet) -> PoseProposalSet:
    """Full Cartesian product of rotation and translation hypotheses."""
    nr, nt = len(rot), len(trans)
    if nr == 0 or nt == 0:
        raise ValueError("empty proposal factors")
    rotations = np.repeat(rot.rotations, nt, axis=0)
    translations = np.tile(trans.translations, (nr, 1))
    prov = np.empty((nr * nt, 2), dtype=np.int32)
    prov[:, 0] = np.repeat(np.arange(nr, dtype=np.int32), nt)
    prov[:, 1] = np.tile(np.arange(nt, dtype=np.int32), nr)
    return PoseProposalSet(object_id, rotations, translations, prov)


def grid_proposals_3dof(workspace: tuple, dt: float, dyaw: float,
                        fixed_z: float, object_id: int = 0,
                        yaw_symmetric: bool = False) -> PoseProposalSet:
    """Regular (x, y, yaw) grid over the workspace, inclusive endpoints.

    Yaw covers [0, 2*pi) at dyaw spacing; a yaw-symmetric model collapses
    the yaw axis to the single value 0.
    """
    x_min, x_max, y_min, y_max = (float(b) for b in workspace)
    if x_max < x_min or y_max < y_min:
        raise ValueError("empty workspace")
    xs = _inclusive_range(x_min, x_max, dt)
    ys = _inclusive_range(y_min, y_max, dt)
    if yaw_symmetric:
        yaws = np.array([0.0])
    else:
        n_yaw = max(1, int(math.floor(2.0 * math.pi / dyaw + 1e-9)))
        yaws = dyaw * np.arange(n_yaw)
        yaws = yaws[yaws < 2.0 * math.pi - 1e-12]
        if yaws.size == 0:
            yaws = np.array([0.0])
    n = xs.size * ys.size * yaws.size
    rotations = np.empty((n, 3, 3))
    translations = np.empty((n, 3))
    prov = np.empty((n, 2), dtype=np.int32)
    idx = 0
    for ci, (x, y) in enumerate((x, y) for x in xs for y in ys):
        for yi, yaw in enumerate(yaws):
            t = lift_pose3dof(Pose3Dof(x, y, yaw), fixed_z)
            rotations[idx] = t.rotation
            translations[idx] = t.translation
            prov[idx] = (ci, yi)
            idx += 1
    return PoseProposalSet(object_id, rotations, translations, prov)
