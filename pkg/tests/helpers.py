"""Shared test oracles, independent of the library's production paths."""

import numpy as np


def ray_triangle_depth(origin, direction, v0, v1, v2):
    """Moller-Trumbore intersection; returns depth t or None.

    The ray is origin + t * direction; with camera rays built as
    ((u-cx)/fx, (v-cy)/fy, 1) the returned t equals the pinhole depth z.
    """
    eps = 1e-14
    e1 = v1 - v0
    e2 = v2 - v0
    p = np.cross(direction, e2)
    det = float(e1 @ p)
    if abs(det) < eps:
        return None
    inv = 1.0 / det
    s = origin - v0
    u = float(s @ p) * inv
    if u < 0.0 or u > 1.0:
        return None
    q = np.cross(s, e1)
    v = float(direction @ q) * inv
    if v < 0.0 or u + v > 1.0:
        return None
    t = float(e2 @ q) * inv
    return t if t > 0.0 else None


def brute_force_depth_image(verts_cam, tris, k):
    """Per-pixel nearest ray-triangle depth over the whole image."""
    depth = np.full((k.height, k.width), np.inf)
    origin = np.zeros(3)
    for py in range(k.height):
        for px in range(k.width):
            d = np.array([(px + 0.5 - k.cx) / k.fx,
                          (py + 0.5 - k.cy) / k.fy, 1.0])
            for tri in tris:
                t = ray_triangle_depth(origin, d, verts_cam[tri[0]],
                                       verts_cam[tri[1]], verts_cam[tri[2]])
                if t is not None and t < depth[py, px]:
                    depth[py, px] = t
    return depth


def random_rigid_transform(rng, max_angle=np.pi, max_shift=1.0):
    from rvpose.geometry import RigidTransform, rotation_about_axis

    axis = rng.normal(size=3)
    while np.linalg.norm(axis) < 1e-6:
        axis = rng.normal(size=3)
    angle = rng.uniform(-max_angle, max_angle)
    shift = rng.normal(size=3)
    shift = shift / np.linalg.norm(shift) * rng.uniform(0, max_shift)
    return RigidTransform(rotation_about_axis(axis, angle), shift)


def surface_box_cloud(rng, n=500, half=0.1):
    """Random points on the surface of a box: non-degenerate geometry."""
    pts = rng.uniform(-half, half, (n, 3))
    face = rng.integers(0, 3, n)
    for i in range(n):
        pts[i, face[i]] = half * np.sign(pts[i, face[i]]) or half
    return pts
