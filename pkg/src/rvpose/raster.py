"""Deterministic z-buffered software rasterizer and cloud extraction.

Per-pixel sampling is at pixel centers (u + 0.5, v + 0.5) with the top-left
fill rule for shared edges.  Depth and color use perspective-correct
barycentric interpolation; vertex colors are blended in linear light after
sRGB decode and re-encoded per pixel.  Triangles with any vertex at or
behind the near plane (z <= 1e-4 m) are discarded outright.
"""

from __future__ import annotations

import numba
import numpy as np

from . import parallel
from .colorspace import srgb_decode, srgb_encode, srgb_to_lab
from .errors import DimensionMismatch, EmptyMesh, UnknownObjectId
from .geometry import CameraIntrinsics, RigidTransform, unproject_pixel
from .model import (
    DepthImage,
    LabeledCloud,
    SceneFrame,
    TriangleMesh,
    save_depth_pgm,
    save_ppm,
)

NEAR_PLANE = 1e-4

from dataclasses import dataclass


@dataclass(frozen=True)
class RenderedView:
    """Single-object render: depth, sRGB color, validity, object id."""

    depth: DepthImage
    color: np.ndarray  # (H, W, 3) sRGB, zero where invalid
    valid: np.ndarray  # (H, W) bool
    object_id: int = 0

    def __post_init__(self):
        c = np.ascontiguousarray(self.color, dtype=np.float64)
        m = np.ascontiguousarray(self.valid, dtype=bool)
        if c.shape[:2] != self.depth.values.shape or m.shape != self.depth.values.shape:
            raise DimensionMismatch("view buffers disagree on image size")
        c.setflags(write=False)
        m.setflags(write=False)
        object.__setattr__(self, "color", c)
        object.__setattr__(self, "valid", m)


@numba.njit(cache=True)
def _raster_kernel(verts, tris, colors_lin, fx, fy, cx, cy, width, height,
                   zbuf, cbuf, valid):
    for ti in range(tris.shape[0]):
        ia, ib, ic = tris[ti, 0], tris[ti, 1], tris[ti, 2]
        za, zb, zc = verts[ia, 2], verts[ib, 2], verts[ic, 2]
        if za <= NEAR_PLANE or zb <= NEAR_PLANE or zc <= NEAR_PLANE:
            continue
        u0 = fx * verts[ia, 0] / za + cx
        v0 = fy * verts[ia, 1] / za + cy
        u1 = fx * verts[ib, 0] / zb + cx
        v1 = fy * verts[ib, 1] / zb + cy
        u2 = fx * verts[ic, 0] / zc + cx
        v2 = fy * verts[ic, 1] / zc + cy
        z0, z1, z2 = za, zb, zc
        c0r, c0g, c0b = colors_lin[ia, 0], colors_lin[ia, 1], colors_lin[ia, 2]
        c1r, c1g, c1b = colors_lin[ib, 0], colors_lin[ib, 1], colors_lin[ib, 2]
        c2r, c2g, c2b = colors_lin[ic, 0], colors_lin[ic, 1], colors_lin[ic, 2]

        area2 = (u1 - u0) * (v2 - v0) - (v1 - v0) * (u2 - u0)
        if area2 == 0.0:
            continue
        if area2 < 0.0:  # normalize winding so the interior has E >= 0
            u1, u2 = u2, u1
            v1, v2 = v2, v1
            z1, z2 = z2, z1
            c1r, c2r = c2r, c1r
            c1g, c2g = c2g, c1g
            c1b, c2b = c2b, c1b
            area2 = -area2

        umin = min(u0, min(u1, u2))
        umax = max(u0, max(u1, u2))
        vmin = min(v0, min(v1, v2))
        vmax = max(v0, max(v1, v2))
        px_lo = max(0, int(np.ceil(umin - 0.5)))
        px_hi = min(width - 1, int(np.floor(umax - 0.5)))
        py_lo = max(0, int(np.ceil(vmin - 0.5)))
        py_hi = min(height - 1, int(np.floor(vmax - 0.5)))
        if px_lo > px_hi or py_lo > py_hi:
            continue

        # directed edges p0->p1, p1->p2, p2->p0
        e0u, e0v = u1 - u0, v1 - v0
        e1u, e1v = u2 - u1, v2 - v1
        e2u, e2v = u0 - u2, v0 - v2
        # top-left rule: boundary pixel owned by edges going up, or
        # horizontal edges going right (interior below)
        tl0 = e0v < 0.0 or (e0v == 0.0 and e0u > 0.0)
        tl1 = e1v < 0.0 or (e1v == 0.0 and e1u > 0.0)
        tl2 = e2v < 0.0 or (e2v == 0.0 and e2u > 0.0)

        iz0 = 1.0 / z0
        iz1 = 1.0 / z1
        iz2 = 1.0 / z2
        inv_area = 1.0 / area2
        for py in range(py_lo, py_hi + 1):
            sy = py + 0.5
            for px in range(px_lo, px_hi + 1):
                sx = px + 0.5
                w0 = e1u * (sy - v1) - e1v * (sx - u1)  # weight of vertex 0
                w1 = e2u * (sy - v2) - e2v * (sx - u2)
                w2 = e0u * (sy - v0) - e0v * (sx - u0)
                if w0 < 0.0 or w1 < 0.0 or w2 < 0.0:
                    continue
                if (w0 == 0.0 and not tl1) or (w1 == 0.0 and not tl2) or \
                   (w2 == 0.0 and not tl0):
                    continue
                b0 = w0 * inv_area
                b1 = w1 * inv_area
                b2 = w2 * inv_area
                inv_z = b0 * iz0 + b1 * iz1 + b2 * iz2
                depth = 1.0 / inv_z
                if depth < zbuf[py, px]:
                    zbuf[py, px] = depth
                    s0 = b0 * iz0 * depth
                    s1 = b1 * iz1 * depth
                    s2 = b2 * iz2 * depth
                    cbuf[py, px, 0] = s0 * c0r + s1 * c1r + s2 * c2r
                    cbuf[py, px, 1] = s0 * c0g + s1 * c1g + s2 * c2g
                    cbuf[py, px, 2] = s0 * c0b + s1 * c1b + s2 * c2b
                    valid[py, px] = True


def rasterize(mesh: TriangleMesh, model_to_camera: RigidTransform,
              k: CameraIntrinsics, object_id: int = 0) -> RenderedView:
    """Render one mesh into a depth + color view; nearest surface wins."""
    if mesh.num_triangles == 0:
        raise EmptyMesh("mesh has no triangles")
    verts = model_to_camera.apply(mesh.vertices)
    colors_lin = srgb_decode(mesh.vertex_colors)
    h, w = k.height, k.width
    zbuf = np.full((h, w), np.inf)
    cbuf = np.zeros((h, w, 3))
    valid = np.zeros((h, w), dtype=np.bool_)
    _raster_kernel(
        np.ascontiguousarray(verts),
        mesh.triangles,
        np.ascontiguousarray(colors_lin),
        float(k.fx), float(k.fy), float(k.cx), float(k.cy), w, h,
        zbuf, cbuf, valid,
    )
    color = np.zeros((h, w, 3))
    color[valid] = srgb_encode(cbuf[valid])
    depth = DepthImage(np.where(valid, zbuf, 0.0), valid)
    return RenderedView(depth, color, valid, object_id)


def mark_occluders(view: RenderedView, frame: SceneFrame,
                   delta_occ: float = 0.0075) -> RenderedView:
    """Invalidate rendered pixels hidden behind foreign observed surfaces.

    A pixel is dropped when the observed depth there is valid, closer than
    the rendered depth by more than delta_occ, and the observed label is a
    different object.  Same-label observed pixels are kept.
    """
    if frame.depth.values.shape != view.depth.values.shape:
        raise DimensionMismatch("frame and view sizes differ")
    occluded = (
        view.valid
        & frame.depth.valid
        & (frame.depth.values < view.depth.values - delta_occ)
        & (frame.labels != view.object_id)
    )
    if not occluded.any():
        return view
    keep = view.valid & ~occluded
    color = np.where(keep[..., None], view.color, 0.0)
    depth = DepthImage(np.where(keep, view.depth.values, 0.0), keep)
    return RenderedView(depth, color, keep, view.object_id)


def render_to_cloud(view: RenderedView, k: CameraIntrinsics,
                    stride: int = 1) -> LabeledCloud:
    """Unproject valid pixels on the stride grid; colors move to CIELAB."""
    return _grid_cloud(view.valid, view.depth.values, view.color, k, stride)


def frame_to_cloud(frame: SceneFrame, stride: int = 1) -> LabeledCloud:
    """Observed cloud from a frame, same sampling path as rendered clouds."""
    return _grid_cloud(frame.depth.valid, frame.depth.values, frame.color,
                       frame.intrinsics, stride)


def _grid_cloud(valid, depth, color, k, stride):
    if stride < 1:
        raise ValueError("stride must be >= 1")
    sub = valid[::stride, ::stride]
    vs, us = np.nonzero(sub)
    if vs.size == 0:
        return LabeledCloud.empty()
    u = us * stride
    v = vs * stride
    z = depth[v, u]
    pts = unproject_pixel(k, u + 0.5, v + 0.5, z)
    lab = srgb_to_lab(color[v, u])
    src = np.stack([u, v], axis=1).astype(np.int32)
    return LabeledCloud(pts, lab, src)


def cloud_labels(cloud: LabeledCloud, labels: np.ndarray) -> np.ndarray:
    """Per-point object label looked up from a label image."""
    if len(cloud) == 0:
        return np.zeros(0, dtype=np.int32)
    return labels[cloud.source_pixel[:, 1], cloud.source_pixel[:, 0]]


# ---------------------------------------------------------------------------
# Batch rendering

_RENDER_KEY = "raster.render_batch"

# Per-process scratch buffers for the fused batch path (one task at a time
# per process, so reuse is safe; the color buffer needs no clearing because
# only freshly validated pixels are ever read back).
_SCRATCH: dict = {}


def _scratch_buffers(h: int, w: int):
    key = (h, w)
    if key not in _SCRATCH:
        _SCRATCH[key] = (np.empty((h, w)), np.empty((h, w, 3)),
                         np.empty((h, w), dtype=np.bool_))
    return _SCRATCH[key]


def _render_one(task):
    """Fused rasterize -> occluder-mark -> stride cloud for one proposal.

    Identical arithmetic to the composed single-view calls (the batch
    contract is bitwise equality with that path) but without materializing
    full-size per-view images.
    """
    models, frame, k, stride, occluder_marking, delta_occ = parallel.get_payload(_RENDER_KEY)
    object_id, pose_m = task
    pose = RigidTransform.from_matrix3x4(pose_m)
    mesh = models[object_id].mesh
    if mesh.num_triangles == 0:
        raise EmptyMesh("mesh has no triangles")
    h, w = k.height, k.width
    zbuf, cbuf, valid = _scratch_buffers(h, w)
    zbuf.fill(np.inf)
    valid.fill(False)
    _raster_kernel(
        np.ascontiguousarray(pose.apply(mesh.vertices)),
        mesh.triangles,
        np.ascontiguousarray(srgb_decode(mesh.vertex_colors)),
        float(k.fx), float(k.fy), float(k.cx), float(k.cy), w, h,
        zbuf, cbuf, valid,
    )
    if occluder_marking:
        occluded = (
            valid
            & frame.depth.valid
            & (frame.depth.values < zbuf - delta_occ)
            & (frame.labels != object_id)
        )
        valid &= ~occluded
    sub = valid[::stride, ::stride]
    vs, us = np.nonzero(sub)
    if vs.size == 0:
        return LabeledCloud.empty()
    u = us * stride
    v = vs * stride
    pts = unproject_pixel(k, u + 0.5, v + 0.5, zbuf[v, u])
    lab = srgb_to_lab(srgb_encode(cbuf[v, u]))
    src = np.stack([u, v], axis=1).astype(np.int32)
    return LabeledCloud(pts, lab, src)


def render_batch(models: dict, proposals, frame: SceneFrame,
                 k: CameraIntrinsics, stride: int = 1,
                 occluder_marking: bool = True, delta_occ: float = 0.0075,
                 workers: int = 1, chunksize: int | None = None) -> list:
    """Render -> (optionally) occluder-mark -> cloud for each proposal.

    `proposals` is a sequence of (object_id, [model_to_camera, ...]); the
    flat output order matches the flat input order for any worker count.
    """
    tasks = []
    for object_id, poses in proposals:
        if object_id not in models:
            raise UnknownObjectId(f"no model registered for id {object_id}")
        for pose in poses:
            tasks.append((object_id, pose.matrix3x4()))
    parallel.set_payload(
        _RENDER_KEY, (models, frame, k, stride, occluder_marking, delta_occ)
    )
    try:
        return parallel.parallel_map(_render_one, tasks, workers, chunksize)
    finally:
        parallel.clear_payload(_RENDER_KEY)


def save_view_debug(view: RenderedView, path_prefix: str) -> None:
    """Dump color as P6 PPM and depth as 16-bit P5 PGM (millimeters)."""
    save_ppm(f"{path_prefix}.ppm", view.color)
    save_depth_pgm(f"{path_prefix}.pgm", view.depth)
