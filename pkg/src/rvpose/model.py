"""Scene data model: meshes, object models, images, frames, clouds, file I/O.

File formats: ASCII PLY for meshes (x y z red green blue vertices, index
faces, colors stored 0-255); binary PPM (P6) for color images; binary PGM
(P5) for depth (16-bit big-endian millimeters, 0 = invalid) and labels
(8-bit).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DatasetError, DimensionMismatch
from .geometry import CameraIntrinsics, RigidTransform


@dataclass(frozen=True)
class TriangleMesh:
    """Vertex-colored triangle mesh in the object frame (meters)."""

    vertices: np.ndarray       # (V, 3) float64
    vertex_colors: np.ndarray  # (V, 3) float64 sRGB in [0, 1]
    triangles: np.ndarray      # (T, 3) int32

    def __post_init__(self):
        v = np.ascontiguousarray(self.vertices, dtype=np.float64)
        c = np.ascontiguousarray(self.vertex_colors, dtype=np.float64)
        t = np.ascontiguousarray(self.triangles, dtype=np.int32)
        if v.ndim != 2 or v.shape[1] != 3:
            raise ValueError("vertices must be (V, 3)")
        if c.shape != v.shape:
            raise ValueError("vertex_colors must match vertices")
        if t.size and (t.ndim != 2 or t.shape[1] != 3):
            raise ValueError("triangles must be (T, 3)")
        t = t.reshape(-1, 3)
        if t.size:
            if v.shape[0] < 3:
                raise ValueError("need at least 3 vertices")
            if t.min() < 0 or t.max() >= v.shape[0]:
                raise ValueError("triangle index out of range")
        for arr in (v, c, t):
            arr.setflags(write=False)
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "vertex_colors", c)
        object.__setattr__(self, "triangles", t)

    @property
    def num_triangles(self) -> int:
        return int(self.triangles.shape[0])


@dataclass(frozen=True)
class InscribedCylinder:
    """Conservative object volume about the object-frame z axis."""

    radius: float
    z_min: float
    z_max: float

    def __post_init__(self):
        if not (self.radius > 0 and self.z_max > self.z_min):
            raise ValueError("degenerate cylinder")

    def contains(self, points_obj) -> np.ndarray:
        """Closed containment test for object-frame points (N, 3)."""
        p = np.asarray(points_obj, dtype=np.float64)
        r2 = p[..., 0] ** 2 + p[..., 1] ** 2
        z = p[..., 2]
        return (r2 <= self.radius**2) & (z >= self.z_min) & (z <= self.z_max)


@dataclass(frozen=True)
class ObjectModel:
    """Registered object: id (positive; 0 is background), mesh, volume."""

    object_id: int
    mesh: TriangleMesh
    inscribed_cylinder: InscribedCylinder
    yaw_symmetric: bool = False

    def __post_init__(self):
        if self.object_id <= 0:
            raise ValueError("object ids must be positive (0 = background)")


@dataclass(frozen=True)
class ObjectState:
    object_id: int
    pose: RigidTransform


@dataclass(frozen=True)
class DepthImage:
    """Per-pixel depth in meters with a validity mask."""

    values: np.ndarray  # (H, W) float64
    valid: np.ndarray   # (H, W) bool

    def __post_init__(self):
        v = np.ascontiguousarray(self.values, dtype=np.float64)
        m = np.ascontiguousarray(self.valid, dtype=bool)
        if v.ndim != 2 or m.shape != v.shape:
            raise ValueError("depth values and mask must be (H, W)")
        if m.any():
            d = v[m]
            if d.min() <= 0.0 or d.max() >= 100.0:
                raise ValueError("valid depths must lie in (0, 100) m")
        v.setflags(write=False)
        m.setflags(write=False)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "valid", m)

    @property
    def height(self) -> int:
        return int(self.values.shape[0])

    @property
    def width(self) -> int:
        return int(self.values.shape[1])


@dataclass(frozen=True)
class Detection:
    """2D detection: the full (amodal) box may extend past image bounds."""

    object_id: int
    full_bbox: tuple  # (u_min, v_min, u_max, v_max) in pixels
    mask: np.ndarray  # (H, W) bool, pixels labeled with this object

    def __post_init__(self):
        u0, v0, u1, v1 = (float(x) for x in self.full_bbox)
        if not (u0 < u1 and v0 < v1):
            raise ValueError("degenerate bbox")
        object.__setattr__(self, "full_bbox", (u0, v0, u1, v1))
        m = np.ascontiguousarray(self.mask, dtype=bool)
        m.setflags(write=False)
        object.__setattr__(self, "mask", m)

    @property
    def fully_occluded(self) -> bool:
        return not bool(self.mask.any())

    @property
    def bbox_center(self) -> tuple:
        u0, v0, u1, v1 = self.full_bbox
        return (0.5 * (u0 + u1), 0.5 * (v0 + v1))


@dataclass(frozen=True)
class SceneFrame:
    """Observed RGBD frame with labels, detections, and optional ground truth."""

    color: np.ndarray   # (H, W, 3) float64 sRGB in [0, 1]
    depth: DepthImage
    labels: np.ndarray  # (H, W) int32, 0 = background/table
    detections: list
    intrinsics: CameraIntrinsics
    ground_truth: list | None = None

    def __post_init__(self):
        c = np.ascontiguousarray(self.color, dtype=np.float64)
        l = np.ascontiguousarray(self.labels, dtype=np.int32)
        h, w = self.depth.values.shape
        if c.shape != (h, w, 3):
            raise DimensionMismatch("color image does not match depth")
        if l.shape != (h, w):
            raise DimensionMismatch("label image does not match depth")
        c.setflags(write=False)
        l.setflags(write=False)
        object.__setattr__(self, "color", c)
        object.__setattr__(self, "labels", l)

    @property
    def height(self) -> int:
        return self.depth.height

    @property
    def width(self) -> int:
        return self.depth.width


@dataclass(frozen=True)
class LabeledCloud:
    """Camera-frame points with CIELAB colors and source pixel indices."""

    points: np.ndarray        # (N, 3) float64, camera frame
    lab_colors: np.ndarray    # (N, 3) float64 CIELAB
    source_pixel: np.ndarray  # (N, 2) int32, (u, v)

    def __post_init__(self):
        p = np.ascontiguousarray(self.points, dtype=np.float64).reshape(-1, 3)
        c = np.ascontiguousarray(self.lab_colors, dtype=np.float64).reshape(-1, 3)
        s = np.ascontiguousarray(self.source_pixel, dtype=np.int32).reshape(-1, 2)
        if not (p.shape[0] == c.shape[0] == s.shape[0]):
            raise ValueError("cloud arrays must have equal length")
        for arr in (p, c, s):
            arr.setflags(write=False)
        object.__setattr__(self, "points", p)
        object.__setattr__(self, "lab_colors", c)
        object.__setattr__(self, "source_pixel", s)

    def __len__(self) -> int:
        return int(self.points.shape[0])

    @staticmethod
    def empty() -> "LabeledCloud":
        return LabeledCloud(
            np.zeros((0, 3)), np.zeros((0, 3)), np.zeros((0, 2), dtype=np.int32)
        )

    def subset(self, index) -> "LabeledCloud":
        return LabeledCloud(
            self.points[index], self.lab_colors[index], self.source_pixel[index]
        )


# ---------------------------------------------------------------------------
# PLY meshes

def save_ply(path, mesh: TriangleMesh) -> None:
    v = mesh.vertices
    c = np.clip(np.rint(mesh.vertex_colors * 255.0), 0, 255).astype(int)
    t = mesh.triangles
    lines = [
        "ply",
        "format ascii 1.0",
        f"element vertex {v.shape[0]}",
        "property float x",
        "property float y",
        "property float z",
        "property uchar red",
        "property uchar green",
        "property uchar blue",
        f"element face {t.shape[0]}",
        "property list uchar int vertex_indices",
        "end_header",
    ]
    for (x, y, z), (r, g, b) in zip(v, c):
        lines.append(f"{x:.9g} {y:.9g} {z:.9g} {r} {g} {b}")
    for tri in t:
        lines.append(f"3 {tri[0]} {tri[1]} {tri[2]}")
    Path(path).write_text("\n".join(lines) + "\n")


def load_ply(path) -> TriangleMesh:
    text = Path(path).read_text().splitlines()
    if not text or text[0].strip() != "ply":
        raise DatasetError(f"{path}: not a PLY file")
    n_vert = n_face = 0
    i = 1
    while i < len(text):
        tok = text[i].split()
        if tok[:2] == ["element", "vertex"]:
            n_vert = int(tok[2])
        elif tok[:2] == ["element", "face"]:
            n_face = int(tok[2])
        elif tok and tok[0] == "end_header":
            i += 1
            break
        i += 1
    body = text[i:]
    if len(body) < n_vert + n_face:
        raise DatasetError(f"{path}: truncated PLY body")
    verts = np.empty((n_vert, 3))
    cols = np.empty((n_vert, 3))
    for j in range(n_vert):
        tok = body[j].split()
        verts[j] = [float(x) for x in tok[:3]]
        cols[j] = [int(x) / 255.0 for x in tok[3:6]]
    tris = np.empty((n_face, 3), dtype=np.int32)
    for j in range(n_face):
        tok = body[n_vert + j].split()
        if tok[0] != "3":
            raise DatasetError(f"{path}: only triangle faces supported")
        tris[j] = [int(x) for x in tok[1:4]]
    return TriangleMesh(verts, cols, tris)


# ---------------------------------------------------------------------------
# PPM / PGM images

def save_ppm(path, image) -> None:
    """Binary P6 from an (H, W, 3) float image in [0, 1]."""
    img = np.asarray(image, dtype=np.float64)
    data = np.clip(np.rint(img * 255.0), 0, 255).astype(np.uint8)
    h, w = data.shape[:2]
    with open(path, "wb") as f:
        f.write(f"P6\n{w} {h}\n255\n".encode())
        f.write(data.tobytes())


def load_ppm(path) -> np.ndarray:
    with open(path, "rb") as f:
        magic, (w, h), maxval, data = _read_pnm(f)
    if magic != b"P6" or maxval != 255:
        raise DatasetError(f"{path}: expected 8-bit P6")
    return np.frombuffer(data, dtype=np.uint8).reshape(h, w, 3) / 255.0


def save_depth_pgm(path, depth: DepthImage) -> None:
    """16-bit big-endian P5, values in millimeters, 0 = invalid."""
    mm = np.where(depth.valid, np.rint(depth.values * 1000.0), 0.0)
    mm = np.clip(mm, 0, 65535).astype(">u2")
    h, w = mm.shape
    with open(path, "wb") as f:
        f.write(f"P5\n{w} {h}\n65535\n".encode())
        f.write(mm.tobytes())


def load_depth_pgm(path) -> DepthImage:
    with open(path, "rb") as f:
        magic, (w, h), maxval, data = _read_pnm(f)
    if magic != b"P5" or maxval != 65535:
        raise DatasetError(f"{path}: expected 16-bit P5")
    mm = np.frombuffer(data, dtype=">u2").reshape(h, w).astype(np.float64)
    valid = mm > 0
    return DepthImage(np.where(valid, mm / 1000.0, 0.0), valid)


def save_labels_pgm(path, labels) -> None:
    data = np.asarray(labels).astype(np.uint8)
    h, w = data.shape
    with open(path, "wb") as f:
        f.write(f"P5\n{w} {h}\n255\n".encode())
        f.write(data.tobytes())


def load_labels_pgm(path) -> np.ndarray:
    with open(path, "rb") as f:
        magic, (w, h), maxval, data = _read_pnm(f)
    if magic != b"P5" or maxval != 255:
        raise DatasetError(f"{path}: expected 8-bit P5")
    return np.frombuffer(data, dtype=np.uint8).reshape(h, w).astype(np.int32)


def _read_pnm(f):
    """Parse a PNM header and return (magic, (w, h), maxval, raster bytes)."""
    magic = f.read(2)
    fields = []
    while len(fields) < 3:
        line = f.readline()
        if not line:
            raise DatasetError("truncated PNM header")
        stripped = line.split(b"#")[0]
        fields.extend(int(tok) for tok in stripped.split())
    w, h, maxval = fields[:3]
    return magic, (w, h), maxval, f.read()
