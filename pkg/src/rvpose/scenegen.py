"""Synthetic RGBD tabletop scenes with exact ground truth.

Objects are parametric primitives (cylinder, box, lathed bottle) colored by
z-fraction bands.  Rounded primitives are tessellated so the polygon wall
circumscribes the nominal radius; the analytic inscribed cylinder then truly
fits inside the mesh.  The table is a labeled (id 0) two-tone plane, so
occluder logic sees realistic background depth.  Scenes are rendered with
the library's own rasterizer; a fixed seed reproduces a scene bitwise.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DatasetError, InvalidSpec
from .geometry import CameraIntrinsics, Pose3Dof, RigidTransform, lift_pose3dof, rot_x, rot_z
from .model import (
    DepthImage,
    Detection,
    InscribedCylinder,
    LabeledCloud,
    ObjectModel,
    ObjectState,
    SceneFrame,
    TriangleMesh,
    load_depth_pgm,
    load_labels_pgm,
    load_ply,
    load_ppm,
    save_depth_pgm,
    save_labels_pgm,
    save_ply,
    save_ppm,
)
from .raster import rasterize
from .geometry import project_point

TABLE_LABEL = 0


@dataclass(frozen=True)
class PrimitiveSpec:
    """Parametric shape plus color bands painted over the height.

    kind/dimensions:
      cylinder: (radius, height)
      box:      (wx, wy, wz)
      bottle:   (body_radius, body_height, shoulder_height,
                 neck_radius, neck_height)
    color_bands: ((f_lo, f_hi, (r, g, b)), ...) covering [0, 1] without
    overlap; f is the height fraction of a vertex.
    """

    kind: str
    dimensions: tuple
    color_bands: tuple

    def __post_init__(self):
        dims = tuple(float(d) for d in self.dimensions)
        if self.kind not in ("cylinder", "box", "bottle"):
            raise InvalidSpec(f"unknown primitive kind {self.kind!r}")
        want = {"cylinder": 2, "box": 3, "bottle": 5}[self.kind]
        if len(dims) != want or min(dims) <= 0:
            raise InvalidSpec(f"{self.kind} needs {want} positive dimensions")
        bands = tuple(
            (float(lo), float(hi), tuple(float(c) for c in rgb))
            for lo, hi, rgb in self.color_bands
        )
        if not bands:
            raise InvalidSpec("need at least one color band")
        spans = sorted(bands)
        if abs(spans[0][0]) > 1e-9 or abs(spans[-1][1] - 1.0) > 1e-9:
            raise InvalidSpec("bands must cover [0, 1]")
        for (_, hi0, _), (lo1, _, _) in zip(spans, spans[1:]):
            if abs(hi0 - lo1) > 1e-9:
                raise InvalidSpec("bands must tile [0, 1] without overlap")
        for _, _, rgb in bands:
            if len(rgb) != 3 or min(rgb) < 0 or max(rgb) > 1:
                raise InvalidSpec("band colors must be sRGB in [0, 1]")
        object.__setattr__(self, "dimensions", dims)
        object.__setattr__(self, "color_bands", bands)

    @property
    def height(self) -> float:
        if self.kind == "cylinder":
            return self.dimensions[1]
        if self.kind == "box":
            return self.dimensions[2]
        return self.dimensions[1] + self.dimensions[2] + self.dimensions[4]

    def band_color(self, f: float) -> tuple:
        for lo, hi, rgb in self.color_bands:
            if lo - 1e-12 <= f < hi or (hi >= 1.0 - 1e-12 and f >= lo):
                return rgb
        return self.color_bands[-1][2]


@dataclass(frozen=True)
class NoiseModel:
    depth_sigma: float = 0.0      # meters
    dropout_prob: float = 0.0
    color_jitter_sigma: float = 0.0  # sRGB units

    def __post_init__(self):
        if min(self.depth_sigma, self.dropout_prob, self.color_jitter_sigma) < 0:
            raise InvalidSpec("noise parameters must be >= 0")
        if self.dropout_prob > 1:
            raise InvalidSpec("dropout_prob must be <= 1")

    @property
    def is_zero(self) -> bool:
        return (self.depth_sigma == 0 and self.dropout_prob == 0
                and self.color_jitter_sigma == 0)


@dataclass(frozen=True)
class SceneSpec:
    """Declarative scene: placements are (object_id, world pose)."""

    placements: tuple             # ((object_id, RigidTransform), ...)
    table_extent: tuple           # (x_half, y_half) meters about the origin
    intrinsics: CameraIntrinsics
    noise: NoiseModel = field(default_factory=NoiseModel)
    rng_seed: int = 0

    def __post_init__(self):
        placements = tuple(self.placements)
        ids = [oid for oid, _ in placements]
        if len(set(ids)) != len(ids):
            raise InvalidSpec("object ids must be unique within a scene")
        hx, hy = (float(e) for e in self.table_extent)
        for oid, pose in placements:
            x, y = pose.translation[0], pose.translation[1]
            if abs(x) > hx or abs(y) > hy:
                raise InvalidSpec(f"object {oid} placed off the table")
        object.__setattr__(self, "placements", placements)
        object.__setattr__(self, "table_extent", (hx, hy))


# ---------------------------------------------------------------------------
# Primitive meshes

def make_primitive_mesh(spec: PrimitiveSpec, tessellation=32):
    """Build a watertight banded mesh and its analytic inscribed cylinder.

    Returns (mesh, inscribed_cylinder, yaw_symmetric).  `tessellation` is
    the radial segment count, or (radial, height_segments) to subdivide the
    wall so color bands resolve.
    """
    if isinstance(tessellation, int):
        radial, height_segs = tessellation, 1
    else:
        radial, height_segs = (int(t) for t in tessellation)
    if radial < 3 or height_segs < 1:
        raise InvalidSpec("tessellation too coarse")
    if spec.kind == "cylinder":
        radius, height = spec.dimensions
        profile = [(0.0, radius), (float(height), radius)]
        mesh = _lathe(profile, spec, radial, height_segs)
        return mesh, InscribedCylinder(radius, 0.0, height), True
    if spec.kind == "bottle":
        rb, hb, hs, rn, hn = spec.dimensions
        if rn > rb:
            raise InvalidSpec("neck must not be wider than the body")
        profile = [(0.0, rb), (hb, rb), (hb + hs, rn), (hb + hs + hn, rn)]
        mesh = _lathe(profile, spec, radial, height_segs)
        return mesh, InscribedCylinder(rb, 0.0, hb), True
    # box
    wx, wy, wz = spec.dimensions
    mesh = _box_mesh(wx, wy, wz, spec)
    return mesh, InscribedCylinder(min(wx, wy) / 2.0, 0.0, wz), False


def build_model(object_id: int, spec: PrimitiveSpec,
                tessellation=32) -> ObjectModel:
    mesh, cyl, symmetric = make_primitive_mesh(spec, tessellation)
    return ObjectModel(object_id, mesh, cyl, symmetric)


def _lathe(profile, spec: PrimitiveSpec, radial: int, height_segs: int):
    """Revolve a (z, radius) profile about +Z with end caps.

    Ring radii are divided by cos(pi/radial) so the faceted wall
    circumscribes the nominal radius at every station.
    """
    total_h = profile[-1][0]
    circumscribe = 1.0 / math.cos(math.pi / radial)
    # refine each profile strip into height_segs slices
    stations = []
    for (z0, r0), (z1, r1) in zip(profile, profile[1:]):
        for s in range(height_segs):
            f = s / height_segs
            stations.append((z0 + f * (z1 - z0), r0 + f * (r1 - r0)))
    stations.append(profile[-1])

    ang = 2.0 * math.pi * np.arange(radial) / radial
    ca, sa = np.cos(ang), np.sin(ang)
    verts, colors = [], []
    for z, r in stations:
        rr = r * circumscribe
        ring = np.stack([rr * ca, rr * sa, np.full(radial, z)], axis=1)
        verts.append(ring)
        colors.append(np.tile(spec.band_color(z / total_h), (radial, 1)))
    n_rings = len(stations)
    bottom_c = len(verts) * radial
    verts = np.vstack(verts + [np.array([[0.0, 0.0, 0.0]]),
                               np.array([[0.0, 0.0, total_h]])])
    colors = np.vstack(colors + [np.array([spec.band_color(0.0)]),
                                 np.array([spec.band_color(1.0)])])
    top_c = bottom_c + 1

    tris = []
    for ring in range(n_rings - 1):
        a = ring * radial
        b = (ring + 1) * radial
        for i in range(radial):
            j = (i + 1) % radial
            tris.append((a + i, a + j, b + i))
            tris.append((a + j, b + j, b + i))
    last = (n_rings - 1) * radial
    for i in range(radial):
        j = (i + 1) % radial
        tris.append((bottom_c, j, i))          # bottom cap, facing -z
        tris.append((top_c, last + i, last + j))  # top cap, facing +z
    return TriangleMesh(verts, colors, np.array(tris, dtype=np.int32))


def _box_mesh(wx, wy, wz, spec: PrimitiveSpec):
    hx, hy = wx / 2.0, wy / 2.0
    corners = np.array([
        [-hx, -hy, 0.0], [hx, -hy, 0.0], [hx, hy, 0.0], [-hx, hy, 0.0],
        [-hx, -hy, wz], [hx, -hy, wz], [hx, hy, wz], [-hx, hy, wz],
    ])
    colors = np.array([spec.band_color(v[2] / wz) for v in corners])
    quads = [
        (0, 3, 2, 1),  # bottom
        (4, 5, 6, 7),  # top
        (0, 1, 5, 4), (1, 2, 6, 5), (2, 3, 7, 6), (3, 0, 4, 7),  # sides
    ]
    tris = []
    for a, b, c, d in quads:
        tris.append((a, b, c))
        tris.append((a, c, d))
    return TriangleMesh(corners, colors, np.array(tris, dtype=np.int32))


# Rendered ground half-extent: large enough that every tabletop pose in a
# desk-scale frustum projects onto valid observed depth (no off-scene "free"
# poses), independent of the placement extent.
GROUND_HALF_EXTENT = 2.0


def _table_mesh(x_half: float, y_half: float, cells: int = 28) -> TriangleMesh:
    """Two-tone checkered plane at z = 0 so the background has texture."""
    tone = (np.array([0.45, 0.33, 0.22]), np.array([0.55, 0.42, 0.28]))
    verts, colors, tris = [], [], []
    xs = np.linspace(-x_half, x_half, cells + 1)
    ys = np.linspace(-y_half, y_half, cells + 1)
    for i in range(cells):
        for j in range(cells):
            base = len(verts)
            c = tone[(i + j) % 2]
            for x, y in ((xs[i], ys[j]), (xs[i + 1], ys[j]),
                         (xs[i + 1], ys[j + 1]), (xs[i], ys[j + 1])):
                verts.append((x, y, 0.0))
                colors.append(c)
            tris.append((base, base + 1, base + 2))
            tris.append((base, base + 2, base + 3))
    return TriangleMesh(np.array(verts), np.array(colors),
                        np.array(tris, dtype=np.int32))


# ---------------------------------------------------------------------------
# Cameras and scene synthesis

def make_camera(width: int = 480, height: int = 360, fov_deg: float = 60.0,
                distance: float = 1.3, pitch_deg: float = 30.0,
                target=(0.0, 0.0, 0.0)) -> CameraIntrinsics:
    """Camera on the -X side looking at `target`, pitched down.

    The default distance keeps a +-0.32 m workspace (plus object height)
    fully inside the frustum, so no tabletop pose renders part-off-frame;
    the default resolution keeps the stride-2 point spacing at arm's length
    below the sensor noise resolution (0.0075 m), which batched GICP needs
    to converge to sub-millimeter poses.
    """
    fx = fy = (width / 2.0) / math.tan(math.radians(fov_deg) / 2.0)
    target = np.asarray(target, dtype=np.float64)
    pitch = math.radians(pitch_deg)
    eye = target + np.array([-distance * math.cos(pitch), 0.0,
                             distance * math.sin(pitch)])
    forward = target - eye
    forward = forward / np.linalg.norm(forward)
    right = np.cross(forward, np.array([0.0, 0.0, 1.0]))
    right = right / np.linalg.norm(right)
    down = np.cross(forward, right)
    rot = np.stack([right, down, forward], axis=1)  # camera axes in world
    pose = RigidTransform(rot, eye)
    return CameraIntrinsics(fx, fy, width / 2.0, height / 2.0,
                            width, height, pose)


def generate_scene(spec: SceneSpec, models: dict) -> SceneFrame:
    """Render table + objects into one frame with labels and ground truth.

    Detections carry the visible-pixel mask and the full (amodal) bounding
    box obtained by projecting the whole model at its true pose.
    """
    k = spec.intrinsics
    world_to_cam = k.world_to_camera()
    h, w = k.height, k.width

    entries = [(TABLE_LABEL,
                _table_mesh(GROUND_HALF_EXTENT, GROUND_HALF_EXTENT),
                RigidTransform.identity())]
    for oid, pose in spec.placements:
        if oid not in models:
            raise InvalidSpec(f"placement references unknown model {oid}")
        entries.append((oid, models[oid].mesh, pose))

    zbuf = np.full((h, w), np.inf)
    color = np.zeros((h, w, 3))
    labels = np.zeros((h, w), dtype=np.int32)
    valid = np.zeros((h, w), dtype=bool)
    for oid, mesh, pose in entries:
        view = rasterize(mesh, world_to_cam.compose(pose), k, oid)
        closer = view.valid & (view.depth.values < zbuf)
        zbuf[closer] = view.depth.values[closer]
        color[closer] = view.color[closer]
        labels[closer] = oid
        valid |= closer

    depth = DepthImage(np.where(valid, zbuf, 0.0), valid)
    detections = []
    ground_truth = []
    for oid, pose in spec.placements:
        verts_cam = world_to_cam.compose(pose).apply(models[oid].mesh.vertices)
        u, v, _ = project_point(k, verts_cam)
        bbox = (float(u.min()), float(v.min()), float(u.max()), float(v.max()))
        detections.append(Detection(oid, bbox, labels == oid))
        ground_truth.append(ObjectState(oid, pose))

    frame = SceneFrame(color, depth, labels, detections, k, ground_truth)
    if not spec.noise.is_zero:
        frame = apply_noise(frame, spec.noise, spec.rng_seed)
    return frame


def apply_noise(frame: SceneFrame, noise: NoiseModel, seed: int) -> SceneFrame:
    """Gaussian depth noise, Bernoulli dropout, clamped color jitter.

    Labels, detections, and ground truth are untouched; an all-zero model
    returns the frame unchanged.
    """
    if noise.is_zero:
        return frame
    rng = np.random.default_rng(seed)
    values = frame.depth.values.copy()
    valid = frame.depth.valid.copy()
    if noise.depth_sigma > 0:
        jitter = rng.normal(0.0, noise.depth_sigma, values.shape)
        values = np.where(valid, np.maximum(values + jitter, 1e-3), values)
    if noise.dropout_prob > 0:
        drop = rng.random(values.shape) < noise.dropout_prob
        valid = valid & ~drop
    values = np.where(valid, values, 0.0)
    color = frame.color
    if noise.color_jitter_sigma > 0:
        color = np.clip(
            color + rng.normal(0.0, noise.color_jitter_sigma, color.shape),
            0.0, 1.0,
        )
    return SceneFrame(color, DepthImage(values, valid), frame.labels,
                      frame.detections, frame.intrinsics, frame.ground_truth)


# ---------------------------------------------------------------------------
# Object suites and randomized placement

def default_object_suite() -> dict:
    """Six models: three can colors sharing one cylinder mesh and three
    bottle colors sharing one bottle mesh (same shape, different look)."""
    can = ("cylinder", (0.033, 0.12))
    bottle = ("bottle", (0.030, 0.10, 0.04, 0.012, 0.04))
    palettes = {
        "red_can": ((0.0, 0.15, (0.85, 0.82, 0.78)),
                    (0.15, 0.85, (0.82, 0.06, 0.09)),
                    (0.85, 1.0, (0.85, 0.82, 0.78))),
        "green_can": ((0.0, 0.15, (0.85, 0.82, 0.78)),
                      (0.15, 0.85, (0.05, 0.55, 0.12)),
                      (0.85, 1.0, (0.85, 0.82, 0.78))),
        "blue_can": ((0.0, 0.15, (0.85, 0.82, 0.78)),
                     (0.15, 0.85, (0.08, 0.22, 0.65)),
                     (0.85, 1.0, (0.85, 0.82, 0.78))),
        "orange_bottle": ((0.0, 0.6, (0.95, 0.45, 0.02)),
                          (0.6, 1.0, (0.98, 0.62, 0.12))),
        "teal_bottle": ((0.0, 0.6, (0.04, 0.45, 0.42)),
                        (0.6, 1.0, (0.10, 0.60, 0.55))),
        "violet_bottle": ((0.0, 0.6, (0.40, 0.10, 0.52)),
                          (0.6, 1.0, (0.55, 0.25, 0.65))),
    }
    models = {}
    for i, (name, bands) in enumerate(palettes.items(), start=1):
        kind, dims = can if "can" in name else bottle
        spec = PrimitiveSpec(kind, dims, bands)
        models[i] = build_model(i, spec, (32, 8))
    return models


def mixed_object_suite() -> dict:
    """One box plus three rounded objects, for 6-DoF proposal variety.

    Sized so the default 6-DoF proposal generation (42 viewpoints, 16
    in-plane angles, 0.02 m depth steps) lands near the nominal budget of
    a couple thousand proposals per scene.
    """
    specs = {
        1: PrimitiveSpec("box", (0.046, 0.036, 0.09),
                         ((0.0, 0.5, (0.75, 0.65, 0.1)),
                          (0.5, 1.0, (0.2, 0.2, 0.55)))),
        2: PrimitiveSpec("cylinder", (0.033, 0.12),
                         ((0.0, 1.0, (0.82, 0.06, 0.09)),)),
        3: PrimitiveSpec("cylinder", (0.038, 0.08),
                         ((0.0, 1.0, (0.05, 0.55, 0.12)),)),
        4: PrimitiveSpec("bottle", (0.030, 0.10, 0.04, 0.012, 0.04),
                         ((0.0, 1.0, (0.04, 0.45, 0.42)),)),
    }
    return {oid: build_model(oid, s, (24, 4)) for oid, s in specs.items()}


def random_scene_spec(models: dict, seed: int, table_extent=(0.42, 0.42),
                      placement_extent=(0.32, 0.32),
                      intrinsics: CameraIntrinsics | None = None,
                      noise: NoiseModel | None = None,
                      min_separation_scale: float = 1.15,
                      max_tries: int = 2000) -> SceneSpec:
    """Random non-interpenetrating tabletop placements of all models."""
    rng = np.random.default_rng(seed)
    if intrinsics is None:
        intrinsics = make_camera()
    if noise is None:
        noise = NoiseModel()
    placements = []
    placed = []
    radii = []
    for oid in sorted(models):
        r = models[oid].inscribed_cylinder.radius
        for _ in range(max_tries):
            x = rng.uniform(-placement_extent[0], placement_extent[0])
            y = rng.uniform(-placement_extent[1], placement_extent[1])
            yaw = rng.uniform(0.0, 2.0 * math.pi)
            if all(
                math.hypot(x - px, y - py) >= min_separation_scale * (r + pr)
                for (px, py), pr in zip(placed, radii)
            ):
                break
        else:
            raise InvalidSpec("could not place objects without overlap")
        placed.append((x, y))
        radii.append(r)
        placements.append((oid, lift_pose3dof(Pose3Dof(x, y, yaw), 0.0)))
    return SceneSpec(tuple(placements), table_extent, intrinsics, noise, seed)


def visibility_fraction(frame: SceneFrame, models: dict, object_id: int) -> float:
    """Visible-mask pixels over the solo-render silhouette of the object."""
    pose = next(s.pose for s in frame.ground_truth if s.object_id == object_id)
    k = frame.intrinsics
    solo = rasterize(models[object_id].mesh,
                     k.world_to_camera().compose(pose), k, object_id)
    silhouette = int(solo.valid.sum())
    if silhouette == 0:
        return 0.0
    visible = int((frame.labels == object_id).sum())
    return visible / silhouette


def occluded_scene_spec(models: dict, target_id: int, occluder_id: int,
                        seed: int, min_occlusion: float = 0.3,
                        intrinsics: CameraIntrinsics | None = None,
                        max_tries: int = 200) -> SceneSpec:
    """Scene where `occluder_id` view-occludes at least min_occlusion of
    `target_id`; remaining objects placed randomly behind."""
    if intrinsics is None:
        intrinsics = make_camera()
    rng = np.random.default_rng(seed)
    eye = intrinsics.camera_pose.translation
    others = [oid for oid in sorted(models)
              if oid not in (target_id, occluder_id)]
    for attempt in range(max_tries):
        tx = rng.uniform(-0.05, 0.20)
        ty = rng.uniform(-0.18, 0.18)
        toward_cam = np.array([eye[0] - tx, eye[1] - ty])
        toward_cam /= np.linalg.norm(toward_cam)
        gap = (models[target_id].inscribed_cylinder.radius
               + models[occluder_id].inscribed_cylinder.radius
               + rng.uniform(0.015, 0.05))
        lateral = rng.uniform(-0.02, 0.02)
        ox = tx + toward_cam[0] * gap - toward_cam[1] * lateral
        oy = ty + toward_cam[1] * gap + toward_cam[0] * lateral
        placements = [
            (target_id, lift_pose3dof(
                Pose3Dof(tx, ty, rng.uniform(0, 2 * math.pi)), 0.0)),
            (occluder_id, lift_pose3dof(
                Pose3Dof(ox, oy, rng.uniform(0, 2 * math.pi)), 0.0)),
        ]
        taken = [(tx, ty), (ox, oy)]
        ok = True
        for oid in others:
            r = models[oid].inscribed_cylinder.radius
            for _ in range(500):
                x = rng.uniform(-0.32, 0.32)
                y = rng.uniform(-0.32, 0.32)
                if all(math.hypot(x - px, y - py) >= 2.6 * r
                       for px, py in taken):
                    placements.append((oid, lift_pose3dof(
                        Pose3Dof(x, y, rng.uniform(0, 2 * math.pi)), 0.0)))
                    taken.append((x, y))
                    break
            else:
                ok = False
                break
        if not ok:
            continue
        spec = SceneSpec(tuple(placements), (0.42, 0.42), intrinsics,
                         NoiseModel(), seed)
        frame = generate_scene(spec, models)
        vis = visibility_fraction(frame, models, target_id)
        if vis <= 1.0 - min_occlusion and vis > 0.15:
            return spec
    raise InvalidSpec("could not force the requested occlusion")


# ---------------------------------------------------------------------------
# Scene directory I/O

def save_scene(scene_dir, frame: SceneFrame) -> None:
    d = Path(scene_dir)
    d.mkdir(parents=True, exist_ok=True)
    save_ppm(d / "color.ppm", frame.color)
    save_depth_pgm(d / "depth.pgm", frame.depth)
    save_labels_pgm(d / "labels.pgm", frame.labels)
    k = frame.intrinsics
    meta = {
        "intrinsics": {
            "fx": k.fx, "fy": k.fy, "cx": k.cx, "cy": k.cy,
            "width": k.width, "height": k.height,
            "camera_pose": _pose_list(k.camera_pose),
        },
        "detections": [
            {"object_id": det.object_id, "full_bbox": list(det.full_bbox)}
            for det in frame.detections
        ],
        "ground_truth": [
            {"object_id": s.object_id, "pose": _pose_list(s.pose)}
            for s in (frame.ground_truth or [])
        ],
    }
    (d / "scene.json").write_text(json.dumps(meta, indent=2, sort_keys=True))


def load_scene(scene_dir) -> SceneFrame:
    d = Path(scene_dir)
    try:
        meta = json.loads((d / "scene.json").read_text())
        color = load_ppm(d / "color.ppm")
        depth = load_depth_pgm(d / "depth.pgm")
        labels = load_labels_pgm(d / "labels.pgm")
    except FileNotFoundError as e:
        raise DatasetError(f"incomplete scene at {scene_dir}: {e}") from e
    ki = meta["intrinsics"]
    k = CameraIntrinsics(ki["fx"], ki["fy"], ki["cx"], ki["cy"],
                         ki["width"], ki["height"],
                         _pose_from_list(ki["camera_pose"]))
    detections = [
        Detection(rec["object_id"], tuple(rec["full_bbox"]),
                  labels == rec["object_id"])
        for rec in meta["detections"]
    ]
    ground_truth = [
        ObjectState(rec["object_id"], _pose_from_list(rec["pose"]))
        for rec in meta.get("ground_truth", [])
    ] or None
    return SceneFrame(color, depth, labels, detections, k, ground_truth)


def save_models(models_dir, models: dict) -> None:
    d = Path(models_dir)
    d.mkdir(parents=True, exist_ok=True)
    index = []
    for oid in sorted(models):
        m = models[oid]
        ply = f"object_{oid:03d}.ply"
        save_ply(d / ply, m.mesh)
        index.append({
            "object_id": oid,
            "mesh": ply,
            "inscribed_cylinder": [m.inscribed_cylinder.radius,
                                   m.inscribed_cylinder.z_min,
                                   m.inscribed_cylinder.z_max],
            "yaw_symmetric": m.yaw_symmetric,
        })
    (d / "models.json").write_text(json.dumps(index, indent=2, sort_keys=True))


def load_models(models_dir) -> dict:
    d = Path(models_dir)
    try:
        index = json.loads((d / "models.json").read_text())
    except FileNotFoundError as e:
        raise DatasetError(f"no models.json in {models_dir}") from e
    models = {}
    for rec in index:
        mesh = load_ply(d / rec["mesh"])
        r, z0, z1 = rec["inscribed_cylinder"]
        models[rec["object_id"]] = ObjectModel(
            rec["object_id"], mesh, InscribedCylinder(r, z0, z1),
            rec["yaw_symmetric"],
        )
    return models


def _pose_list(t: RigidTransform) -> list:
    return [float(x) for x in t.matrix3x4().reshape(-1)]


def _pose_from_list(vals) -> RigidTransform:
    return RigidTransform.from_matrix3x4(np.asarray(vals).reshape(3, 4))
