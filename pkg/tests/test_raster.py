import numpy as np
import pytest

from helpers import brute_force_depth_image

from rvpose.errors import DimensionMismatch, EmptyMesh, UnknownObjectId
from rvpose.geometry import CameraIntrinsics, RigidTransform, rot_z
from rvpose.model import DepthImage, LabeledCloud, SceneFrame, TriangleMesh
from rvpose.raster import (
    frame_to_cloud,
    mark_occluders,
    rasterize,
    render_batch,
    render_to_cloud,
    save_view_debug,
)


def _tri_mesh(verts, colors=None):
    verts = np.asarray(verts, dtype=float)
    if colors is None:
        colors = np.full_like(verts, 0.5)
    return TriangleMesh(verts, colors, np.arange(len(verts)).reshape(-1, 3))


def _flat_frame(k, depth_value=5.0, label=0):
    h, w = k.height, k.width
    depth = DepthImage(np.full((h, w), depth_value), np.ones((h, w), bool))
    return SceneFrame(np.zeros((h, w, 3)), depth,
                      np.full((h, w), label, dtype=np.int32), [], k)


def test_single_triangle_hits_principal_point(small_camera):
    mesh = _tri_mesh([[-0.1, -0.1, 1.0], [0.1, -0.1, 1.0], [0.0, 0.15, 1.0]])
    view = rasterize(mesh, RigidTransform.identity(), small_camera)
    cx, cy = int(small_camera.cx), int(small_camera.cy)
    assert view.valid[cy, cx]
    assert view.depth.values[cy, cx] == pytest.approx(1.0, abs=1e-12)


def test_empty_mesh_raises(small_camera):
    mesh = TriangleMesh(np.zeros((3, 3)), np.zeros((3, 3)),
                        np.zeros((0, 3), dtype=np.int32))
    with pytest.raises(EmptyMesh):
        rasterize(mesh, RigidTransform.identity(), small_camera)


def test_zbuffer_nearest_wins(small_camera):
    near = [[-0.1, -0.1, 1.0], [0.1, -0.1, 1.0], [0.0, 0.15, 1.0]]
    far = [[-0.1, -0.1, 2.0], [0.1, -0.1, 2.0], [0.0, 0.15, 2.0]]
    mesh = _tri_mesh(np.array(far + near))
    view = rasterize(mesh, RigidTransform.identity(), small_camera)
    covered = view.valid
    assert covered.any()
    # пixels covered by both take the near depth
    near_only = rasterize(_tri_mesh(near), RigidTransform.identity(),
                          small_camera)
    both = covered & near_only.valid
    assert np.allclose(view.depth.values[both], 1.0)


def test_behind_camera_discarded(small_camera):
    mesh = _tri_mesh([[-0.1, -0.1, -1.0], [0.1, -0.1, 1.0], [0.0, 0.15, 1.0]])
    view = rasterize(mesh, RigidTransform.identity(), small_camera)
    assert not view.valid.any()


def test_zbuffer_matches_ray_oracle(small_camera):
    """Production depths equal per-pixel brute-force ray-triangle depths."""
    rng = np.random.default_rng(7)
    for trial in range(4):
        verts = rng.uniform([-0.15, -0.15, 0.5], [0.15, 0.15, 2.0], (12, 3))
        mesh = TriangleMesh(verts, np.full((12, 3), 0.5),
                            np.arange(12).reshape(-1, 3).astype(np.int32))
        view = rasterize(mesh, RigidTransform.identity(), small_camera)
        oracle = brute_force_depth_image(verts, mesh.triangles, small_camera)
        oracle_valid = np.isfinite(oracle)
        assert np.array_equal(view.valid, oracle_valid)
        assert np.abs(view.depth.values[view.valid]
                      - oracle[oracle_valid]).max() < 1e-9


def test_shared_edge_no_double_fill(small_camera):
    """A quad split along its diagonal covers each pixel exactly once."""
    v = np.array([[-0.1, -0.1, 1.0], [0.1, -0.1, 1.0],
                  [0.1, 0.1, 1.0], [-0.1, 0.1, 1.0]])
    colors = np.array([[1, 0, 0], [1, 0, 0], [1, 0, 0], [1, 0, 0]], float)
    quad = TriangleMesh(v, colors, np.array([[0, 1, 2], [0, 2, 3]],
                                            dtype=np.int32))
    lower = TriangleMesh(v, colors, np.array([[0, 1, 2]], dtype=np.int32))
    upper = TriangleMesh(v, colors, np.array([[0, 2, 3]], dtype=np.int32))
    full = rasterize(quad, RigidTransform.identity(), small_camera)
    a = rasterize(lower, RigidTransform.identity(), small_camera)
    b = rasterize(upper, RigidTransform.identity(), small_camera)
    overlap = a.valid & b.valid
    assert not overlap.any()
    assert np.array_equal(full.valid, a.valid | b.valid)


def test_mark_occluders_cases(small_camera):
    mesh = _tri_mesh([[-0.1, -0.1, 1.0], [0.1, -0.1, 1.0], [0.0, 0.15, 1.0]])
    view = rasterize(mesh, RigidTransform.identity(), small_camera, object_id=3)

    farther = _flat_frame(small_camera, depth_value=5.0, label=7)
    assert np.array_equal(mark_occluders(view, farther).valid, view.valid)

    closer_foreign = _flat_frame(small_camera, depth_value=0.95, label=7)
    marked = mark_occluders(view, closer_foreign, delta_occ=0.0075)
    assert not marked.valid.any()

    closer_self = _flat_frame(small_camera, depth_value=0.95, label=3)
    kept = mark_occluders(view, closer_self, delta_occ=0.0075)
    assert np.array_equal(kept.valid, view.valid)


def test_mark_occluders_margin(small_camera):
    mesh = _tri_mesh([[-0.1, -0.1, 1.0], [0.1, -0.1, 1.0], [0.0, 0.15, 1.0]])
    view = rasterize(mesh, RigidTransform.identity(), small_camera, object_id=3)
    within_margin = _flat_frame(small_camera, depth_value=1.0 - 0.005, label=7)
    kept = mark_occluders(view, within_margin, delta_occ=0.0075)
    assert np.array_equal(kept.valid, view.valid)


def test_mark_occluders_idempotent_never_adds(small_camera, tabletop_frame):
    pass  # covered by the scene-level test below


def test_mark_occluders_dimension_mismatch(small_camera):
    mesh = _tri_mesh([[-0.1, -0.1, 1.0], [0.1, -0.1, 1.0], [0.0, 0.15, 1.0]])
    view = rasterize(mesh, RigidTransform.identity(), small_camera)
    other = CameraIntrinsics(100.0, 100.0, 16.0, 16.0, 32, 32)
    with pytest.raises(DimensionMismatch):
        mark_occluders(view, _flat_frame(other))


def test_render_to_cloud_counts(small_camera):
    mesh = _tri_mesh([[-0.1, -0.1, 1.0], [0.1, -0.1, 1.0], [0.0, 0.15, 1.0]])
    view = rasterize(mesh, RigidTransform.identity(), small_camera)
    total = int(view.valid.sum())
    c1 = render_to_cloud(view, small_camera, stride=1)
    assert len(c1) == total
    c2 = render_to_cloud(view, small_camera, stride=2)
    expected = int(view.valid[::2, ::2].sum())
    assert len(c2) == expected
    assert (c2.source_pixel % 2 == 0).all()


def test_render_to_cloud_empty(small_camera):
    h, w = small_camera.height, small_camera.width
    from rvpose.raster import RenderedView
    view = RenderedView(DepthImage(np.zeros((h, w)), np.zeros((h, w), bool)),
                        np.zeros((h, w, 3)), np.zeros((h, w), bool))
    assert len(render_to_cloud(view, small_camera, stride=1)) == 0


def test_cloud_points_lie_on_surface(small_camera):
    """Unprojected cloud points sit on the rendered triangle plane."""
    mesh = _tri_mesh([[-0.1, -0.1, 1.0], [0.1, -0.1, 1.0], [0.0, 0.15, 1.0]])
    view = rasterize(mesh, RigidTransform.identity(), small_camera)
    cloud = render_to_cloud(view, small_camera, stride=1)
    assert np.abs(cloud.points[:, 2] - 1.0).max() < 1e-9


def test_render_batch_order_and_flags(suite_models, tabletop_frame):
    k = tabletop_frame.intrinsics
    w2c = k.world_to_camera()
    poses = [w2c.compose(s.pose) for s in tabletop_frame.ground_truth[:2]]
    groups = [(1, [poses[0], poses[1]]), (2, [poses[0]])]

    batch = render_batch(suite_models, groups, tabletop_frame, k, stride=2,
                         occluder_marking=True)
    assert len(batch) == 3

    # batch output equals the sequential composed path, bitwise
    flat = [(1, poses[0]), (1, poses[1]), (2, poses[0])]
    for got, (oid, pose) in zip(batch, flat):
        view = rasterize(suite_models[oid].mesh, pose, k, oid)
        view = mark_occluders(view, tabletop_frame)
        ref = render_to_cloud(view, k, stride=2)
        assert np.array_equal(got.points, ref.points)
        assert np.array_equal(got.lab_colors, ref.lab_colors)
        assert np.array_equal(got.source_pixel, ref.source_pixel)

    # flag off reproduces rasterize+convert exactly
    batch_off = render_batch(suite_models, groups, tabletop_frame, k,
                             stride=2, occluder_marking=False)
    for got, (oid, pose) in zip(batch_off, flat):
        ref = render_to_cloud(
            rasterize(suite_models[oid].mesh, pose, k, oid), k, stride=2)
        assert np.array_equal(got.points, ref.points)


def test_render_batch_unknown_object(suite_models, tabletop_frame):
    k = tabletop_frame.intrinsics
    with pytest.raises(UnknownObjectId):
        render_batch(suite_models, [(99, [RigidTransform.identity()])],
                     tabletop_frame, k)


def test_scene_mark_occluders_monotone_idempotent(suite_models, tabletop_frame):
    k = tabletop_frame.intrinsics
    state = tabletop_frame.ground_truth[0]
    view = rasterize(suite_models[state.object_id].mesh,
                     k.world_to_camera().compose(state.pose), k,
                     state.object_id)
    once = mark_occluders(view, tabletop_frame)
    assert not (once.valid & ~view.valid).any()  # never adds
    twice = mark_occluders(once, tabletop_frame)
    assert np.array_equal(once.valid, twice.valid)
    assert np.array_equal(once.depth.values, twice.depth.values)


def test_save_view_debug_roundtrip(tmp_path, small_camera):
    mesh = _tri_mesh([[-0.1, -0.1, 1.0], [0.1, -0.1, 1.0], [0.0, 0.15, 1.0]],
                     colors=np.array([[1, 0, 0], [0, 1, 0], [0, 0, 1.0]]))
    view = rasterize(mesh, RigidTransform.identity(), small_camera)
    save_view_debug(view, str(tmp_path / "dbg"))
    from rvpose.model import load_depth_pgm, load_ppm
    color = load_ppm(tmp_path / "dbg.ppm")
    depth = load_depth_pgm(tmp_path / "dbg.pgm")
    assert color.shape == (64, 64, 3)
    assert np.array_equal(depth.valid, view.valid)
    assert np.abs(depth.values[view.valid]
                  - view.depth.values[view.valid]).max() <= 0.0005 + 1e-9


def test_frame_to_cloud_stride_parity(tabletop_frame):
    c2 = frame_to_cloud(tabletop_frame, stride=2)
    expected = int(tabletop_frame.depth.valid[::2, ::2].sum())
    assert len(c2) == expected
