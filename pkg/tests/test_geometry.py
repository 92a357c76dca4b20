import numpy as np
import pytest

from rvpose.errors import InvalidDepth, NonPositiveDepth
from rvpose.geometry import (
    CameraIntrinsics,
    Pose3Dof,
    RigidTransform,
    lift_pose3dof,
    project_point,
    rigid_apply,
    rigid_compose,
    rot_z,
    rotation_about_axis,
    rotation_angle,
    so3_exp,
    unproject_pixel,
)
from rvpose.registration import project_to_3dof


def _cam():
    return CameraIntrinsics(500.0, 500.0, 320.0, 240.0, 640, 480)


def test_compose_identity():
    t = RigidTransform(rot_z(0.3), np.array([0.1, -0.2, 0.5]))
    out = rigid_compose(t, RigidTransform.identity())
    assert np.allclose(out.rotation, t.rotation)
    assert np.allclose(out.translation, t.translation)


def test_compose_inverse_is_identity():
    t = RigidTransform(rot_z(1.1) @ rotation_about_axis([1, 0.3, 0.2], 0.7),
                       np.array([0.4, 0.1, -0.9]))
    out = rigid_compose(t, t.inverse())
    assert np.abs(out.rotation - np.eye(3)).max() < 1e-9
    assert np.abs(out.translation).max() < 1e-9


def test_compose_rotation_group():
    quarter = RigidTransform(rot_z(np.pi / 2), np.zeros(3))
    half = rigid_compose(quarter, quarter)
    assert np.allclose(half.rotation, rot_z(np.pi), atol=1e-12)


def test_compose_associative():
    rng = np.random.default_rng(0)
    for _ in range(20):
        ts = []
        for _ in range(3):
            axis = rng.normal(size=3)
            ts.append(RigidTransform(
                rotation_about_axis(axis, rng.uniform(-3, 3)),
                rng.normal(size=3)))
        a, b, c = ts
        left = rigid_compose(rigid_compose(a, b), c)
        right = rigid_compose(a, rigid_compose(b, c))
        assert np.abs(left.rotation - right.rotation).max() < 1e-9
        assert np.abs(left.translation - right.translation).max() < 1e-9


def test_apply_identity_and_translation():
    p = np.array([1.0, 2.0, 3.0])
    assert np.allclose(rigid_apply(RigidTransform.identity(), p), p)
    shift = RigidTransform(np.eye(3), np.array([0.1, 0.0, 0.0]))
    assert np.allclose(rigid_apply(shift, np.zeros(3)), [0.1, 0.0, 0.0])


def test_apply_rotation_z90():
    t = RigidTransform(rot_z(np.pi / 2), np.zeros(3))
    out = rigid_apply(t, np.array([1.0, 0.0, 0.0]))
    assert np.abs(out - np.array([0.0, 1.0, 0.0])).max() < 1e-12


def test_lift_pose3dof():
    assert np.allclose(lift_pose3dof(Pose3Dof(0, 0, 0), 0.0).matrix3x4(),
                       RigidTransform.identity().matrix3x4())
    t = lift_pose3dof(Pose3Dof(1.0, 2.0, np.pi), 0.5)
    assert np.allclose(t.rotation, rot_z(np.pi), atol=1e-12)
    assert np.allclose(t.translation, [1.0, 2.0, 0.5])


def test_lift_project_roundtrip():
    rng = np.random.default_rng(1)
    for _ in range(50):
        p = Pose3Dof(rng.uniform(-1, 1), rng.uniform(-1, 1),
                     rng.uniform(0, 2 * np.pi))
        z = rng.uniform(-0.5, 0.5)
        back = project_to_3dof(lift_pose3dof(p, z), z)
        assert abs(back.x - p.x) < 1e-12
        assert abs(back.y - p.y) < 1e-12
        assert abs(back.yaw - p.yaw) < 1e-12


def test_yaw_canonicalized():
    assert Pose3Dof(0, 0, -0.1).yaw == pytest.approx(2 * np.pi - 0.1)
    assert Pose3Dof(0, 0, 2 * np.pi).yaw == 0.0


def test_project_principal_axis():
    u, v, z = project_point(_cam(), np.array([0.0, 0.0, 1.0]))
    assert (u, v, z) == (320.0, 240.0, 1.0)


def test_project_offset():
    u, v, z = project_point(_cam(), np.array([0.1, 0.0, 1.0]))
    assert (u, v, z) == (370.0, 240.0, 1.0)


def test_project_rejects_nonpositive_depth():
    with pytest.raises(NonPositiveDepth):
        project_point(_cam(), np.array([0.0, 0.0, 0.0]))
    with pytest.raises(NonPositiveDepth):
        project_point(_cam(), np.array([0.0, 0.0, -1.0]))


def test_unproject_basics():
    k = _cam()
    assert np.allclose(unproject_pixel(k, 320.0, 240.0, 2.0), [0, 0, 2.0])
    assert np.allclose(unproject_pixel(k, 370.0, 240.0, 1.0), [0.1, 0, 1.0])
    with pytest.raises(InvalidDepth):
        unproject_pixel(k, 320.0, 240.0, 0.0)
    with pytest.raises(InvalidDepth):
        unproject_pixel(k, 320.0, 240.0, -0.5)


def test_project_unproject_inverse():
    k = _cam()
    rng = np.random.default_rng(2)
    pts = rng.uniform([-1, -1, 0.2], [1, 1, 5.0], (200, 3))
    u, v, z = project_point(k, pts)
    back = unproject_pixel(k, u, v, z)
    assert np.abs(back - pts).max() < 1e-9


def test_so3_exp_matches_axis_angle():
    rng = np.random.default_rng(3)
    for _ in range(20):
        axis = rng.normal(size=3)
        angle = rng.uniform(-3, 3)
        w = axis / np.linalg.norm(axis) * angle
        assert np.abs(so3_exp(w) -
                      rotation_about_axis(axis, angle)).max() < 1e-12


def test_rotation_angle():
    assert rotation_angle(rot_z(0.4)) == pytest.approx(0.4, abs=1e-12)
    assert rotation_angle(np.eye(3)) == 0.0


def test_intrinsics_validation():
    with pytest.raises(ValueError):
        CameraIntrinsics(-1.0, 500.0, 320.0, 240.0, 640, 480)
    with pytest.raises(ValueError):
        CameraIntrinsics(500.0, 500.0, 700.0, 240.0, 640, 480)


def test_rigid_transform_rejects_non_rotation():
    with pytest.raises(ValueError):
        RigidTransform(np.eye(3) * 2.0, np.zeros(3))
