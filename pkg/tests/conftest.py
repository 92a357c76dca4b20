import numpy as np
import pytest

from rvpose.geometry import CameraIntrinsics, RigidTransform
from rvpose.scenegen import default_object_suite, generate_scene, random_scene_spec


@pytest.fixture(scope="session")
def suite_models():
    return default_object_suite()


@pytest.fixture(scope="session")
def small_camera():
    """Plain identity-pose camera for unit-level render tests."""
    return CameraIntrinsics(500.0, 500.0, 32.0, 32.0, 64, 64,
                            RigidTransform.identity())


@pytest.fixture(scope="session")
def tabletop_frame(suite_models):
    """One noiseless generated scene shared by read-only tests."""
    spec = random_scene_spec(suite_models, seed=3)
    return generate_scene(spec, suite_models)
