"""Render-and-verify RGBD object pose estimation.

Candidate poses are rendered with a deterministic software rasterizer,
scored with a depth+color explanation cost against the observed frame,
and refined with batched generalized ICP; a synthetic tabletop scene
generator and an ADD-S evaluation harness close the loop.
"""

from .colorspace import ciede2000, srgb_to_lab
from .cost import CostBreakdown, CostParams, ObservedAssociation, proposal_cost
from .geometry import (
    CameraIntrinsics,
    Pose3Dof,
    RigidTransform,
    lift_pose3dof,
    project_point,
    rigid_apply,
    rigid_compose,
    unproject_pixel,
)
from .metrics import adds_auc, adds_error, run_eval
from .model import (
    DepthImage,
    Detection,
    InscribedCylinder,
    LabeledCloud,
    ObjectModel,
    ObjectState,
    SceneFrame,
    TriangleMesh,
)
from .neighbors import KnnConfig, NeighborResult, knn_full, knn_streamed
from .proposals import (
    fibonacci_viewpoints,
    grid_proposals_3dof,
    pose_proposals_6dof,
    rotation_proposals,
    translation_proposals,
)
from .raster import (
    RenderedView,
    frame_to_cloud,
    mark_occluders,
    rasterize,
    render_batch,
    render_to_cloud,
)
from .registration import (
    GicpConfig,
    RegistrationResult,
    estimate_covariances,
    gicp_align,
    icp_point2point,
    m2m_gicp,
    project_to_3dof,
)
from .scenegen import (
    NoiseModel,
    PrimitiveSpec,
    SceneSpec,
    apply_noise,
    build_model,
    generate_scene,
    make_primitive_mesh,
)
from .search import SearchConfig, SearchResult, estimate_poses, select_best

__version__ = "0.1.0"
