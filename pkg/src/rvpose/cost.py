"""Depth-only and RGBD outlier tests and the explanation costs.

The rendered cost j_r counts rendered points with no observed point within
delta, or (in RGBD mode) whose nearest within-delta observed point differs
in color by more than tau_c under CIEDE2000.  The observed cost j_o counts
observed points associated to the object (inscribed-cylinder volume or
pixel label) that no rendered inlier claimed as its nearest neighbor.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .colorspace import ciede2000
from .model import InscribedCylinder, LabeledCloud, SceneFrame
from .neighbors import KnnConfig, knn
from .raster import cloud_labels
from .geometry import RigidTransform


@dataclass(frozen=True)
class CostParams:
    delta: float = 0.0075   # sensor noise resolution, meters
    tau_c: float = 12.5     # max CIEDE2000 difference for a color match
    use_color: bool = True

    def __post_init__(self):
        if self.delta <= 0 or self.tau_c <= 0:
            raise ValueError("delta and tau_c must be positive")


@dataclass(frozen=True)
class CostBreakdown:
    j_o: int
    j_r: int

    def __post_init__(self):
        if self.j_o < 0 or self.j_r < 0:
            raise ValueError("costs are counts")

    @property
    def total(self) -> int:
        return self.j_o + self.j_r


@dataclass(frozen=True)
class ObservedAssociation:
    """Selects which observed points belong to an object: the pose's
    inscribed cylinder (3-DoF search) or the pixel label (6-DoF search)."""

    mode: str  # "cylinder" | "label"
    pose: RigidTransform | None = None       # camera-frame object pose
    cylinder: InscribedCylinder | None = None
    object_id: int | None = None

    def __post_init__(self):
        if self.mode == "cylinder":
            if self.pose is None or self.cylinder is None:
                raise ValueError("cylinder mode needs pose and cylinder")
        elif self.mode == "label":
            if self.object_id is None:
                raise ValueError("label mode needs object_id")
        else:
            raise ValueError(f"unknown association mode {self.mode!r}")

    @staticmethod
    def inscribed_cylinder(pose: RigidTransform,
                           cylinder: InscribedCylinder) -> "ObservedAssociation":
        return ObservedAssociation("cylinder", pose=pose, cylinder=cylinder)

    @staticmethod
    def label_mask(object_id: int) -> "ObservedAssociation":
        return ObservedAssociation("label", object_id=int(object_id))


def outlier(p_index: int, nn_result, query_lab, target_lab,
            params: CostParams) -> int:
    """Outlier test for one query slot against its nearest neighbor."""
    idx = int(nn_result.indices[p_index, 0])
    d2 = float(nn_result.sq_dists[p_index, 0])
    if idx < 0 or d2 > params.delta * params.delta:
        return 1
    if params.use_color:
        if ciede2000(query_lab[p_index], target_lab[idx]) > params.tau_c:
            return 1
    return 0


def rendered_cost(rendered: LabeledCloud, observed: LabeledCloud,
                  params: CostParams,
                  knn_cfg: KnnConfig = KnnConfig()) -> tuple:
    """Count rendered outliers vs the observed cloud.

    Returns (j_r, explained) where explained marks observed points that
    served as a within-delta (and, in color mode, within-tau_c) nearest
    neighbor of some rendered point.
    """
    n_obs = len(observed)
    explained = np.zeros(n_obs, dtype=bool)
    n_ren = len(rendered)
    if n_ren == 0:
        return 0, explained
    if n_obs == 0:
        return n_ren, explained

    # Exact pre-crop: any observed point within delta of a rendered point
    # lies inside the rendered AABB inflated by delta, and cropping with
    # original index order preserves the lowest-index tie-break.
    lo = rendered.points.min(axis=0) - params.delta
    hi = rendered.points.max(axis=0) + params.delta
    inbox = np.nonzero(
        np.all((observed.points >= lo) & (observed.points <= hi), axis=1)
    )[0]
    if inbox.size == 0:
        return n_ren, explained

    nn = knn(rendered.points, observed.points[inbox],
             KnnConfig(knn_cfg.strategy, 1))
    d2 = nn.nearest_sq_dist
    local = nn.nearest_index
    within = (local >= 0) & (d2 <= params.delta * params.delta)
    matched = inbox[local[within]]  # global observed indices

    if params.use_color:
        de = ciede2000(rendered.lab_colors[within], observed.lab_colors[matched])
        color_ok = de <= params.tau_c
        j_r = int(n_ren - int(np.count_nonzero(within)) +
                  int(np.count_nonzero(~color_ok)))
        explained[matched[color_ok]] = True
    else:
        j_r = int(n_ren - int(np.count_nonzero(within)))
        explained[matched] = True
    return j_r, explained


def select_observed(observed: LabeledCloud, frame: SceneFrame,
                    assoc: ObservedAssociation) -> np.ndarray:
    """Boolean mask of observed points associated to the object."""
    if assoc.mode == "label":
        return cloud_labels(observed, frame.labels) == assoc.object_id
    pts_obj = assoc.pose.inverse().apply(observed.points)
    return assoc.cylinder.contains(pts_obj)


def observed_cost(observed: LabeledCloud, frame: SceneFrame,
                  assoc: ObservedAssociation, explained: np.ndarray,
                  params: CostParams | None = None) -> int:
    """Count selected observed points not explained by the render."""
    selected = select_observed(observed, frame, assoc)
    return int(np.count_nonzero(selected & ~explained))


def proposal_cost(rendered: LabeledCloud, observed: LabeledCloud,
                  frame: SceneFrame, assoc: ObservedAssociation,
                  params: CostParams,
                  knn_cfg: KnnConfig = KnnConfig()) -> CostBreakdown:
    """Explanation cost of one proposal: j_r then j_o, one neighbor pass."""
    j_r, explained = rendered_cost(rendered, observed, params, knn_cfg)
    j_o = observed_cost(observed, frame, assoc, explained, params)
    return CostBreakdown(j_o=j_o, j_r=j_r)
