"""Flat, fully parallel per-object pose search.

Per object: generate proposals -> batch render with occluder marking ->
batch GICP refinement against the object's observed sub-cloud -> re-render
the refined poses -> batch explanation cost -> deterministic argmin.  All
objects share one flat batch per stage; results are independent of worker
count and chunking.  Wall times live beside, not inside, the result payload
so identical runs produce bitwise-identical result JSON.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import parallel
from .cost import CostBreakdown, CostParams, ObservedAssociation, proposal_cost
from .errors import ConfigError, EmptyBatch, NoValidDepth
from .geometry import Pose3Dof, RigidTransform, lift_pose3dof, rotation_angle
from .model import SceneFrame
from .neighbors import KnnConfig
from .proposals import (
    PoseProposalSet,
    grid_proposals_3dof,
    pose_proposals_6dof,
    rotation_proposals,
    translation_proposals,
)
from .raster import cloud_labels, frame_to_cloud, render_batch
from .registration import GicpConfig, m2m_gicp, project_to_3dof


@dataclass(frozen=True)
class SearchConfig:
    mode: str = "6dof"               # "3dof" | "6dof"
    use_color: bool = True
    occluder_marking: bool = True
    knn_strategy: str = "streamed"   # "full" | "streamed"
    stride: int = 2
    delta: float = 0.0075
    tau_c: float = 12.5
    refine: bool = True
    gicp: GicpConfig = field(default_factory=GicpConfig)
    # 3-DoF grid
    workspace: tuple | None = None   # (x_min, x_max, y_min, y_max)
    fixed_z: float = 0.0
    dt: float = 0.08
    dyaw: float = math.radians(22.5)
    # 6-DoF proposals
    viewpoints: int = 42
    n_inplane: int = 16
    z_step: float = 0.02
    # execution
    workers: int = 1
    chunk_size: int | None = None
    trace_path: str | None = None
    max_proposals: int | None = None  # uniform subsample, for benchmarks

    def __post_init__(self):
        if self.mode not in ("3dof", "6dof"):
            raise ConfigError(f"unknown mode {self.mode!r}")
        if self.knn_strategy not in ("full", "streamed"):
            raise ConfigError(f"unknown knn strategy {self.knn_strategy!r}")
        if self.stride < 1:
            raise ConfigError("stride must be >= 1")
        if self.mode == "3dof" and self.workspace is None:
            raise ConfigError("3dof mode requires workspace bounds")
        if self.workspace is not None:
            x0, x1, y0, y1 = self.workspace
            if x1 < x0 or y1 < y0:
                raise ConfigError("workspace bounds are inverted")
        if min(self.delta, self.tau_c, self.dt, self.dyaw, self.z_step) <= 0:
            raise ConfigError("scale parameters must be positive")
        if self.viewpoints < 1 or self.n_inplane < 1:
            raise ConfigError("proposal counts must be >= 1")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")

    @property
    def cost_params(self) -> CostParams:
        return CostParams(self.delta, self.tau_c, self.use_color)

    @property
    def knn_config(self) -> KnnConfig:
        return KnnConfig(self.knn_strategy, 1)

    def to_dict(self) -> dict:
        d = {
            "mode": self.mode,
            "use_color": self.use_color,
            "occluder_marking": self.occluder_marking,
            "knn_strategy": self.knn_strategy,
            "stride": self.stride,
            "delta": self.delta,
            "tau_c": self.tau_c,
            "refine": self.refine,
            "gicp": {
                "k_covariance": self.gicp.k_covariance,
                "epsilon": self.gicp.epsilon,
                "max_iterations": self.gicp.max_iterations,
                "translation_tolerance": self.gicp.translation_tolerance,
                "rotation_tolerance": self.gicp.rotation_tolerance,
                "max_correspondence_distance": self.gicp.max_correspondence_distance,
            },
            "workspace": list(self.workspace) if self.workspace else None,
            "fixed_z": self.fixed_z,
            "dt": self.dt,
            "dyaw_degrees": math.degrees(self.dyaw),
            "viewpoints": self.viewpoints,
            "n_inplane": self.n_inplane,
            "z_step": self.z_step,
            "workers": self.workers,
        }
        return d

    @staticmethod
    def from_dict(d: dict) -> "SearchConfig":
        known = {
            "mode", "use_color", "occluder_marking", "knn_strategy", "stride",
            "delta", "tau_c", "refine", "gicp", "workspace", "fixed_z", "dt",
            "dyaw_degrees", "viewpoints", "n_inplane", "z_step", "workers",
            "chunk_size", "trace_path", "max_proposals",
        }
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        kwargs = dict(d)
        if "dyaw_degrees" in kwargs:
            kwargs["dyaw"] = math.radians(kwargs.pop("dyaw_degrees"))
        if kwargs.get("workspace") is not None:
            kwargs["workspace"] = tuple(kwargs["workspace"])
        if "gicp" in kwargs:
            try:
                kwargs["gicp"] = GicpConfig(**kwargs["gicp"])
            except (TypeError, ValueError) as e:
                raise ConfigError(f"bad gicp config: {e}") from e
        try:
            return SearchConfig(**kwargs)
        except (TypeError, ValueError) as e:
            raise ConfigError(str(e)) from e


@dataclass(frozen=True)
class ObjectEstimate:
    object_id: int
    pose: RigidTransform | None          # world frame
    cost: CostBreakdown | None
    provenance: tuple | None             # proposal provenance indices
    proposal_index: int | None           # flat index within the object's set
    refine_translation: float            # |delta t| of the applied correction
    refine_rotation: float               # rotation angle of the correction
    proposals_evaluated: int
    millis: float                        # stage time attributed by proposals
    failed: bool = False
    failure: str | None = None


@dataclass(frozen=True)
class SearchResult:
    estimates: tuple
    stage_millis: dict
    total_millis: float
    proposals_evaluated: int
    max_rendered_points: int = 0
    observed_points: int = 0

    def estimate_for(self, object_id: int) -> ObjectEstimate:
        for e in self.estimates:
            if e.object_id == object_id:
                return e
        raise KeyError(object_id)


def select_best(costs) -> int:
    """Argmin by total cost; ties resolved to the lowest index."""
    costs = list(costs)
    if not costs:
        raise EmptyBatch("no costs to select from")
    return min(range(len(costs)), key=lambda i: (costs[i].total, i))


_COST_KEY = "search.cost_stage"


def _cost_task(entry):
    """Per-proposal cost; label-mode selections are precomputed per object
    (same outlier/explained semantics as cost.proposal_cost)."""
    from .cost import observed_cost, rendered_cost, select_observed

    observed, frame, params, knn_cfg, label_masks = parallel.get_payload(_COST_KEY)
    cloud, oid, assoc = entry
    j_r, explained = rendered_cost(cloud, observed, params, knn_cfg)
    if assoc is None:
        selected = label_masks[oid]
        j_o = int(np.count_nonzero(selected & ~explained))
    else:
        j_o = observed_cost(observed, frame, assoc, explained, params)
    return j_o, j_r


def _capsule_crop(points_world, x, y, z_lo, z_hi, radius):
    """Points within `radius` of the vertical axis segment at (x, y)."""
    dx = points_world[:, 0] - x
    dy = points_world[:, 1] - y
    dz = np.maximum.reduce([
        z_lo - points_world[:, 2],
        points_world[:, 2] - z_hi,
        np.zeros(points_world.shape[0]),
    ])
    return (dx * dx + dy * dy + dz * dz) <= radius * radius


def estimate_poses(frame: SceneFrame, models: dict,
                   cfg: SearchConfig) -> SearchResult:
    """Estimate a pose for every detected object in the frame."""
    t_start = time.perf_counter()
    k = frame.intrinsics
    world_to_cam = k.world_to_camera()
    cam_to_world = k.camera_pose

    if frame.detections:
        object_ids = [d.object_id for d in frame.detections]
    else:
        object_ids = sorted(models)
    if cfg.mode == "6dof" and not frame.detections:
        raise ConfigError("6dof mode requires detections in the frame")

    observed = frame_to_cloud(frame, cfg.stride)
    obs_labels = cloud_labels(observed, frame.labels)
    obs_world = cam_to_world.apply(observed.points) if cfg.mode == "3dof" else None

    # -- proposals ---------------------------------------------------------
    failures: dict[int, str] = {}
    proposal_sets: dict[int, PoseProposalSet] = {}
    cam_poses: dict[int, list] = {}
    for oid in object_ids:
        if oid not in models:
            failures[oid] = "unknown_object"
            continue
        try:
            pset = _build_proposals(oid, frame, models[oid], cfg)
        except NoValidDepth:
            failures[oid] = "no_valid_depth"
            continue
        if len(pset) == 0:
            failures[oid] = "empty_proposal_set"
            continue
        proposal_sets[oid] = pset
        if cfg.mode == "3dof":
            cam_poses[oid] = [world_to_cam.compose(pset.pose(i))
                              for i in range(len(pset))]
        else:
            cam_poses[oid] = pset.transforms()  # already camera frame

    active = [oid for oid in object_ids if oid in proposal_sets]
    flat = [(oid, i) for oid in active for i in range(len(proposal_sets[oid]))]
    if cfg.max_proposals is not None and len(flat) > cfg.max_proposals:
        pick = np.unique(np.round(
            np.linspace(0, len(flat) - 1, cfg.max_proposals)).astype(int))
        flat = [flat[i] for i in pick]
        active = [oid for oid in active if any(f[0] == oid for f in flat)]
    stage_millis = {"render": 0.0, "refine": 0.0, "rerender": 0.0, "cost": 0.0}

    # -- stage: render -----------------------------------------------------
    t0 = time.perf_counter()
    grouped: dict[int, list] = {oid: [] for oid in active}
    for oid, i in flat:
        grouped[oid].append(cam_poses[oid][i])
    groups = [(oid, grouped[oid]) for oid in active]
    clouds = render_batch(models, groups, frame, k, cfg.stride,
                          cfg.occluder_marking, cfg.delta,
                          cfg.workers, cfg.chunk_size)
    stage_millis["render"] = (time.perf_counter() - t0) * 1e3

    # -- stage: refine -----------------------------------------------------
    refined_cam = [cam_poses[oid][i] for oid, i in flat]
    refine_delta = [RigidTransform.identity()] * len(flat)
    if cfg.refine and flat:
        t0 = time.perf_counter()
        targets, target_idx = _build_targets(
            active, proposal_sets, flat, observed, obs_labels, obs_world,
            models, cfg)
        inits = [RigidTransform.identity()] * len(flat)
        regs = m2m_gicp(clouds, targets, inits, cfg.gicp,
                        target_indices=target_idx, workers=cfg.workers,
                        chunksize=cfg.chunk_size)
        for j, ((oid, i), reg) in enumerate(zip(flat, regs)):
            if reg.failure == "too_few_points" and reg.iterations == 0:
                continue  # keep the unrefined proposal
            cam_pose = reg.transform.compose(refined_cam[j])
            if cfg.mode == "3dof":
                world = cam_to_world.compose(cam_pose)
                planar = project_to_3dof(world, cfg.fixed_z)
                cam_pose = world_to_cam.compose(
                    lift_pose3dof(planar, cfg.fixed_z))
            refine_delta[j] = reg.transform
            refined_cam[j] = cam_pose
        stage_millis["refine"] = (time.perf_counter() - t0) * 1e3

        # -- stage: re-render ---------------------------------------------
        t0 = time.perf_counter()
        regrouped: dict[int, list] = {oid: [] for oid in active}
        for (oid, _i), pose in zip(flat, refined_cam):
            regrouped[oid].append(pose)
        clouds = render_batch(models, [(oid, regrouped[oid]) for oid in active],
                              frame, k, cfg.stride, cfg.occluder_marking,
                              cfg.delta, cfg.workers, cfg.chunk_size)
        stage_millis["rerender"] = (time.perf_counter() - t0) * 1e3

    # -- stage: cost -------------------------------------------------------
    t0 = time.perf_counter()
    label_masks = {}
    if cfg.mode == "6dof":
        label_masks = {oid: obs_labels == oid for oid in active}
    entries = []
    for j, (oid, _i) in enumerate(flat):
        if cfg.mode == "3dof":
            assoc = ObservedAssociation.inscribed_cylinder(
                refined_cam[j], models[oid].inscribed_cylinder)
        else:
            assoc = None  # label selection shared per object
        entries.append((clouds[j], oid, assoc))
    parallel.set_payload(
        _COST_KEY,
        (observed, frame, cfg.cost_params, cfg.knn_config, label_masks))
    try:
        raw_costs = parallel.parallel_map(_cost_task, entries, cfg.workers,
                                          cfg.chunk_size)
    finally:
        parallel.clear_payload(_COST_KEY)
    costs = [CostBreakdown(j_o=c[0], j_r=c[1]) for c in raw_costs]
    stage_millis["cost"] = (time.perf_counter() - t0) * 1e3

    if cfg.trace_path:
        with open(cfg.trace_path, "w") as f:
            for (oid, i), bd in zip(flat, costs):
                f.write(json.dumps({
                    "object_id": oid, "proposal_index": i,
                    "j_o": bd.j_o, "j_r": bd.j_r, "total": bd.total,
                }, sort_keys=True) + "\n")

    # -- per-object argmin ---------------------------------------------------
    per_stage_total = sum(stage_millis.values())
    estimates = []
    offsets: dict[int, list] = {oid: [] for oid in active}
    for j, (oid, _i) in enumerate(flat):
        offsets[oid].append(j)
    for oid in object_ids:
        if oid in failures:
            estimates.append(ObjectEstimate(
                oid, None, None, None, None, 0.0, 0.0, 0, 0.0,
                failed=True, failure=failures[oid]))
            continue
        idxs = offsets[oid]
        obj_costs = [costs[j] for j in idxs]
        best_local = select_best(obj_costs)
        j = idxs[best_local]
        pset = proposal_sets[oid]
        world_pose = cam_to_world.compose(refined_cam[j])
        delta = refine_delta[j]
        share = per_stage_total * (len(idxs) / max(1, len(flat)))
        estimates.append(ObjectEstimate(
            oid, world_pose, obj_costs[best_local],
            tuple(int(x) for x in pset.provenance[best_local]),
            best_local,
            float(np.linalg.norm(delta.translation)),
            rotation_angle(delta.rotation),
            len(idxs), share))
    total_millis = (time.perf_counter() - t_start) * 1e3
    return SearchResult(tuple(estimates), stage_millis, total_millis,
                        len(flat),
                        max((len(c) for c in clouds), default=0),
                        len(observed))


def _build_proposals(oid: int, frame: SceneFrame, model,
                     cfg: SearchConfig) -> PoseProposalSet:
    if cfg.mode == "3dof":
        return grid_proposals_3dof(cfg.workspace, cfg.dt, cfg.dyaw,
                                   cfg.fixed_z, oid, model.yaw_symmetric)
    det = next(d for d in frame.detections if d.object_id == oid)
    rot = rotation_proposals(cfg.viewpoints,
                             1 if model.yaw_symmetric else cfg.n_inplane)
    trans = translation_proposals(det, frame.depth, frame.labels,
                                  frame.intrinsics, cfg.z_step)
    return pose_proposals_6dof(oid, rot, trans)


def _build_targets(active, proposal_sets, flat, observed, obs_labels,
                   obs_world, models, cfg):
    """Observed sub-clouds for GICP: label mask (6dof) or a capsule around
    each proposal's inscribed-cylinder axis, shared per grid cell (3dof)."""
    targets = []
    target_idx = []
    if cfg.mode == "6dof":
        slot = {}
        for oid in active:
            slot[oid] = len(targets)
            targets.append(observed.subset(obs_labels == oid))
        target_idx = [slot[oid] for oid, _ in flat]
        return targets, target_idx

    slot = {}
    for oid, i in flat:
        pset = proposal_sets[oid]
        cell = int(pset.provenance[i, 0])
        key = (oid, cell)
        if key not in slot:
            cyl = models[oid].inscribed_cylinder
            x, y = pset.translations[i, 0], pset.translations[i, 1]
            # 1.5x the cylinder radius plus one grid step: the true object
            # must stay inside the crop even from the worst cell corner.
            # The z floor sits just above the table so the ground ring does
            # not drag the fit (z is discarded by the planar projection).
            mask = _capsule_crop(
                obs_world, x, y,
                cfg.fixed_z + cyl.z_min + 0.005, cfg.fixed_z + cyl.z_max,
                1.5 * cyl.radius + cfg.dt)
            slot[key] = len(targets)
            targets.append(observed.subset(mask))
        target_idx.append(slot[key])
    return targets, target_idx


# ---------------------------------------------------------------------------
# Result serialization (timings deliberately live in a separate payload)

def result_to_json(result: SearchResult) -> str:
    objects = []
    for e in result.estimates:
        rec = {"object_id": e.object_id, "failed": e.failed}
        if e.failed:
            rec["failure"] = e.failure
        else:
            rec["pose"] = [float(x) for x in e.pose.matrix3x4().reshape(-1)]
            rec["j_o"] = e.cost.j_o
            rec["j_r"] = e.cost.j_r
            rec["total"] = e.cost.total
            rec["provenance"] = list(e.provenance)
            rec["proposal_index"] = e.proposal_index
            rec["proposals_evaluated"] = e.proposals_evaluated
        objects.append(rec)
    payload = {"objects": objects,
               "proposals_evaluated": result.proposals_evaluated}
    return json.dumps(payload, indent=2, sort_keys=True)


def timings_to_json(result: SearchResult) -> str:
    payload = {
        "total_millis": result.total_millis,
        "stage_millis": result.stage_millis,
        "per_object_millis": {
            str(e.object_id): e.millis for e in result.estimates
        },
    }
    return json.dumps(payload, indent=2, sort_keys=True)
