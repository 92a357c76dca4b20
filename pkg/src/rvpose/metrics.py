"""ADD-S error, accuracy-threshold AUC, and dataset-level evaluation.

ADD-S is the mean distance from each ground-truth-posed model point to its
closest estimated-pose model point (symmetric-object friendly).  The AUC
integrates the fraction-below-threshold step function exactly up to
max_threshold and is reported as a percentage.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree

from .errors import DatasetError, EmptyInput, EmptyModel
from .geometry import RigidTransform
from .model import TriangleMesh

MODEL_POINT_CAP = 3000
MODEL_POINT_SEED = 7


def sample_model_points(mesh: TriangleMesh, cap: int = MODEL_POINT_CAP,
                        seed: int = MODEL_POINT_SEED) -> np.ndarray:
    """Mesh vertices, deterministically stratified-subsampled to `cap`."""
    v = mesh.vertices
    n = v.shape[0]
    if n == 0:
        raise EmptyModel("mesh has no vertices")
    if n <= cap:
        return np.array(v)
    rng = np.random.default_rng(seed)
    edges = np.linspace(0, n, cap + 1).astype(int)
    idx = np.array([int(rng.integers(lo, hi))
                    for lo, hi in zip(edges[:-1], edges[1:])])
    return np.array(v[idx])


def adds_error(model_points, gt: RigidTransform, est: RigidTransform) -> float:
    """Mean distance from gt-posed points to the closest est-posed point."""
    pts = np.asarray(model_points, dtype=np.float64).reshape(-1, 3)
    if pts.shape[0] == 0:
        raise EmptyModel("no model points")
    p_gt = gt.apply(pts)
    p_est = est.apply(pts)
    dist, _ = cKDTree(p_est).query(p_gt, k=1)
    return float(dist.mean())


@dataclass(frozen=True)
class AddSCurve:
    errors: np.ndarray
    max_threshold: float
    auc: float              # percent
    pct_below: dict         # threshold -> percent

    def __post_init__(self):
        e = np.asarray(self.errors, dtype=np.float64)
        e.setflags(write=False)
        object.__setattr__(self, "errors", e)


def adds_auc(errors, max_threshold: float = 0.1,
             report_thresholds=(0.01, 0.02)) -> AddSCurve:
    """Exact step-function accuracy-threshold integral, in percent."""
    e = np.asarray(errors, dtype=np.float64).reshape(-1)
    if e.size == 0:
        raise EmptyInput("no errors")
    e_sorted = np.sort(e)  # canonical order: exact permutation invariance
    mass = float(np.maximum(0.0, max_threshold - e_sorted).sum())
    auc = 100.0 * (mass / (e.size * max_threshold))
    pct = {float(t): 100.0 * float(np.count_nonzero(e < t)) / e.size
           for t in report_thresholds}
    return AddSCurve(e, max_threshold, auc, pct)


@dataclass(frozen=True)
class EvalReport:
    """Per-object and pooled rows; the all-objects row pools instances."""

    rows: dict              # object_id -> row dict
    all_row: dict
    warnings: int
    metadata: dict

    def to_json(self) -> str:
        payload = {
            "rows": {str(k): v for k, v in self.rows.items()},
            "all_row": self.all_row,
            "warnings": self.warnings,
            "metadata": self.metadata,
        }
        return json.dumps(payload, indent=2, sort_keys=True)

    @staticmethod
    def from_json(text: str) -> "EvalReport":
        d = json.loads(text)
        return EvalReport({int(k): v for k, v in d["rows"].items()},
                          d["all_row"], d["warnings"], d["metadata"])

    def format_table(self) -> str:
        header = f"{'object':>10} {'AUC':>8} {'<1cm%':>8} {'<2cm%':>8} {'n':>5}"
        lines = [header, "-" * len(header)]
        for oid in sorted(self.rows):
            r = self.rows[oid]
            lines.append(f"{oid:>10} {r['auc']:>8.2f} {r['pct_1cm']:>8.2f} "
                         f"{r['pct_2cm']:>8.2f} {r['count']:>5}")
        r = self.all_row
        lines.append(f"{'ALL':>10} {r['auc']:>8.2f} {r['pct_1cm']:>8.2f} "
                     f"{r['pct_2cm']:>8.2f} {r['count']:>5}")
        if r.get("mean_runtime_s") is not None:
            lines.append(f"mean runtime: {r['mean_runtime_s']:.3f} s/scene")
        if self.warnings:
            lines.append(f"warnings: {self.warnings} missing result(s)")
        return "\n".join(lines)


def _row(errors: list) -> dict:
    curve = adds_auc(np.array(errors))
    return {
        "auc": curve.auc,
        "pct_1cm": curve.pct_below[0.01],
        "pct_2cm": curve.pct_below[0.02],
        "count": len(errors),
    }


def run_eval(dataset_dir, results_dir) -> EvalReport:
    """Compare per-scene results.json against dataset ground truth."""
    from .scenegen import load_models, load_scene  # cycle-free at call time

    dataset = Path(dataset_dir)
    results = Path(results_dir)
    scene_dirs = sorted(d for d in dataset.glob("scene_*") if d.is_dir())
    if not scene_dirs:
        raise DatasetError(f"no scene_* directories under {dataset}")
    models = load_models(dataset / "models")
    points = {oid: sample_model_points(m.mesh) for oid, m in models.items()}

    per_object: dict[int, list] = {}
    warnings = 0
    missing: list[str] = []
    runtimes = []
    for scene_dir in scene_dirs:
        frame = load_scene(scene_dir)
        res_file = results / scene_dir.name / "results.json"
        if not res_file.exists():
            warnings += len(frame.ground_truth or [])
            missing.append(scene_dir.name)
            continue
        payload = json.loads(res_file.read_text())
        by_id = {rec["object_id"]: rec for rec in payload["objects"]}
        timing_file = results / scene_dir.name / "timings.json"
        if timing_file.exists():
            runtimes.append(
                json.loads(timing_file.read_text())["total_millis"] / 1e3)
        for state in frame.ground_truth or []:
            rec = by_id.get(state.object_id)
            if rec is None or rec.get("failed"):
                warnings += 1
                missing.append(f"{scene_dir.name}:object_{state.object_id}")
                continue
            est = RigidTransform.from_matrix3x4(
                np.asarray(rec["pose"]).reshape(3, 4))
            err = adds_error(points[state.object_id], state.pose, est)
            per_object.setdefault(state.object_id, []).append(err)

    if not per_object:
        raise DatasetError("no evaluable results found")
    rows = {oid: _row(errs) for oid, errs in sorted(per_object.items())}
    pooled = [e for errs in per_object.values() for e in errs]
    all_row = _row(pooled)
    all_row["mean_runtime_s"] = (
        float(np.mean(runtimes)) if runtimes else None)
    metadata = {
        "pooling": "all-objects row pools instances, not object averages",
        "missing": missing,
    }
    return EvalReport(rows, all_row, warnings, metadata)
