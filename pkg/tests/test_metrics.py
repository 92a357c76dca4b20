import json

import numpy as np
import pytest

from helpers import random_rigid_transform

from rvpose.errors import EmptyInput, EmptyModel
from rvpose.geometry import RigidTransform, rot_z
from rvpose.metrics import (
    EvalReport,
    adds_auc,
    adds_error,
    run_eval,
    sample_model_points,
)
from rvpose.scenegen import build_model, PrimitiveSpec


def test_adds_zero_when_equal():
    rng = np.random.default_rng(0)
    pts = rng.normal(size=(100, 3))
    t = random_rigid_transform(rng)
    assert adds_error(pts, t, t) == 0.0


def test_adds_single_point_shift():
    pts = np.array([[0.0, 0.0, 0.0]])
    gt = RigidTransform.identity()
    est = RigidTransform(np.eye(3), np.array([0.01, 0.0, 0.0]))
    assert adds_error(pts, gt, est) == pytest.approx(0.01)


def test_adds_symmetry_invariance_on_cylinder():
    model = build_model(1, PrimitiveSpec("cylinder", (0.033, 0.12),
                                         ((0.0, 1.0, (1, 0, 0)),)), (64, 8))
    pts = sample_model_points(model.mesh)
    gt = RigidTransform.identity()
    est = RigidTransform(rot_z(np.pi / 2), np.zeros(3))
    err = adds_error(pts, gt, est)
    assert err < 1e-3  # sampling-limited


def test_adds_global_rigid_invariance():
    rng = np.random.default_rng(1)
    pts = rng.normal(size=(200, 3)) * 0.05
    gt = random_rigid_transform(rng, 0.5, 0.2)
    est = random_rigid_transform(rng, 0.5, 0.2)
    base = adds_error(pts, gt, est)
    g = random_rigid_transform(rng)
    moved = adds_error(pts, g.compose(gt), g.compose(est))
    assert abs(base - moved) < 1e-9


def test_adds_empty_model():
    with pytest.raises(EmptyModel):
        adds_error(np.zeros((0, 3)), RigidTransform.identity(),
                   RigidTransform.identity())


def test_sample_model_points_deterministic_cap():
    model = build_model(1, PrimitiveSpec("cylinder", (0.033, 0.12),
                                         ((0.0, 1.0, (1, 0, 0)),)), (128, 40))
    assert model.mesh.vertices.shape[0] > 3000
    a = sample_model_points(model.mesh)
    b = sample_model_points(model.mesh)
    assert a.shape == (3000, 3)
    assert np.array_equal(a, b)


def test_auc_all_zero():
    curve = adds_auc([0.0, 0.0, 0.0])
    assert curve.auc == 100.0
    assert curve.pct_below[0.01] == 100.0


def test_auc_single_error_half():
    curve = adds_auc([0.05])
    assert curve.auc == pytest.approx(50.0)


def test_auc_all_beyond_threshold():
    curve = adds_auc([0.2, 0.5])
    assert curve.auc == 0.0
    assert curve.pct_below[0.02] == 0.0


def test_auc_permutation_invariant():
    rng = np.random.default_rng(2)
    errs = rng.uniform(0, 0.2, 50)
    a = adds_auc(errs)
    b = adds_auc(rng.permutation(errs))
    assert a.auc == b.auc
    assert a.pct_below == b.pct_below


def test_auc_monotone_pct():
    curve = adds_auc([0.005, 0.015, 0.05])
    assert curve.pct_below[0.01] <= curve.pct_below[0.02]


def test_auc_empty():
    with pytest.raises(EmptyInput):
        adds_auc([])


def test_run_eval_roundtrip(tmp_path, suite_models, tabletop_frame):
    from rvpose.scenegen import save_models, save_scene
    from rvpose.search import SearchConfig, estimate_poses, result_to_json, timings_to_json

    dataset = tmp_path / "dataset"
    results = tmp_path / "results"
    save_models(dataset / "models", suite_models)
    save_scene(dataset / "scene_0000", tabletop_frame)

    # perfect results: ground truth echoed back
    payload = {"objects": [], "proposals_evaluated": 0}
    for s in tabletop_frame.ground_truth:
        payload["objects"].append({
            "object_id": s.object_id, "failed": False,
            "pose": [float(x) for x in s.pose.matrix3x4().reshape(-1)],
            "j_o": 0, "j_r": 0, "total": 0, "provenance": [0, 0],
            "proposal_index": 0, "proposals_evaluated": 1,
        })
    out = results / "scene_0000"
    out.mkdir(parents=True)
    (out / "results.json").write_text(json.dumps(payload))
    (out / "timings.json").write_text(json.dumps({"total_millis": 1234.0}))

    report = run_eval(dataset, results)
    assert report.warnings == 0
    assert report.all_row["auc"] == 100.0
    assert report.all_row["pct_1cm"] == 100.0
    assert report.all_row["mean_runtime_s"] == pytest.approx(1.234)
    for row in report.rows.values():
        assert row["auc"] == 100.0

    back = EvalReport.from_json(report.to_json())
    assert back.rows == report.rows
    assert back.all_row == report.all_row
    assert back.warnings == report.warnings

    assert "ALL" in report.format_table()


def test_run_eval_missing_object_warns(tmp_path, suite_models, tabletop_frame):
    import json as _json
    from rvpose.scenegen import save_models, save_scene

    dataset = tmp_path / "dataset"
    results = tmp_path / "results"
    save_models(dataset / "models", suite_models)
    save_scene(dataset / "scene_0000", tabletop_frame)
    payload = {"objects": [], "proposals_evaluated": 0}
    for s in tabletop_frame.ground_truth[1:]:  # drop the first object
        payload["objects"].append({
            "object_id": s.object_id, "failed": False,
            "pose": [float(x) for x in s.pose.matrix3x4().reshape(-1)],
            "j_o": 0, "j_r": 0, "total": 0, "provenance": [0, 0],
            "proposal_index": 0, "proposals_evaluated": 1,
        })
    out = results / "scene_0000"
    out.mkdir(parents=True)
    (out / "results.json").write_text(_json.dumps(payload))
    report = run_eval(dataset, results)
    assert report.warnings == 1
    missing_id = tabletop_frame.ground_truth[0].object_id
    assert missing_id not in report.rows
