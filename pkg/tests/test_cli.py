import json
from pathlib import Path

import numpy as np
import pytest

from rvpose.cli import main

SPEC_FILE = [
    {"object_id": 1, "kind": "cylinder", "dimensions": [0.033, 0.12],
     "color_bands": [[0.0, 1.0, [0.82, 0.06, 0.09]]],
     "tessellation": [24, 4]},
    {"object_id": 2, "kind": "cylinder", "dimensions": [0.033, 0.12],
     "color_bands": [[0.0, 1.0, [0.05, 0.55, 0.12]]],
     "tessellation": [24, 4]},
]

CONFIG_3DOF = {"mode": "3dof", "workspace": [-0.2, 0.2, -0.2, 0.2],
               "fixed_z": 0.0, "dt": 0.1}


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli_dataset")
    spec_path = root / "objects.json"
    spec_path.write_text(json.dumps(SPEC_FILE))
    rc = main(["gen", "--out", str(root / "data"), "--scenes", "2",
               "--seed", "3", "--objects", str(spec_path),
               "--noise", "0,0,0"])
    assert rc == 0
    return root / "data"


def test_gen_layout(dataset):
    assert (dataset / "models" / "models.json").exists()
    for i in range(2):
        d = dataset / f"scene_{i:04d}"
        for f in ("scene.json", "color.ppm", "depth.pgm", "labels.pgm"):
            assert (d / f).exists(), f
    meta = json.loads((dataset / "scene_0000" / "scene.json").read_text())
    assert {d["object_id"] for d in meta["detections"]} == {1, 2}
    assert len(meta["ground_truth"]) == 2


def test_estimate_eval_roundtrip(dataset, tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps(CONFIG_3DOF))
    for i in range(2):
        rc = main(["estimate", "--scene", str(dataset / f"scene_{i:04d}"),
                   "--models", str(dataset / "models"),
                   "--config", str(cfg),
                   "--out", str(tmp_path / "results" / f"scene_{i:04d}")])
        assert rc == 0
        out = tmp_path / "results" / f"scene_{i:04d}"
        assert (out / "results.json").exists()
        assert (out / "timings.json").exists()

    report_path = tmp_path / "report.json"
    rc = main(["eval", "--dataset", str(dataset),
               "--results", str(tmp_path / "results"),
               "--out", str(report_path)])
    assert rc == 0
    report = json.loads(report_path.read_text())
    assert report["warnings"] == 0
    assert report["all_row"]["pct_1cm"] == 100.0
    assert report["all_row"]["mean_runtime_s"] > 0


def test_estimate_cli_flag_overrides(dataset, tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps(CONFIG_3DOF))
    rc = main(["estimate", "--scene", str(dataset / "scene_0000"),
               "--models", str(dataset / "models"), "--config", str(cfg),
               "--out", str(tmp_path / "out_flags"),
               "--no-color", "--no-occluder-marking", "--no-refine",
               "--knn", "full", "--workers", "1", "--trace"])
    assert rc == 0
    trace = (tmp_path / "out_flags" / "trace.jsonl").read_text().splitlines()
    rows = [json.loads(l) for l in trace]
    assert rows
    assert all(r["total"] == r["j_o"] + r["j_r"] for r in rows)


def test_estimate_invalid_config_exit_2(dataset, tmp_path):
    cfg = tmp_path / "bad.json"
    cfg.write_text(json.dumps({"mode": "7dof"}))
    rc = main(["estimate", "--scene", str(dataset / "scene_0000"),
               "--models", str(dataset / "models"), "--config", str(cfg),
               "--out", str(tmp_path / "nope")])
    assert rc == 2


def test_estimate_missing_scene_exit_3(dataset, tmp_path):
    rc = main(["estimate", "--scene", str(tmp_path / "missing"),
               "--models", str(dataset / "models"),
               "--mode", "3dof", "--out", str(tmp_path / "nope")])
    assert rc == 3


def test_eval_missing_results_warns(dataset, tmp_path):
    (tmp_path / "results_empty").mkdir()
    rc = main(["eval", "--dataset", str(dataset),
               "--results", str(tmp_path / "results_empty"),
               "--out", str(tmp_path / "r.json")])
    assert rc == 3  # nothing evaluable


def test_bench_reports_figures(dataset, tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps(CONFIG_3DOF))
    out = tmp_path / "bench.json"
    rc = main(["bench", "--scene", str(dataset / "scene_0000"),
               "--models", str(dataset / "models"), "--config", str(cfg),
               "--repeat", "1", "--max-proposals", "12",
               "--json-out", str(out)])
    assert rc == 0
    figures = json.loads(out.read_text())
    assert figures["proposals"] == 12
    assert figures["proposals_per_sec"] > 0
    assert set(figures["stage_millis"]) == {"render", "refine", "rerender",
                                            "cost"}
    assert figures["knn_streamed_relation_bytes"] \
        < figures["knn_full_relation_bytes"]


def test_selftest_passes():
    assert main(["selftest"]) == 0
