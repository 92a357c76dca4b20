"""Command line interface.

Subcommands: gen (synthesize scenes), estimate (run the pose search on one
scene), eval (score results against ground truth), bench (timings and
neighbor-memory figures), selftest (color/kNN/cost oracle checks).

Exit codes: 0 success, 2 invalid config, 3 dataset error, 4 estimation
failures present.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import neighbors, reference
from .colorspace import ciede2000, srgb_to_lab
from .errors import ConfigError, DatasetError, RvposeError
from .metrics import run_eval
from .scenegen import (
    NoiseModel,
    PrimitiveSpec,
    build_model,
    default_object_suite,
    generate_scene,
    load_models,
    load_scene,
    occluded_scene_spec,
    random_scene_spec,
    save_models,
    save_scene,
)
from .search import SearchConfig, estimate_poses, result_to_json, timings_to_json

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATASET = 3
EXIT_ESTIMATION = 4


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except DatasetError as e:
        print(f"dataset error: {e}", file=sys.stderr)
        return EXIT_DATASET
    except RvposeError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_DATASET


def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="rvpose")
    sub = p.add_subparsers(required=True)

    g = sub.add_parser("gen", help="generate synthetic scenes")
    g.add_argument("--out", required=True)
    g.add_argument("--scenes", type=int, default=1)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--objects", help="JSON primitive spec file")
    g.add_argument("--noise", default="0,0,0",
                   help="sigma,dropout,jitter")
    g.add_argument("--occlude-one", action="store_true",
                   help="force >=30%% view-occlusion of one object")
    g.set_defaults(func=_cmd_gen)

    e = sub.add_parser("estimate", help="estimate poses for one scene")
    e.add_argument("--scene", required=True)
    e.add_argument("--models", required=True)
    e.add_argument("--mode", choices=["3dof", "6dof"])
    e.add_argument("--config", help="JSON file with SearchConfig fields")
    e.add_argument("--out", required=True)
    e.add_argument("--no-color", action="store_true")
    e.add_argument("--no-occluder-marking", action="store_true")
    e.add_argument("--no-refine", action="store_true")
    e.add_argument("--knn", choices=["full", "streamed"])
    e.add_argument("--workers", type=int)
    e.add_argument("--trace", action="store_true")
    e.set_defaults(func=_cmd_estimate)

    v = sub.add_parser("eval", help="score results against ground truth")
    v.add_argument("--dataset", required=True)
    v.add_argument("--results", required=True)
    v.add_argument("--out", default="report.json")
    v.set_defaults(func=_cmd_eval)

    b = sub.add_parser("bench", help="stage timings and memory figures")
    b.add_argument("--scene", required=True)
    b.add_argument("--models", required=True)
    b.add_argument("--repeat", type=int, default=1)
    b.add_argument("--mode", choices=["3dof", "6dof"])
    b.add_argument("--config")
    b.add_argument("--workers", type=int)
    b.add_argument("--max-proposals", type=int,
                   help="uniformly subsample the flat proposal list")
    b.add_argument("--json-out", help="also write figures to this file")
    b.set_defaults(func=_cmd_bench)

    s = sub.add_parser("selftest", help="color, kNN, and cost oracle checks")
    s.set_defaults(func=_cmd_selftest)
    return p


# ---------------------------------------------------------------------------

def _cmd_gen(args) -> int:
    out = Path(args.out)
    try:
        sigma, dropout, jitter = (float(x) for x in args.noise.split(","))
    except ValueError as e:
        raise ConfigError(f"bad --noise value {args.noise!r}") from e
    noise = NoiseModel(sigma, dropout, jitter)
    if args.objects:
        models = _load_spec_file(args.objects)
    else:
        models = default_object_suite()
    save_models(out / "models", models)
    ids = sorted(models)
    for i in range(args.scenes):
        seed = args.seed + i
        if args.occlude_one:
            target = ids[seed % len(ids)]
            occluder = ids[(seed + 1) % len(ids)]
            spec = occluded_scene_spec(models, target, occluder, seed)
            spec = type(spec)(spec.placements, spec.table_extent,
                              spec.intrinsics, noise, seed)
        else:
            spec = random_scene_spec(models, seed, noise=noise)
        frame = generate_scene(spec, models)
        save_scene(out / f"scene_{i:04d}", frame)
    print(f"wrote {args.scenes} scene(s) under {out}")
    return EXIT_OK


def _load_spec_file(path) -> dict:
    try:
        records = json.loads(Path(path).read_text())
    except FileNotFoundError as e:
        raise DatasetError(f"spec file not found: {path}") from e
    except json.JSONDecodeError as e:
        raise ConfigError(f"bad spec file {path}: {e}") from e
    models = {}
    for rec in records:
        spec = PrimitiveSpec(
            rec["kind"], tuple(rec["dimensions"]),
            tuple((b[0], b[1], tuple(b[2])) for b in rec["color_bands"]),
        )
        tess = rec.get("tessellation", 32)
        tess = tuple(tess) if isinstance(tess, list) else tess
        models[rec["object_id"]] = build_model(rec["object_id"], spec, tess)
    return models


def _load_config(args) -> SearchConfig:
    data = {}
    if args.config:
        try:
            data = json.loads(Path(args.config).read_text())
        except FileNotFoundError as e:
            raise ConfigError(f"config file not found: {args.config}") from e
        except json.JSONDecodeError as e:
            raise ConfigError(f"bad config file: {e}") from e
    if args.mode:
        data["mode"] = args.mode
    if getattr(args, "no_color", False):
        data["use_color"] = False
    if getattr(args, "no_occluder_marking", False):
        data["occluder_marking"] = False
    if getattr(args, "no_refine", False):
        data["refine"] = False
    if getattr(args, "knn", None):
        data["knn_strategy"] = args.knn
    if args.workers is not None:
        if args.workers < 1:
            raise ConfigError("workers must be >= 1")
        data["workers"] = args.workers
    if data.get("mode", "6dof") == "3dof" and data.get("workspace") is None:
        data["workspace"] = [-0.4, 0.4, -0.4, 0.4]
    return SearchConfig.from_dict(data)


def _cmd_estimate(args) -> int:
    cfg = _load_config(args)
    frame = load_scene(args.scene)
    models = load_models(args.models)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.trace:
        cfg = SearchConfig.from_dict(
            {**cfg.to_dict(), "trace_path": str(out / "trace.jsonl")})
    result = estimate_poses(frame, models, cfg)
    (out / "results.json").write_text(result_to_json(result))
    (out / "timings.json").write_text(timings_to_json(result))
    failed = [e.object_id for e in result.estimates if e.failed]
    if failed:
        print(f"estimation failed for objects: {failed}", file=sys.stderr)
        return EXIT_ESTIMATION
    print(f"estimated {len(result.estimates)} object(s), "
          f"{result.proposals_evaluated} proposals, "
          f"{result.total_millis:.0f} ms")
    return EXIT_OK


def _cmd_eval(args) -> int:
    report = run_eval(args.dataset, args.results)
    Path(args.out).write_text(report.to_json())
    print(report.format_table())
    return EXIT_OK


def _cmd_bench(args) -> int:
    from dataclasses import replace

    cfg = _load_config(args)
    frame = load_scene(args.scene)
    models = load_models(args.models)
    if args.max_proposals:
        cfg = replace(cfg, max_proposals=args.max_proposals)
    totals = []
    stages = []
    proposals = 0
    result = None
    for _ in range(max(1, args.repeat)):
        t0 = time.perf_counter()
        result = estimate_poses(frame, models, cfg)
        totals.append(time.perf_counter() - t0)
        stages.append(result.stage_millis)
        proposals = result.proposals_evaluated
    mean_total = float(np.mean(totals))
    mean_stage = {k: float(np.mean([s[k] for s in stages])) for k in stages[0]}
    # peak distance-relation bytes per proposal, at this scene's cloud sizes
    n_ren = result.max_rendered_points
    n_obs = result.observed_points
    figures = {
        "proposals": int(proposals),
        "proposals_per_sec": proposals / mean_total if mean_total else 0.0,
        "total_seconds": mean_total,
        "stage_millis": mean_stage,
        "workers": cfg.workers,
        "rendered_points_max": int(n_ren),
        "observed_points": int(n_obs),
        "knn_full_relation_bytes": int(n_ren * n_obs * 8),
        "knn_streamed_relation_bytes": int(n_ren * 16 + 16),
        "knn_last_relation_bytes": neighbors.last_relation_bytes(),
    }
    print(f"proposals/sec: {figures['proposals_per_sec']:.1f} "
          f"({proposals} proposals, {mean_total:.2f} s, "
          f"workers={cfg.workers})")
    for k, v in mean_stage.items():
        print(f"  stage {k:<9} {v:8.1f} ms")
    print(f"  peak kNN relation bytes: full~{figures['knn_full_relation_bytes']:,} "
          f"streamed~{figures['knn_streamed_relation_bytes']:,}")
    if args.json_out:
        Path(args.json_out).write_text(json.dumps(figures, sort_keys=True))
    return EXIT_OK


def _cmd_selftest(args) -> int:
    failures = 0

    # CIEDE2000 published vector suite
    from .selftest_data import CIEDE2000_VECTORS
    worst = 0.0
    for l1, a1, b1, l2, a2, b2, expected in CIEDE2000_VECTORS:
        got = ciede2000(np.array([l1, a1, b1]), np.array([l2, a2, b2]))
        worst = max(worst, abs(got - expected))
    ok = worst < 1e-4
    failures += not ok
    print(f"[{'pass' if ok else 'FAIL'}] ciede2000 vectors "
          f"(worst |err| = {worst:.2e})")

    # white point sanity
    lab = srgb_to_lab(np.array([1.0, 1.0, 1.0]))
    ok = abs(lab[0] - 100.0) < 0.01 and abs(lab[1]) < 0.01 and abs(lab[2]) < 0.01
    failures += not ok
    print(f"[{'pass' if ok else 'FAIL'}] sRGB white -> Lab(100, 0, 0)")

    # kNN strategy equivalence vs reference
    rng = np.random.default_rng(0)
    ok = True
    for trial in range(50):
        q = rng.normal(size=(rng.integers(1, 60), 3))
        t = rng.normal(size=(rng.integers(1, 80), 3))
        kk = int(rng.integers(1, 5))
        full = neighbors.knn_full(q, t, kk)
        streamed = neighbors.knn_streamed(q, t, kk)
        ref_idx, ref_d2 = reference.ref_knn(q, t, kk)
        if not (np.array_equal(full.indices, streamed.indices)
                and np.array_equal(full.sq_dists, streamed.sq_dists)
                and np.array_equal(full.indices, ref_idx)
                and np.array_equal(full.sq_dists, ref_d2)):
            ok = False
            break
    failures += not ok
    print(f"[{'pass' if ok else 'FAIL'}] kNN full == streamed == reference")

    # cost oracle spot checks
    from .cost import CostParams, rendered_cost
    from .model import LabeledCloud
    ok = True
    for trial in range(30):
        nr = int(rng.integers(1, 80))
        no = int(rng.integers(1, 120))
        r_pts = rng.normal(scale=0.05, size=(nr, 3))
        o_pts = rng.normal(scale=0.05, size=(no, 3))
        r_lab = rng.uniform(0, 100, size=(nr, 3))
        o_lab = rng.uniform(0, 100, size=(no, 3))
        params = CostParams(0.05, 20.0, bool(trial % 2))
        rc = LabeledCloud(r_pts, r_lab, np.zeros((nr, 2), dtype=np.int32))
        oc = LabeledCloud(o_pts, o_lab, np.zeros((no, 2), dtype=np.int32))
        j_r, explained = rendered_cost(rc, oc, params)
        sel = rng.random(no) < 0.5
        j_o = int(np.count_nonzero(sel & ~explained))
        ref_o, ref_r = reference.ref_costs(
            r_pts, r_lab, o_pts, o_lab, sel,
            params.delta, params.tau_c, params.use_color)
        if (j_r, j_o) != (ref_r, ref_o):
            ok = False
            break
    failures += not ok
    print(f"[{'pass' if ok else 'FAIL'}] cost counts == two-pass oracle")

    print("selftest:", "all checks passed" if failures == 0
          else f"{failures} check(s) FAILED")
    return EXIT_OK if failures == 0 else 1


if __name__ == "__main__":
    sys.exit(main())
