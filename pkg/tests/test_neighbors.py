import numpy as np
import pytest

from rvpose.neighbors import (
    KnnConfig,
    knn,
    knn_full,
    knn_streamed,
    last_relation_bytes,
)
from rvpose.reference import ref_knn


def test_three_point_case():
    q = np.array([[0.0, 0.0, 0.0]])
    t = np.array([[1.0, 0.0, 0.0], [0.0, 2.0, 0.0]])
    for fn in (knn_full, knn_streamed):
        res = fn(q, t, 1)
        assert res.indices[0, 0] == 0
        assert res.sq_dists[0, 0] == 1.0


def test_empty_target_sentinel():
    q = np.zeros((3, 3))
    t = np.zeros((0, 3))
    for fn in (knn_full, knn_streamed):
        res = fn(q, t, 2)
        assert (res.indices == -1).all()
        assert np.isinf(res.sq_dists).all()


def test_k_larger_than_target():
    rng = np.random.default_rng(0)
    q = rng.normal(size=(5, 3))
    t = rng.normal(size=(3, 3))
    for fn in (knn_full, knn_streamed):
        res = fn(q, t, 6)
        assert (res.indices[:, 3:] == -1).all()
        assert (np.diff(res.sq_dists[:, :3], axis=1) >= 0).all()
        assert sorted(res.indices[0, :3].tolist()) == [0, 1, 2]


def test_matches_bruteforce_oracle():
    rng = np.random.default_rng(1)
    q = rng.normal(size=(200, 3))
    t = rng.normal(size=(300, 3))
    idx, d2 = ref_knn(q, t, 3)
    for fn in (knn_full, knn_streamed):
        res = fn(q, t, 3)
        assert np.array_equal(res.indices, idx)
        assert np.array_equal(res.sq_dists, d2)


def test_strategy_equivalence_randomized():
    rng = np.random.default_rng(2)
    for _ in range(60):
        nq = int(rng.integers(1, 120))
        nt = int(rng.integers(1, 150))
        k = int(rng.integers(1, 6))
        q = rng.normal(size=(nq, 3))
        t = rng.normal(size=(nt, 3))
        a = knn_full(q, t, k)
        b = knn_streamed(q, t, k)
        assert np.array_equal(a.indices, b.indices)
        assert np.array_equal(a.sq_dists, b.sq_dists)


def test_tie_break_lowest_index():
    q = np.array([[0.0, 0.0, 0.0]])
    t = np.array([[1.0, 0.0, 0.0], [-1.0, 0.0, 0.0], [1.0, 0.0, 0.0]])
    for fn in (knn_full, knn_streamed):
        res = fn(q, t, 3)
        assert res.indices[0].tolist() == [0, 1, 2]
        assert np.allclose(res.sq_dists[0], 1.0)


def test_duplicate_points_equivalence():
    rng = np.random.default_rng(3)
    base = rng.integers(0, 3, size=(80, 3)).astype(float)  # many exact ties
    q = base[rng.integers(0, 80, 50)]
    a = knn_full(q, base, 4)
    b = knn_streamed(q, base, 4)
    assert np.array_equal(a.indices, b.indices)
    assert np.array_equal(a.sq_dists, b.sq_dists)


def test_monotone_under_target_growth():
    rng = np.random.default_rng(4)
    q = rng.normal(size=(50, 3))
    t = rng.normal(size=(100, 3))
    before = knn_streamed(q, t, 1).sq_dists[:, 0]
    grown = np.vstack([t, rng.normal(size=(1, 3))])
    after = knn_streamed(q, grown, 1).sq_dists[:, 0]
    assert (after <= before).all()


def test_relation_memory_instrumentation():
    q = np.random.default_rng(5).normal(size=(100, 3))
    t = np.random.default_rng(6).normal(size=(400, 3))
    knn_full(q, t, 1)
    full_bytes = last_relation_bytes("full")
    knn_streamed(q, t, 1)
    streamed_bytes = last_relation_bytes("streamed")
    assert full_bytes >= 100 * 400 * 8
    assert streamed_bytes < 0.25 * full_bytes


def test_knn_dispatch():
    q = np.zeros((1, 3))
    t = np.array([[1.0, 0.0, 0.0]])
    for strategy in ("full", "streamed"):
        res = knn(q, t, KnnConfig(strategy, 1))
        assert res.indices[0, 0] == 0


def test_config_validation():
    with pytest.raises(ValueError):
        KnnConfig("fancy", 1)
    with pytest.raises(ValueError):
        KnnConfig("full", 0)
