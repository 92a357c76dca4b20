"""Exact batch k-nearest-neighbor search, two strategies.

Both strategies return identical results: squared distances with ties
broken by lowest target index.  The full strategy materializes the whole
pairwise distance relation at once (memory grows with |queries| x |target|);
the streamed strategy keeps one bounded best-k set per query (memory
O(|queries| * k)).  No spatial index is used.

The peak bytes materialized for the distance relation by the most recent
call of each strategy are recorded and readable via `last_relation_bytes`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numba
import numpy as np

_SENTINEL_INDEX = -1

_last_relation_bytes = {"full": 0, "streamed": 0}


def last_relation_bytes(strategy: str | None = None):
    """Instrumentation hook: relation bytes allocated by the last call."""
    if strategy is None:
        return dict(_last_relation_bytes)
    return _last_relation_bytes[strategy]


@dataclass(frozen=True)
class KnnConfig:
    strategy: str = "streamed"  # "full" | "streamed"
    k: int = 1

    def __post_init__(self):
        if self.strategy not in ("full", "streamed"):
            raise ValueError(f"unknown strategy {self.strategy!r}")
        if self.k < 1:
            raise ValueError("k must be >= 1")


@dataclass(frozen=True)
class NeighborResult:
    """Per query: indices of the k nearest target points and squared
    distances, both (Q, k); missing neighbors hold index -1 and +inf."""

    indices: np.ndarray
    sq_dists: np.ndarray

    @property
    def nearest_index(self) -> np.ndarray:
        return self.indices[:, 0]

    @property
    def nearest_sq_dist(self) -> np.ndarray:
        return self.sq_dists[:, 0]


def _pts(cloud) -> np.ndarray:
    p = getattr(cloud, "points", cloud)
    return np.ascontiguousarray(p, dtype=np.float64).reshape(-1, 3)


def knn(queries, target, cfg: KnnConfig) -> NeighborResult:
    fn = knn_full if cfg.strategy == "full" else knn_streamed
    return fn(queries, target, cfg.k)


def knn_full(queries, target, k: int = 1) -> NeighborResult:
    """Materialize all pairwise squared distances, then select the k best."""
    q = _pts(queries)
    t = _pts(target)
    nq, nt = q.shape[0], t.shape[0]
    if nq == 0 or nt == 0:
        _last_relation_bytes["full"] = 0
        return _empty_result(nq, k)

    d2 = (q[:, 0:1] - t[:, 0]) ** 2
    d2 += (q[:, 1:2] - t[:, 1]) ** 2
    d2 += (q[:, 2:3] - t[:, 2]) ** 2
    relation_bytes = d2.nbytes

    if k == 1:
        idx = np.argmin(d2, axis=1)  # first occurrence -> lowest index on ties
        best = d2[np.arange(nq), idx]
        indices = idx.astype(np.int64)[:, None]
        dists = best[:, None]
    else:
        order = np.argsort(d2, axis=1, kind="stable")[:, :k]
        relation_bytes += nq * nt * 8  # argsort index matrix
        dists = np.take_along_axis(d2, order, axis=1)
        indices = order.astype(np.int64)
        if nt < k:
            pad_i = np.full((nq, k - nt), _SENTINEL_INDEX, dtype=np.int64)
            pad_d = np.full((nq, k - nt), np.inf)
            indices = np.hstack([indices, pad_i])
            dists = np.hstack([dists, pad_d])
    _last_relation_bytes["full"] = relation_bytes
    return NeighborResult(indices, dists)


@numba.njit(cache=True)
def _streamed_kernel(q, t, k, out_idx, out_d2):
    nq = q.shape[0]
    nt = t.shape[0]
    for i in range(nq):
        qx = q[i, 0]
        qy = q[i, 1]
        qz = q[i, 2]
        cnt = 0
        for j in range(nt):
            dx = t[j, 0] - qx
            dy = t[j, 1] - qy
            dz = t[j, 2] - qz
            d2 = dx * dx + dy * dy + dz * dz
            if cnt < k:
                pos = cnt
                while pos > 0 and out_d2[i, pos - 1] > d2:
                    out_d2[i, pos] = out_d2[i, pos - 1]
                    out_idx[i, pos] = out_idx[i, pos - 1]
                    pos -= 1
                out_d2[i, pos] = d2
                out_idx[i, pos] = j
                cnt += 1
            elif d2 < out_d2[i, k - 1]:
                pos = k - 1
                while pos > 0 and out_d2[i, pos - 1] > d2:
                    out_d2[i, pos] = out_d2[i, pos - 1]
                    out_idx[i, pos] = out_idx[i, pos - 1]
                    pos -= 1
                out_d2[i, pos] = d2
                out_idx[i, pos] = j


def knn_streamed(queries, target, k: int = 1) -> NeighborResult:
    """Stream over the target per query with a bounded best-k set."""
    q = _pts(queries)
    t = _pts(target)
    nq, nt = q.shape[0], t.shape[0]
    if nq == 0 or nt == 0:
        _last_relation_bytes["streamed"] = 0
        return _empty_result(nq, k)
    out_idx = np.full((nq, k), _SENTINEL_INDEX, dtype=np.int64)
    out_d2 = np.full((nq, k), np.inf)
    _streamed_kernel(q, t, k, out_idx, out_d2)
    # outputs plus one bounded per-query insertion buffer
    _last_relation_bytes["streamed"] = out_idx.nbytes + out_d2.nbytes + 16 * k
    return NeighborResult(out_idx, out_d2)


def _empty_result(nq: int, k: int) -> NeighborResult:
    return NeighborResult(
        np.full((nq, k), _SENTINEL_INDEX, dtype=np.int64),
        np.full((nq, k), np.inf),
    )
