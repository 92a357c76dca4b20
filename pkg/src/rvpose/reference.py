"""Naive reference implementations used to cross-check the batch paths.

These deliberately avoid the neighbors/cost modules: neighbor relations are
rebuilt row by row with explicit tie handling, and costs follow the outlier
definitions literally in two separate passes.  The CIEDE2000 formula is
shared with `colorspace` (it is validated against published vectors on its
own); everything else is structurally independent.
"""

from __future__ import annotations

import numpy as np

from .colorspace import ciede2000


def ref_knn(queries, target, k: int = 1):
    """Row-at-a-time exact kNN with (distance, index) ordering."""
    q = np.asarray(getattr(queries, "points", queries), dtype=np.float64)
    t = np.asarray(getattr(target, "points", target), dtype=np.float64)
    nq, nt = q.shape[0], t.shape[0]
    indices = np.full((nq, k), -1, dtype=np.int64)
    dists = np.full((nq, k), np.inf)
    if nt == 0:
        return indices, dists
    arange = np.arange(nt)
    for i in range(nq):
        d2 = ((t - q[i]) ** 2).sum(axis=1)
        order = np.lexsort((arange, d2))[:k]
        indices[i, : order.size] = order
        dists[i, : order.size] = d2[order]
    return indices, dists


def ref_costs(rendered_pts, rendered_lab, observed_pts, observed_lab,
              selected_mask, delta: float, tau_c: float, use_color: bool):
    """Literal two-pass explanation cost.

    Pass 1: each rendered point finds its nearest observed point (lowest
    index on ties); it is an outlier if that point is farther than delta or,
    in color mode, differs by more than tau_c; inliers mark their neighbor
    explained.  Pass 2: j_o counts selected observed points left unmarked.
    """
    rendered_pts = np.asarray(rendered_pts, dtype=np.float64).reshape(-1, 3)
    observed_pts = np.asarray(observed_pts, dtype=np.float64).reshape(-1, 3)
    n_obs = observed_pts.shape[0]
    explained = np.zeros(n_obs, dtype=bool)
    j_r = 0
    delta2 = delta * delta
    arange = np.arange(n_obs)
    for i in range(rendered_pts.shape[0]):
        if n_obs == 0:
            j_r += 1
            continue
        d2 = ((observed_pts - rendered_pts[i]) ** 2).sum(axis=1)
        j = int(np.lexsort((arange, d2))[0])
        if d2[j] > delta2:
            j_r += 1
        elif use_color and ciede2000(rendered_lab[i], observed_lab[j]) > tau_c:
            j_r += 1
        else:
            explained[j] = True
    selected = np.asarray(selected_mask, dtype=bool)
    j_o = int(np.count_nonzero(selected & ~explained))
    return j_o, j_r
