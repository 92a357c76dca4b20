"""Point-to-point ICP and batched many-to-many generalized ICP.

GICP models the local surface around every point as a regularized Gaussian
(eigenvalues replaced by (epsilon, 1, 1)) and minimizes the sum of squared
Mahalanobis residuals d^T (C_b + R C_a R^T)^-1 d by Gauss-Newton steps on
the SE(3) tangent, with step-halving and re-orthonormalization per step.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numba
import numpy as np

from .errors import TooFewPoints
from .geometry import Pose3Dof, RigidTransform, canonical_yaw, orthonormalize, rotation_angle, so3_exp
from . import parallel
from .neighbors import knn_full, knn_streamed

# Incremented on every covariance build; m2m resets and reads it to verify
# target covariances are shared rather than recomputed.
instrumentation = {"covariance_builds": 0, "target_covariance_builds": 0}


@dataclass(frozen=True)
class GicpConfig:
    k_covariance: int = 20
    epsilon: float = 1e-3
    max_iterations: int = 30
    translation_tolerance: float = 1e-4
    rotation_tolerance: float = 1e-3
    max_correspondence_distance: float = 0.05

    def __post_init__(self):
        if self.k_covariance < 4:
            raise ValueError("k_covariance must be >= 4")
        if not (0.0 < self.epsilon < 1.0):
            raise ValueError("epsilon must lie in (0, 1)")
        if min(self.translation_tolerance, self.rotation_tolerance,
               self.max_correspondence_distance) <= 0:
            raise ValueError("tolerances must be positive")


@dataclass(frozen=True)
class RegistrationResult:
    transform: RigidTransform  # source -> target correction
    iterations: int
    final_residual: float      # RMS Euclidean residual over correspondences
    converged: bool
    failure: str | None = None
    objective_trace: tuple = field(default=())  # (start, accepted) per step


def _pts(cloud) -> np.ndarray:
    p = getattr(cloud, "points", cloud)
    return np.ascontiguousarray(p, dtype=np.float64).reshape(-1, 3)


def _rms_residual(src, tgt, t: RigidTransform, gate: float) -> float:
    moved = t.apply(src)
    nn = knn_streamed(moved, tgt, 1)
    d2 = nn.nearest_sq_dist
    mask = d2 <= gate * gate
    if not mask.any():
        return float("inf")
    return float(np.sqrt(d2[mask].mean()))


def icp_point2point(source, target, init: RigidTransform,
                    cfg: GicpConfig) -> RegistrationResult:
    """Classic ICP: gated nearest correspondences + closed-form SVD fit."""
    src = _pts(source)
    tgt = _pts(target)
    gate = cfg.max_correspondence_distance
    if src.shape[0] < 3 or tgt.shape[0] < 3:
        return RegistrationResult(init, 0, float("inf"), False,
                                  "degenerate_correspondences")
    t = init
    for it in range(1, cfg.max_iterations + 1):
        moved = t.apply(src)
        nn = knn_streamed(moved, tgt, 1)
        mask = nn.nearest_sq_dist <= gate * gate
        if int(mask.sum()) < 3:
            return RegistrationResult(init, it, float("inf"), False,
                                      "degenerate_correspondences")
        a = src[mask]
        b = tgt[nn.nearest_index[mask]]
        ca = a.mean(axis=0)
        cb = b.mean(axis=0)
        h = (a - ca).T @ (b - cb)
        u, _, vt = np.linalg.svd(h)
        r = vt.T @ u.T
        if np.linalg.det(r) < 0:
            vt[-1, :] = -vt[-1, :]
            r = vt.T @ u.T
        t_new = RigidTransform(r, cb - r @ ca)
        dt = float(np.linalg.norm(t_new.translation - t.translation))
        dr = rotation_angle(t_new.rotation @ t.rotation.T)
        t = t_new
        if dt < cfg.translation_tolerance and dr < cfg.rotation_tolerance:
            res = float(np.sqrt(
                ((b - t.apply(a)) ** 2).sum(axis=1).mean()))
            return RegistrationResult(t, it, res, True)
    res = _rms_residual(src, tgt, t, gate)
    return RegistrationResult(t, cfg.max_iterations, res, False)


@numba.njit(cache=True)
def _covariance_kernel(pts, k, epsilon, out):
    """Regularized neighborhood covariances.

    Replacing the ascending eigenvalues by (epsilon, 1, 1) equals
    I - (1 - epsilon) * v0 v0^T with v0 the smallest eigenvector, so only
    that eigenvector is computed (Jacobi sweeps on the 3x3 covariance).
    """
    n = pts.shape[0]
    nbr_d2 = np.empty(k)
    nbr_idx = np.empty(k, dtype=np.int64)
    for i in range(n):
        cnt = 0
        for j in range(n):
            dx = pts[j, 0] - pts[i, 0]
            dy = pts[j, 1] - pts[i, 1]
            dz = pts[j, 2] - pts[i, 2]
            d2 = dx * dx + dy * dy + dz * dz
            if cnt < k:
                pos = cnt
                while pos > 0 and nbr_d2[pos - 1] > d2:
                    nbr_d2[pos] = nbr_d2[pos - 1]
                    nbr_idx[pos] = nbr_idx[pos - 1]
                    pos -= 1
                nbr_d2[pos] = d2
                nbr_idx[pos] = j
                cnt += 1
            elif d2 < nbr_d2[k - 1]:
                pos = k - 1
                while pos > 0 and nbr_d2[pos - 1] > d2:
                    nbr_d2[pos] = nbr_d2[pos - 1]
                    nbr_idx[pos] = nbr_idx[pos - 1]
                    pos -= 1
                nbr_d2[pos] = d2
                nbr_idx[pos] = j
        mx = my = mz = 0.0
        for q in range(k):
            mx += pts[nbr_idx[q], 0]
            my += pts[nbr_idx[q], 1]
            mz += pts[nbr_idx[q], 2]
        mx /= k
        my /= k
        mz /= k
        a = np.zeros((3, 3))
        for q in range(k):
            dx = pts[nbr_idx[q], 0] - mx
            dy = pts[nbr_idx[q], 1] - my
            dz = pts[nbr_idx[q], 2] - mz
            a[0, 0] += dx * dx
            a[0, 1] += dx * dy
            a[0, 2] += dx * dz
            a[1, 1] += dy * dy
            a[1, 2] += dy * dz
            a[2, 2] += dz * dz
        for u in range(3):
            for v in range(3):
                a[u, v] = a[u, v] / k if u <= v else a[v, u] / k
        a[1, 0] = a[0, 1]
        a[2, 0] = a[0, 2]
        a[2, 1] = a[1, 2]

        # Jacobi diagonalization, accumulating eigenvectors in vmat
        vmat = np.eye(3)
        for _sweep in range(16):
            off = abs(a[0, 1]) + abs(a[0, 2]) + abs(a[1, 2])
            scale = abs(a[0, 0]) + abs(a[1, 1]) + abs(a[2, 2]) + 1e-300
            if off <= 1e-14 * scale:
                break
            for p in range(2):
                for q in range(p + 1, 3):
                    apq = a[p, q]
                    if apq == 0.0:
                        continue
                    theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                    if theta >= 0.0:
                        tt = 1.0 / (theta + np.sqrt(theta * theta + 1.0))
                    else:
                        tt = -1.0 / (-theta + np.sqrt(theta * theta + 1.0))
                    c = 1.0 / np.sqrt(tt * tt + 1.0)
                    s = tt * c
                    for r_ in range(3):
                        tmp = a[r_, p]
                        a[r_, p] = c * tmp - s * a[r_, q]
                        a[r_, q] = s * tmp + c * a[r_, q]
                    for r_ in range(3):
                        tmp = a[p, r_]
                        a[p, r_] = c * tmp - s * a[q, r_]
                        a[q, r_] = s * tmp + c * a[q, r_]
                    for r_ in range(3):
                        tmp = vmat[r_, p]
                        vmat[r_, p] = c * tmp - s * vmat[r_, q]
                        vmat[r_, q] = s * tmp + c * vmat[r_, q]
        m = 0
        if a[1, 1] < a[m, m]:
            m = 1
        if a[2, 2] < a[m, m]:
            m = 2
        v0x, v0y, v0z = vmat[0, m], vmat[1, m], vmat[2, m]
        f = 1.0 - epsilon
        out[i, 0, 0] = 1.0 - f * v0x * v0x
        out[i, 0, 1] = -f * v0x * v0y
        out[i, 0, 2] = -f * v0x * v0z
        out[i, 1, 0] = out[i, 0, 1]
        out[i, 1, 1] = 1.0 - f * v0y * v0y
        out[i, 1, 2] = -f * v0y * v0z
        out[i, 2, 0] = out[i, 0, 2]
        out[i, 2, 1] = out[i, 1, 2]
        out[i, 2, 2] = 1.0 - f * v0z * v0z


def estimate_covariances(cloud, k_covariance: int = 20,
                         epsilon: float = 1e-3) -> np.ndarray:
    """Per-point covariance of the k nearest neighbors (self included),
    eigenvalues replaced by (epsilon, 1, 1) ascending, recomposed."""
    pts = _pts(cloud)
    n = pts.shape[0]
    if n <= k_covariance:
        raise TooFewPoints(f"need more than {k_covariance} points, have {n}")
    instrumentation["covariance_builds"] += 1
    out = np.empty((n, 3, 3))
    _covariance_kernel(pts, k_covariance, epsilon, out)
    return out


@numba.njit(cache=True)
def _gicp_linearize(src, tgt, ca, cb, r, t, gate2, h, g, corr, w_buf):
    """One linearization pass: gated nearest correspondences, per-pair
    weights W = inv(Cb + R Ca R^T), and the Gauss-Newton normal equations
    for xi = (omega, v) with J = [ [p]x  -I ].

    Fills corr (target index or -1) and w_buf per source point; returns
    (fixed-association objective, correspondence count).
    """
    n = src.shape[0]
    nt = tgt.shape[0]
    f0 = 0.0
    n_corr = 0
    for i in range(n):
        ax, ay, az = src[i, 0], src[i, 1], src[i, 2]
        px = r[0, 0] * ax + r[0, 1] * ay + r[0, 2] * az + t[0]
        py = r[1, 0] * ax + r[1, 1] * ay + r[1, 2] * az + t[1]
        pz = r[2, 0] * ax + r[2, 1] * ay + r[2, 2] * az + t[2]
        best = np.inf
        bj = -1
        for j in range(nt):
            dx = tgt[j, 0] - px
            dy = tgt[j, 1] - py
            dz = tgt[j, 2] - pz
            d2 = dx * dx + dy * dy + dz * dz
            if d2 < best:
                best = d2
                bj = j
        if bj < 0 or best > gate2:
            corr[i] = -1
            continue
        corr[i] = bj
        n_corr += 1

        # m = cb[bj] + r @ ca[i] @ r.T
        m = np.empty((3, 3))
        rc = np.empty((3, 3))
        for u in range(3):
            for v in range(3):
                s = 0.0
                for w_ in range(3):
                    s += r[u, w_] * ca[i, w_, v]
                rc[u, v] = s
        for u in range(3):
            for v in range(3):
                s = 0.0
                for w_ in range(3):
                    s += rc[u, w_] * r[v, w_]
                m[u, v] = cb[bj, u, v] + s

        # symmetric 3x3 inverse via adjugate
        det = (m[0, 0] * (m[1, 1] * m[2, 2] - m[1, 2] * m[2, 1])
               - m[0, 1] * (m[1, 0] * m[2, 2] - m[1, 2] * m[2, 0])
               + m[0, 2] * (m[1, 0] * m[2, 1] - m[1, 1] * m[2, 0]))
        if det <= 0.0 or not np.isfinite(det):
            corr[i] = -1
            n_corr -= 1
            continue
        inv_det = 1.0 / det
        w = w_buf[i]
        w[0, 0] = (m[1, 1] * m[2, 2] - m[1, 2] * m[2, 1]) * inv_det
        w[0, 1] = (m[0, 2] * m[2, 1] - m[0, 1] * m[2, 2]) * inv_det
        w[0, 2] = (m[0, 1] * m[1, 2] - m[0, 2] * m[1, 1]) * inv_det
        w[1, 0] = (m[1, 2] * m[2, 0] - m[1, 0] * m[2, 2]) * inv_det
        w[1, 1] = (m[0, 0] * m[2, 2] - m[0, 2] * m[2, 0]) * inv_det
        w[1, 2] = (m[0, 2] * m[1, 0] - m[0, 0] * m[1, 2]) * inv_det
        w[2, 0] = (m[1, 0] * m[2, 1] - m[1, 1] * m[2, 0]) * inv_det
        w[2, 1] = (m[0, 1] * m[2, 0] - m[0, 0] * m[2, 1]) * inv_det
        w[2, 2] = (m[0, 0] * m[1, 1] - m[0, 1] * m[1, 0]) * inv_det

        dx = tgt[bj, 0] - px
        dy = tgt[bj, 1] - py
        dz = tgt[bj, 2] - pz

        # J = [ S  -I ] with S = [p]x; jr holds one row of J (6 entries)
        jrow = np.empty((3, 6))
        jrow[0, 0] = 0.0
        jrow[0, 1] = -pz
        jrow[0, 2] = py
        jrow[1, 0] = pz
        jrow[1, 1] = 0.0
        jrow[1, 2] = -px
        jrow[2, 0] = -py
        jrow[2, 1] = px
        jrow[2, 2] = 0.0
        for u in range(3):
            for v in range(3):
                jrow[u, 3 + v] = -1.0 if u == v else 0.0

        # wd = W d; f0 += d^T W d; g += -J^T (W d); h += J^T W J
        wd0 = w[0, 0] * dx + w[0, 1] * dy + w[0, 2] * dz
        wd1 = w[1, 0] * dx + w[1, 1] * dy + w[1, 2] * dz
        wd2 = w[2, 0] * dx + w[2, 1] * dy + w[2, 2] * dz
        f0 += dx * wd0 + dy * wd1 + dz * wd2
        for u in range(6):
            g[u] -= jrow[0, u] * wd0 + jrow[1, u] * wd1 + jrow[2, u] * wd2
        wj = np.empty((3, 6))
        for a_ in range(3):
            for u in range(6):
                wj[a_, u] = (w[a_, 0] * jrow[0, u] + w[a_, 1] * jrow[1, u]
                             + w[a_, 2] * jrow[2, u])
        for u in range(6):
            for v in range(6):
                h[u, v] += (jrow[0, u] * wj[0, v] + jrow[1, u] * wj[1, v]
                            + jrow[2, u] * wj[2, v])
    return f0, n_corr


@numba.njit(cache=True)
def _so3_exp_fast(wx, wy, wz):
    """Rodrigues formula on a rotation vector, allocation-light."""
    theta2 = wx * wx + wy * wy + wz * wz
    theta = np.sqrt(theta2)
    out = np.empty((3, 3))
    if theta < 1e-10:
        a, b = 1.0, 0.5
    else:
        a = np.sin(theta) / theta
        b = (1.0 - np.cos(theta)) / theta2
    out[0, 0] = 1.0 + b * (-wz * wz - wy * wy)
    out[0, 1] = -a * wz + b * wx * wy
    out[0, 2] = a * wy + b * wx * wz
    out[1, 0] = a * wz + b * wx * wy
    out[1, 1] = 1.0 + b * (-wz * wz - wx * wx)
    out[1, 2] = -a * wx + b * wy * wz
    out[2, 0] = -a * wy + b * wx * wz
    out[2, 1] = a * wx + b * wy * wz
    out[2, 2] = 1.0 + b * (-wy * wy - wx * wx)
    return out


@numba.njit(cache=True)
def _renorm_rotation(r):
    """Cross-product re-orthonormalization (rows stay within 1e-12 of a
    rotation across any realistic iteration count)."""
    out = np.empty((3, 3))
    n0 = np.sqrt(r[0, 0] ** 2 + r[0, 1] ** 2 + r[0, 2] ** 2)
    x0, x1, x2 = r[0, 0] / n0, r[0, 1] / n0, r[0, 2] / n0
    y0, y1, y2 = r[1, 0], r[1, 1], r[1, 2]
    dot = x0 * y0 + x1 * y1 + x2 * y2
    y0 -= dot * x0
    y1 -= dot * x1
    y2 -= dot * x2
    ny = np.sqrt(y0 * y0 + y1 * y1 + y2 * y2)
    y0, y1, y2 = y0 / ny, y1 / ny, y2 / ny
    z0 = x1 * y2 - x2 * y1
    z1 = x2 * y0 - x0 * y2
    z2 = x0 * y1 - x1 * y0
    out[0, 0], out[0, 1], out[0, 2] = x0, x1, x2
    out[1, 0], out[1, 1], out[1, 2] = y0, y1, y2
    out[2, 0], out[2, 1], out[2, 2] = z0, z1, z2
    return out


@numba.njit(cache=True)
def _gicp_objective(src, tgt, corr, w_buf, r, t):
    """Fixed-association objective at a trial transform."""
    f = 0.0
    for i in range(src.shape[0]):
        j = corr[i]
        if j < 0:
            continue
        ax, ay, az = src[i, 0], src[i, 1], src[i, 2]
        px = r[0, 0] * ax + r[0, 1] * ay + r[0, 2] * az + t[0]
        py = r[1, 0] * ax + r[1, 1] * ay + r[1, 2] * az + t[1]
        pz = r[2, 0] * ax + r[2, 1] * ay + r[2, 2] * az + t[2]
        dx = tgt[j, 0] - px
        dy = tgt[j, 1] - py
        dz = tgt[j, 2] - pz
        w = w_buf[i]
        wd0 = w[0, 0] * dx + w[0, 1] * dy + w[0, 2] * dz
        wd1 = w[1, 0] * dx + w[1, 1] * dy + w[1, 2] * dz
        wd2 = w[2, 0] * dx + w[2, 1] * dy + w[2, 2] * dz
        f += dx * wd0 + dy * wd1 + dz * wd2
    return f


def gicp_align(source, target, source_covs, target_covs,
               init: RigidTransform, cfg: GicpConfig) -> RegistrationResult:
    src = _pts(source)
    tgt = _pts(target)
    gate2 = cfg.max_correspondence_distance**2
    if src.shape[0] < 3 or tgt.shape[0] < 3:
        return RegistrationResult(init, 0, float("inf"), False,
                                  "degenerate_correspondences")
    ca = np.ascontiguousarray(source_covs, dtype=np.float64)
    cb = np.ascontiguousarray(target_covs, dtype=np.float64)
    r_cur = np.array(init.rotation)
    t_cur = np.array(init.translation)
    trace = []
    converged = False
    failure = None
    iterations = 0
    n = src.shape[0]
    corr = np.empty(n, dtype=np.int64)
    w_buf = np.empty((n, 3, 3))
    for iterations in range(1, cfg.max_iterations + 1):
        h = np.zeros((6, 6))
        g = np.zeros(6)
        f0, n_corr = _gicp_linearize(src, tgt, ca, cb, r_cur, t_cur,
                                     gate2, h, g, corr, w_buf)
        if n_corr < 6:
            failure = "degenerate_correspondences"
            break
        xi = _solve_normal_equations(h, g)
        if xi is None:
            failure = "singular_normal_equations"
            break

        # step-halving on the fixed-association objective
        accepted = False
        scale = 1.0
        for _ in range(9):  # full step plus at most 8 halvings
            r_step = _so3_exp_fast(scale * xi[0], scale * xi[1],
                                   scale * xi[2])
            r_try = r_step @ r_cur
            t_try = r_step @ t_cur + scale * xi[3:]
            f_try = float(_gicp_objective(src, tgt, corr, w_buf, r_try, t_try))
            if np.isfinite(f_try) and f_try <= f0:
                accepted = True
                break
            scale *= 0.5
        if not accepted:
            failure = "no_decrease"
            break
        r_cur = _renorm_rotation(r_try)
        t_cur = t_try
        trace.append((float(f0), float(f_try)))
        step_t2 = scale * scale * (xi[3] ** 2 + xi[4] ** 2 + xi[5] ** 2)
        step_r2 = scale * scale * (xi[0] ** 2 + xi[1] ** 2 + xi[2] ** 2)
        if (step_t2 < cfg.translation_tolerance**2
                and step_r2 < cfg.rotation_tolerance**2):
            converged = True
            break
        # stagnation cut: an accepted step that barely moved the objective
        # means the iterate is parked at a local minimum; stop burning the
        # iteration budget (proposals in this state lose on cost anyway)
        if iterations >= 5 and f0 > 0.0 and (f0 - f_try) <= 1e-4 * f0:
            break

    t_final = RigidTransform(orthonormalize(r_cur), t_cur)
    res = _rms_residual(src, tgt, t_final, cfg.max_correspondence_distance)
    return RegistrationResult(t_final, iterations, res, converged, failure,
                              tuple(trace))


_DAMP6 = 1e-6 * np.eye(6)


def _solve_normal_equations(h, g):
    """Solve h @ xi = g; on singular or wild solutions retry with damping."""
    for damped in (False, True):
        hh = h + _DAMP6 if damped else h
        try:
            xi = np.linalg.solve(hh, g)
        except np.linalg.LinAlgError:
            continue
        if (np.all(np.isfinite(xi))
                and xi[0] ** 2 + xi[1] ** 2 + xi[2] ** 2 < np.pi**2
                and xi[3] ** 2 + xi[4] ** 2 + xi[5] ** 2 < 1.0):
            return xi
    return None


_M2M_KEY = "registration.m2m"


def _m2m_task(entry):
    targets, target_covs, cfg = parallel.get_payload(_M2M_KEY)
    src, init_m, tgt_idx = entry
    init = RigidTransform.from_matrix3x4(init_m)
    try:
        src_covs = estimate_covariances(src, cfg.k_covariance, cfg.epsilon)
    except TooFewPoints:
        return RegistrationResult(init, 0, float("inf"), False, "too_few_points")
    tc = target_covs[tgt_idx]
    if tc is None:
        return RegistrationResult(init, 0, float("inf"), False, "too_few_points")
    return gicp_align(src, targets[tgt_idx], src_covs, tc, init, cfg)


def m2m_gicp(sources, targets, inits, cfg: GicpConfig,
             target_indices=None, workers: int = 1,
             chunksize: int | None = None) -> list:
    """Align each source to its referenced target; covariances for each
    distinct target are built once and shared.  Per-entry failures are
    reported in the corresponding slot, never aborting the batch."""
    sources = [_pts(s) for s in sources]
    targets = [_pts(t) for t in targets]
    if target_indices is None:
        if len(targets) == 1:
            target_indices = [0] * len(sources)
        elif len(targets) == len(sources):
            target_indices = list(range(len(sources)))
        else:
            raise ValueError("target_indices required for this shape")
    if len(inits) != len(sources) or len(target_indices) != len(sources):
        raise ValueError("sources, inits, target_indices must align")

    instrumentation["target_covariance_builds"] = 0
    target_covs = []
    for tgt in targets:
        try:
            tc = estimate_covariances(tgt, cfg.k_covariance, cfg.epsilon)
            instrumentation["target_covariance_builds"] += 1
        except TooFewPoints:
            tc = None
        target_covs.append(tc)

    entries = [
        (sources[i], inits[i].matrix3x4(), int(target_indices[i]))
        for i in range(len(sources))
    ]
    parallel.set_payload(_M2M_KEY, (targets, target_covs, cfg))
    try:
        return parallel.parallel_map(_m2m_task, entries, workers, chunksize)
    finally:
        parallel.clear_payload(_M2M_KEY)


def project_to_3dof(t: RigidTransform, fixed_z: float = 0.0) -> Pose3Dof:
    """Planar restriction: (x, y) from the translation, yaw from the
    in-plane part of the rotation; roll, pitch, and z are discarded."""
    yaw = float(np.arctan2(t.rotation[1, 0], t.rotation[0, 0]))
    return Pose3Dof(float(t.translation[0]), float(t.translation[1]),
                    canonical_yaw(yaw))
