"""Point-to-point ICP baseline with an exact kd-tree for correspondences."""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from ._accel import njit
from .errors import DegenerateInputError, InvalidArgumentError
from .geometry import RigidTransform
from .pointcloud import PointCloud
from .registration import RegistrationResult


class KdTree:
    """Balanced 3-d tree over a fixed point set; queries are exact.

    Ties between equidistant points resolve to the lowest index.
    """

    def __init__(self, points, leaf_size=16):
        pts = points.points if isinstance(points, PointCloud) else points
        pts = np.ascontiguousarray(pts, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != 3 or len(pts) == 0:
            raise InvalidArgumentError("KdTree needs a non-empty (N, 3) array")
        if leaf_size < 1:
            raise InvalidArgumentError("leaf_size must be >= 1")
        self.points = pts
        self.leaf_size = int(leaf_size)
        self._build()

    def __len__(self):
        return len(self.points)

    def _build(self):
        pts = self.points
        perm = np.arange(len(pts), dtype=np.int64)
        lo_l, hi_l, left_l, right_l, bmin_l, bmax_l = [], [], [], [], [], []

        def new_node(lo, hi):
            sub = pts[perm[lo:hi]]
            lo_l.append(lo)
            hi_l.append(hi)
            left_l.append(-1)
            right_l.append(-1)
            bmin_l.append(sub.min(axis=0))
            bmax_l.append(sub.max(axis=0))
            return len(lo_l) - 1

        stack = [new_node(0, len(pts))]
        while stack:
            node = stack.pop()
            lo, hi = lo_l[node], hi_l[node]
            if hi - lo <= self.leaf_size:
                continue
            dim = int(np.argmax(bmax_l[node] - bmin_l[node]))
            if bmax_l[node][dim] == bmin_l[node][dim]:
                continue  # all points identical; keep as a (large) leaf
            mid = (lo + hi) // 2
            seg = perm[lo:hi]
            order = np.argpartition(pts[seg, dim], mid - lo, kind="introselect")
            perm[lo:hi] = seg[order]
            left = new_node(lo, mid)
            right = new_node(mid, hi)
            left_l[node], right_l[node] = left, right
            stack.extend((left, right))

        self.perm = perm
        self.node_lo = np.array(lo_l, dtype=np.int64)
        self.node_hi = np.array(hi_l, dtype=np.int64)
        self.node_left = np.array(left_l, dtype=np.int64)
        self.node_right = np.array(right_l, dtype=np.int64)
        self.node_min = np.array(bmin_l)
        self.node_max = np.array(bmax_l)
        self.leaf_points = np.ascontiguousarray(pts[perm])

    def query(self, queries):
        """Nearest stored point for each query: ``(indices, distances)``."""
        q = np.ascontiguousarray(np.asarray(queries, dtype=np.float64).reshape(-1, 3))
        idx, d2 = _query_kernel(
            q, self.leaf_points, self.perm, self.node_lo, self.node_hi,
            self.node_left, self.node_right, self.node_min, self.node_max,
        )
        return idx, np.sqrt(d2)


@njit(cache=True)
def _box_dist2(q0, q1, q2, bmin, bmax):
    d = 0.0
    for k, qk in enumerate((q0, q1, q2)):
        if qk < bmin[k]:
            t = bmin[k] - qk
            d += t * t
        elif qk > bmax[k]:
            t = qk - bmax[k]
            d += t * t
    return d


@njit(cache=True)
def _query_kernel(Q, P, perm, lo, hi, left, right, bmin, bmax):
    nq = Q.shape[0]
    out_idx = np.empty(nq, dtype=np.int64)
    out_d2 = np.empty(nq)
    stack = np.empty(128, dtype=np.int64)
    for s in range(nq):
        q0 = Q[s, 0]
        q1 = Q[s, 1]
        q2 = Q[s, 2]
        best = np.inf
        best_i = -1
        top = 0
        stack[0] = 0
        top = 1
        while top > 0:
            top -= 1
            node = stack[top]
            if _box_dist2(q0, q1, q2, bmin[node], bmax[node]) > best:
                continue
            if left[node] < 0:
                for j in range(lo[node], hi[node]):
                    dx = q0 - P[j, 0]
                    dy = q1 - P[j, 1]
                    dz = q2 - P[j, 2]
                    d2 = dx * dx + dy * dy + dz * dz
                    pi = perm[j]
                    if d2 < best or (d2 == best and pi < best_i):
                        best = d2
                        best_i = pi
                continue
            a = left[node]
            b = right[node]
            da = _box_dist2(q0, q1, q2, bmin[a], bmax[a])
            db = _box_dist2(q0, q1, q2, bmin[b], bmax[b])
            # push the farther child first so the nearer one is searched first
            if da <= db:
                stack[top] = b
                stack[top + 1] = a
            else:
                stack[top] = a
                stack[top + 1] = b
            top += 2
        out_idx[s] = best_i
        out_d2[s] = best
    return out_idx, out_d2


def nearest_neighbor(tree, query):
    """Index of and distance to the stored point closest to ``query``."""
    idx, dist = tree.query(np.asarray(query, dtype=np.float64).reshape(1, 3))
    return int(idx[0]), float(dist[0])


def brute_force_nearest(points, queries):
    """Linear-scan reference for :meth:`KdTree.query` (lowest index wins ties)."""
    P = np.asarray(points, dtype=np.float64)
    Q = np.asarray(queries, dtype=np.float64).reshape(-1, 3)
    idx = np.empty(len(Q), dtype=np.int64)
    d2 = np.empty(len(Q))
    for s, q in enumerate(Q):
        dx = q[0] - P[:, 0]
        dy = q[1] - P[:, 1]
        dz = q[2] - P[:, 2]
        d = dx * dx + dy * dy + dz * dz
        k = int(np.argmin(d))
        idx[s], d2[s] = k, d[k]
    return idx, np.sqrt(d2)


def best_rigid_fit(source, target, rank_tol=1e-10):
    """Least-squares rotation and translation taking ``source[i]`` to ``target[i]``.

    SVD of the cross-covariance with the sign of the last singular direction
    flipped when needed, so the result is always a proper rotation.
    """
    src = np.asarray(source, dtype=np.float64).reshape(-1, 3)
    dst = np.asarray(target, dtype=np.float64).reshape(-1, 3)
    if src.shape != dst.shape:
        raise InvalidArgumentError("source and target must pair up one-to-one")
    if len(src) < 3:
        raise DegenerateInputError("need at least 3 point pairs")
    cs, cd = src.mean(axis=0), dst.mean(axis=0)
    H = (src - cs).T @ (dst - cd)
    U, S, Vt = np.linalg.svd(H)
    if S[0] == 0.0 or S[1] <= rank_tol * S[0]:
        raise DegenerateInputError("point pairs are collinear or coincident")
    d = np.sign(np.linalg.det(Vt.T @ U.T))
    if d == 0.0:
        d = 1.0
    R = Vt.T @ np.diag([1.0, 1.0, d]) @ U.T
    return RigidTransform.from_matrix(R, cd - R @ cs)


@dataclass
class IcpConfig:
    max_iterations: int = 100
    convergence_epsilon: float = 1e-8
    initial_transform: RigidTransform = field(default_factory=RigidTransform.identity)
    leaf_size: int = 16

    def __post_init__(self):
        if self.max_iterations < 1:
            raise InvalidArgumentError("max_iterations must be >= 1")
        if not self.convergence_epsilon > 0:
            raise InvalidArgumentError("convergence_epsilon must be positive")


def icp_register(source, target, cfg=None):
    """Classic ICP.

    ``loss_trace`` holds ``(iteration, correspondence_mse, fit_mse)``: the
    mean squared nearest-neighbour distance after the update and the
    residual of the least-squares fit on the previous correspondences.
    An update that would raise the correspondence error is discarded, so
    the recorded errors never increase.
    """
    cfg = IcpConfig() if cfg is None else cfg
    t0 = time.perf_counter()
    src = source.points if isinstance(source, PointCloud) else np.asarray(source, dtype=np.float64)
    tgt = target.points if isinstance(target, PointCloud) else np.asarray(target, dtype=np.float64)
    tree = KdTree(tgt, cfg.leaf_size)

    T = cfg.initial_transform
    idx, dist = tree.query(T.apply(src))
    mse = float(np.mean(dist * dist))
    trace = []
    it = 0
    for it in range(1, cfg.max_iterations + 1):
        matched = tgt[idx]
        T_new = best_rigid_fit(src, matched)
        moved = T_new.apply(src)
        r = moved - matched
        fit_mse = float(np.mean(np.sum(r * r, axis=1)))
        idx_new, dist = tree.query(moved)
        new_mse = float(np.mean(dist * dist))
        if new_mse > mse:
            it -= 1
            break
        T, idx = T_new, idx_new
        trace.append((it, new_mse, fit_mse))
        converged = mse - new_mse < cfg.convergence_epsilon
        mse = new_mse
        if converged:
            break
    return RegistrationResult(
        transform=T, epochs_run=it, loss_trace=trace, wall_time=time.perf_counter() - t0
    )
