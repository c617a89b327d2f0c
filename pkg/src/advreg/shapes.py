"""Procedural test shapes."""

import numpy as np

from .pointcloud import PointCloud, normalize

# (center, semi-axes) of the ellipsoids making up the toy bunny
_BUNNY_PARTS = [
    ((0.0, 0.0, 0.0), (1.0, 0.45, 0.75)),     # body
    ((0.95, 0.0, 0.5), (0.38, 0.32, 0.4)),    # head
    ((1.05, 0.1, 1.0), (0.1, 0.07, 0.35)),    # ear
    ((0.85, -0.12, 0.95), (0.08, 0.06, 0.25)),  # second, shorter ear
    ((-1.0, 0.0, 0.1), (0.18, 0.18, 0.18)),   # tail
]


def _ellipsoid_surface(center, axes, n, rng):
    axes = np.asarray(axes)
    out = []
    bound = 1.0 / axes.min()
    while sum(len(o) for o in out) < n:
        u = rng.normal(size=(2 * n, 3))
        u /= np.linalg.norm(u, axis=1, keepdims=True)
        # area element of the scaled sphere is proportional to ||u / axes||
        w = np.linalg.norm(u / axes, axis=1) / bound
        out.append(u[rng.random(len(u)) < w] * axes + center)
    return np.concatenate(out)[:n]


def _inside(points, center, axes):
    q = (points - np.asarray(center)) / np.asarray(axes)
    return np.sum(q * q, axis=1) < 1.0


def toy_bunny(n_points=2000, seed=0):
    """Asymmetric blob with no rotational symmetry, normalized to unit RMS radius.

    The body is flattened so the covariance eigenvalues are well separated
    (about 0.10 / 0.26 / 0.64); with two nearly equal eigenvalues, rotations
    about the remaining axis are hard to pin down.

    Points are spread over the outer surface of a union of ellipsoids,
    roughly uniformly by area.
    """
    rng = np.random.default_rng(seed)
    areas = []
    for _, axes in _BUNNY_PARTS:
        a, b, c = axes
        p = 1.6075
        areas.append(4 * np.pi * (((a * b) ** p + (a * c) ** p + (b * c) ** p) / 3) ** (1 / p))
    areas = np.array(areas)
    chunks = []
    for k, (center, axes) in enumerate(_BUNNY_PARTS):
        m = int(np.ceil(3 * n_points * areas[k] / areas.sum()))
        pts = _ellipsoid_surface(center, axes, m, rng)
        keep = np.ones(len(pts), dtype=bool)
        for j, (c2, a2) in enumerate(_BUNNY_PARTS):
            if j != k:
                keep &= ~_inside(pts, c2, a2)
        chunks.append(pts[keep])
    pts = np.concatenate(chunks)
    pts = pts[rng.permutation(len(pts))[:n_points]]
    return normalize(PointCloud(pts))[0]
