"""Independent reference implementations used as test oracles.

Each one is deliberately naive (brute force, textbook formula) and shares no
code with the package.
"""

import itertools
import math

import numpy as np


def brute_hull_vertices(points) -> set:
    """Strict convex-hull vertex set by the O(n^3) half-plane test.

    Directed edge (i, j) is a hull edge when every point lies left of or on
    the line i->j and every point on that line lies within the segment; the
    hull vertices are the tails of such edges.
    """
    p = np.unique(np.asarray(points, dtype=float), axis=0)
    n = len(p)
    verts = set()
    for i in range(n):
        d = p - p[i]  # (n, 2) offsets from p[i]
        # cross[j, k] = (p_j - p_i) x (p_k - p_i)
        cross = np.outer(d[:, 0], d[:, 1]) - np.outer(d[:, 1], d[:, 0])
        candidates = np.flatnonzero(np.all(cross >= 0, axis=1))
        for j in candidates:
            if j == i:
                continue
            on_line = cross[j] == 0
            dot = d[on_line] @ d[j]
            if np.all((dot >= 0) & (dot <= d[j] @ d[j])):
                verts.add((float(p[i, 0]), float(p[i, 1])))
                break
    return verts


def linear_scan_radius(points, q, radius, k_max) -> list:
    out = []
    for i, p in enumerate(points):
        d2 = sum((float(a) - float(b)) ** 2 for a, b in zip(p, q))
        if d2 <= radius * radius:
            out.append((d2, i))
    out.sort()
    return [i for _, i in out[:k_max]]


def two_pass_covariance(points) -> np.ndarray:
    p = [list(map(float, r)) for r in points]
    n = len(p)
    mean = [math.fsum(r[c] for r in p) / n for c in range(3)]
    cov = np.zeros((3, 3))
    for a in range(3):
        for b in range(3):
            cov[a, b] = math.fsum((r[a] - mean[a]) * (r[b] - mean[b]) for r in p) / n
    return cov


def pca_plane_normal(points) -> np.ndarray:
    """Least-squares plane normal of the whole cloud via SVD."""
    p = np.asarray(points, dtype=float)
    _, _, vt = np.linalg.svd(p - p.mean(axis=0))
    return vt[-1]


def closed_tour_length(nodes, order) -> float:
    seq = [0, *order, 0]
    return math.fsum(math.dist(nodes[a], nodes[b]) for a, b in zip(seq[:-1], seq[1:]))


def brute_force_tour(nodes) -> float:
    """Optimal closed tour through node 0 and every other node."""
    n = len(nodes)
    best = math.inf
    for perm in itertools.permutations(range(1, n)):
        best = min(best, closed_tour_length(nodes, perm))
    return best


def pinhole_back_project(u, v, d, fx, fy, cx, cy):
    return ((u - cx) * d / fx, (v - cy) * d / fy, d)
