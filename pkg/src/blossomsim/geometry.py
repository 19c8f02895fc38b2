"""
Geometric primitives: pinhole camera, 2D convex hull, symmetric 3x3
eigen-decomposition and a radius-limited k-d tree search.

Points are plain ``numpy`` arrays. 3D points live in the camera optical
frame (+z along the optical axis, +x right, +y down), in meters. 2D points
are (u, v) pixel coordinates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.spatial import cKDTree

from .errors import DegenerateInput, InvalidDepth

# Depth validity range used when the camera config does not override it.
DEFAULT_MIN_DEPTH = 0.105
DEFAULT_MAX_DEPTH = 10.0


def as_point3(p) -> np.ndarray:
    arr = np.asarray(p, dtype=float).reshape(3)
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"non-finite point {arr}")
    return arr


def unit(v, tol: float = 1e-12) -> np.ndarray:
    """Return ``v`` scaled to unit length; raises on a (near) zero vector."""
    arr = np.asarray(v, dtype=float)
    n = float(np.linalg.norm(arr))
    if not np.isfinite(n) or n < tol:
        raise ValueError("cannot normalize a zero-length vector")
    return arr / n


def angle_between(a, b) -> float:
    """Angle in radians between two vectors, robust near 0 and pi."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return math.atan2(float(np.linalg.norm(np.cross(a, b))), float(np.dot(a, b)))


# ---------------------------------------------------------------------------
# Camera
# ---------------------------------------------------------------------------

def focal_from_fov(pixels: int, fov_deg: float) -> float:
    """Focal length in pixels for a sensor ``pixels`` wide spanning ``fov_deg``."""
    return (pixels / 2.0) / math.tan(math.radians(fov_deg) / 2.0)


@dataclass(frozen=True)
class CameraModel:
    width: int
    height: int
    fx: float
    fy: float
    cx: float
    cy: float
    viewpoint: tuple = (0.0, 0.0, 0.0)
    min_depth: float = DEFAULT_MIN_DEPTH
    max_depth: float = DEFAULT_MAX_DEPTH

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError("focal lengths must be positive")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise ValueError("principal point must lie inside the image")
        if not self.min_depth < self.max_depth:
            raise ValueError("min_depth must be below max_depth")
        object.__setattr__(self, "viewpoint", tuple(float(c) for c in as_point3(self.viewpoint)))

    @classmethod
    def from_fov(cls, width=1280, height=720, hfov_deg=69.0, vfov_deg=42.0, **kw) -> "CameraModel":
        """Intrinsics for an ideal pinhole with the principal point at the image center."""
        return cls(
            width=width,
            height=height,
            fx=focal_from_fov(width, hfov_deg),
            fy=focal_from_fov(height, vfov_deg),
            cx=kw.pop("cx", width / 2.0),
            cy=kw.pop("cy", height / 2.0),
            **kw,
        )

    @property
    def origin(self) -> np.ndarray:
        return np.asarray(self.viewpoint, dtype=float)

    def depth_valid(self, depth) -> np.ndarray:
        d = np.asarray(depth, dtype=float)
        with np.errstate(invalid="ignore"):
            return np.isfinite(d) & (d > 0) & (d >= self.min_depth) & (d <= self.max_depth)

    def in_image(self, u, v) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        v = np.asarray(v, dtype=float)
        return (u >= 0) & (u <= self.width - 1) & (v >= 0) & (v <= self.height - 1)


def back_project(u: float, v: float, depth: float, cam: CameraModel) -> np.ndarray:
    """Pixel plus depth to a 3D point in the camera frame.

    Raises:
        InvalidDepth: depth is non-positive, non-finite or outside the sensor range.
    """
    if not np.isfinite(depth) or depth <= 0:
        raise InvalidDepth(f"invalid depth {depth!r}")
    if depth < cam.min_depth or depth > cam.max_depth:
        raise InvalidDepth(f"depth {depth} outside [{cam.min_depth}, {cam.max_depth}]")
    return np.array([(u - cam.cx) * depth / cam.fx, (v - cam.cy) * depth / cam.fy, depth])


def back_project_many(uv: np.ndarray, depth: np.ndarray, cam: CameraModel) -> np.ndarray:
    """Vectorized :func:`back_project` without validation; callers filter depths."""
    uv = np.asarray(uv, dtype=float).reshape(-1, 2)
    d = np.asarray(depth, dtype=float).reshape(-1)
    x = (uv[:, 0] - cam.cx) * d / cam.fx
    y = (uv[:, 1] - cam.cy) * d / cam.fy
    return np.column_stack([x, y, d])


def project(points, cam: CameraModel) -> np.ndarray:
    """Forward pinhole model. Returns (u, v, depth) rows."""
    p = np.asarray(points, dtype=float)
    single = p.ndim == 1
    p = p.reshape(-1, 3)
    z = p[:, 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        u = cam.fx * p[:, 0] / z + cam.cx
        v = cam.fy * p[:, 1] / z + cam.cy
    out = np.column_stack([u, v, z])
    return out[0] if single else out


# ---------------------------------------------------------------------------
# Convex hull
# ---------------------------------------------------------------------------

def _cross(o, a, b) -> float:
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


def convex_hull(points) -> np.ndarray:
    """Strictly convex hull of 2D points by Andrew's monotone chain.

    Vertices come back counterclockwise in the (u, v) coordinate system
    (positive cross products), starting from the lowest-u, then lowest-v
    point. Collinear points on hull edges are dropped. Because image v grows
    downward, this order appears clockwise on screen.

    Raises:
        DegenerateInput: fewer than 3 distinct points, or all collinear.
    """
    pts = sorted({(float(p[0]), float(p[1])) for p in np.asarray(points, dtype=float).reshape(-1, 2)})
    if len(pts) < 3:
        raise DegenerateInput(f"need at least 3 distinct points, got {len(pts)}")

    lower: list = []
    for p in pts:
        while len(lower) >= 2 and _cross(lower[-2], lower[-1], p) <= 0:
            lower.pop()
        lower.append(p)
    upper: list = []
    for p in reversed(pts):
        while len(upper) >= 2 and _cross(upper[-2], upper[-1], p) <= 0:
            upper.pop()
        upper.append(p)

    hull = lower[:-1] + upper[:-1]
    if len(hull) < 3:
        raise DegenerateInput("all points are collinear")
    return np.array(hull, dtype=float)


def polygon_signed_area(poly) -> float:
    p = np.asarray(poly, dtype=float)
    x, y = p[:, 0], p[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


def polygon_centroid(poly) -> np.ndarray:
    """Area centroid of a simple polygon."""
    p = np.asarray(poly, dtype=float)
    x, y = p[:, 0], p[:, 1]
    xn, yn = np.roll(x, -1), np.roll(y, -1)
    c = x * yn - xn * y
    a = c.sum() / 2.0
    if a == 0:
        return p.mean(axis=0)
    return np.array([((x + xn) * c).sum(), ((y + yn) * c).sum()]) / (6.0 * a)


def closed_perimeter(vertices) -> float:
    """Length of the closed polyline through ``vertices`` (any dimension)."""
    p = np.asarray(vertices, dtype=float)
    if len(p) < 2:
        return 0.0
    return float(np.linalg.norm(p - np.roll(p, -1, axis=0), axis=1).sum())


def points_in_polygon(points, poly) -> np.ndarray:
    """Even-odd containment test, vectorized over ``points``."""
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    poly = np.asarray(poly, dtype=float)
    x, y = pts[:, 0][:, None], pts[:, 1][:, None]
    x0, y0 = poly[:, 0][None, :], poly[:, 1][None, :]
    x1, y1 = np.roll(poly[:, 0], -1)[None, :], np.roll(poly[:, 1], -1)[None, :]
    straddle = (y0 > y) != (y1 > y)
    with np.errstate(divide="ignore", invalid="ignore"):
        x_cross = x0 + (y - y0) * (x1 - x0) / (y1 - y0)
    hits = straddle & (x < x_cross)
    return (hits.sum(axis=1) % 2) == 1


def point_segment_distance(p, a, b) -> np.ndarray:
    """Euclidean distance from point(s) ``p`` to the segment ``a``-``b``."""
    p = np.asarray(p, dtype=float)
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    ab = b - a
    denom = float(np.dot(ab, ab))
    t = np.zeros(p.shape[:-1]) if denom == 0 else np.clip(((p - a) @ ab) / denom, 0.0, 1.0)
    closest = a + t[..., None] * ab
    return np.linalg.norm(p - closest, axis=-1)


def point_polyline_distance(p, vertices, closed: bool = True) -> np.ndarray:
    """Distance from point(s) to a polyline, closing it back to the start if asked."""
    v = np.asarray(vertices, dtype=float)
    p = np.asarray(p, dtype=float)
    if len(v) == 1:
        return np.linalg.norm(p - v[0], axis=-1)
    ends = np.roll(v, -1, axis=0) if closed else v[1:]
    starts = v if closed else v[:-1]
    d = np.stack([point_segment_distance(p, a, b) for a, b in zip(starts, ends)], axis=-1)
    return d.min(axis=-1)


# ---------------------------------------------------------------------------
# Symmetric 3x3 eigen-decomposition (cyclic Jacobi)
# ---------------------------------------------------------------------------

_JACOBI_PAIRS = ((0, 1), (0, 2), (1, 2))


def _jacobi_sweeps(a: np.ndarray, max_sweeps: int = 50):
    n = a.shape[0]
    v = np.broadcast_to(np.eye(3), (n, 3, 3)).copy()
    scale = np.abs(a).reshape(n, -1).max(axis=1)
    scale[scale == 0] = 1.0
    for _ in range(max_sweeps):
        off = np.abs(a[:, 0, 1]) + np.abs(a[:, 0, 2]) + np.abs(a[:, 1, 2])
        if np.all(off <= 1e-18 * scale):
            break
        for p, q in _JACOBI_PAIRS:
            apq = a[:, p, q]
            active = np.abs(apq) > 1e-300
            if not np.any(active):
                continue
            safe_apq = np.where(active, apq, 1.0)
            theta = (a[:, q, q] - a[:, p, p]) / (2.0 * safe_apq)
            big = np.abs(theta) > 1e150
            safe_theta = np.where(big, 0.0, theta)
            t = np.where(
                big,
                0.5 / np.where(big, theta, 1.0),
                np.copysign(1.0, safe_theta) / (np.abs(safe_theta) + np.sqrt(safe_theta * safe_theta + 1.0)),
            )
            t = np.where(active, t, 0.0)
            c = 1.0 / np.sqrt(t * t + 1.0)
            s = t * c
            rot = np.broadcast_to(np.eye(3), (n, 3, 3)).copy()
            rot[:, p, p] = c
            rot[:, q, q] = c
            rot[:, p, q] = s
            rot[:, q, p] = -s
            a = np.transpose(rot, (0, 2, 1)) @ a @ rot
            a[:, p, q] = 0.0
            a[:, q, p] = 0.0
            v = v @ rot
    return np.diagonal(a, axis1=1, axis2=2).copy(), v


def eigen_sym3(c):
    """Eigen-decomposition of one or many symmetric 3x3 matrices.

    Args:
        c: array of shape (3, 3) or (N, 3, 3). Only the upper triangle is read.

    Returns:
        ``(eigenvalues, eigenvectors)`` with eigenvalues ascending and the
        eigenvectors stored as *columns* (``vecs[..., :, j]`` pairs with
        ``vals[..., j]``). Each eigenvector's first component with magnitude
        above 1e-12 is made positive so the output is reproducible.
    """
    arr = np.asarray(c, dtype=float)
    single = arr.ndim == 2
    arr = arr.reshape(-1, 3, 3)
    upper = np.triu(arr)
    sym = upper + np.transpose(np.triu(arr, 1), (0, 2, 1))
    vals, vecs = _jacobi_sweeps(sym)

    order = np.argsort(vals, axis=1, kind="stable")
    vals = np.take_along_axis(vals, order, axis=1)
    vecs = np.take_along_axis(vecs, order[:, None, :], axis=2)

    significant = np.abs(vecs) > 1e-12
    first = np.argmax(significant, axis=1)
    lead = np.take_along_axis(vecs, first[:, None, :], axis=1)[:, 0, :]
    vecs = vecs * np.where(lead < 0, -1.0, 1.0)[:, None, :]

    if single:
        return vals[0], vecs[0]
    return vals, vecs


# ---------------------------------------------------------------------------
# k-d tree radius search
# ---------------------------------------------------------------------------

class KDTree:
    """Immutable 3D k-d tree answering "at most k neighbours within radius R".

    Results are sorted by ascending distance with ties broken by ascending
    point index. Backed by :class:`scipy.spatial.cKDTree`.
    """

    _PAD = 4

    def __init__(self, points):
        pts = np.asarray(points, dtype=float).reshape(-1, 3)
        if not np.all(np.isfinite(pts)):
            raise ValueError("k-d tree points must be finite")
        self.points = pts
        self.points.setflags(write=False)
        self._tree = cKDTree(pts) if len(pts) else None

    def __len__(self):
        return len(self.points)

    def _ordered(self, idx: np.ndarray, q: np.ndarray, radius: float, k_max: int) -> np.ndarray:
        idx = np.asarray(idx, dtype=np.intp)
        d2 = ((self.points[idx] - q) ** 2).sum(axis=1)
        keep = d2 <= radius * radius
        idx, d2 = idx[keep], d2[keep]
        order = np.lexsort((idx, d2))
        return idx[order][:k_max]

    def radius_search(self, query, radius: float, k_max: int) -> list:
        if radius <= 0 or k_max < 1:
            raise ValueError("radius must be > 0 and k_max >= 1")
        if self._tree is None:
            return []
        q = as_point3(query)
        cand = self._tree.query_ball_point(q, radius * (1 + 1e-9) + 1e-15)
        return [int(i) for i in self._ordered(np.array(cand, dtype=np.intp), q, radius, k_max)]

    def radius_search_many(self, queries, radius: float, k_max: int):
        """Batch form of :meth:`radius_search`.

        Returns:
            ``(indices, counts)``: an (M, k_max) index array padded with -1 and
            the number of valid entries per row.
        """
        if radius <= 0 or k_max < 1:
            raise ValueError("radius must be > 0 and k_max >= 1")
        q = np.asarray(queries, dtype=float).reshape(-1, 3)
        m = len(q)
        out = np.full((m, k_max), -1, dtype=np.intp)
        counts = np.zeros(m, dtype=np.intp)
        n = len(self.points)
        if n == 0 or m == 0:
            return out, counts

        kq = min(k_max + self._PAD, n)
        _, idx = self._tree.query(q, k=kq, distance_upper_bound=radius * (1 + 1e-9) + 1e-15)
        idx = np.asarray(idx).reshape(m, kq)
        found = idx < n
        safe = np.where(found, idx, 0)
        d2 = ((self.points[safe] - q[:, None, :]) ** 2).sum(axis=2)
        d2 = np.where(found & (d2 <= radius * radius), d2, np.inf)
        safe = np.where(np.isfinite(d2), safe, np.iinfo(np.intp).max)
        # sort each row by (d2, index)
        order = np.lexsort((safe, d2), axis=1)
        d2s = np.take_along_axis(d2, order, axis=1)
        idxs = np.take_along_axis(safe, order, axis=1)
        valid = np.isfinite(d2s)
        take = min(k_max, kq)
        out[:, :take] = np.where(valid[:, :take], idxs[:, :take], -1)
        counts[:] = np.minimum(valid.sum(axis=1), k_max)

        # rows where a tie at the truncation boundary could hide further candidates
        if kq < n:
            full = valid[:, -1]
            kth = d2s[:, take - 1]
            last = d2s[:, -1]
            risky = full & (kth >= last * (1 - 1e-12))
            for r in np.flatnonzero(risky):
                res = self.radius_search(q[r], radius, k_max)
                out[r] = -1
                out[r, : len(res)] = res
                counts[r] = len(res)
        return out, counts


def kd_radius_search(tree: KDTree, query, radius: float, k_max: int) -> list:
    return tree.radius_search(query, radius, k_max)
