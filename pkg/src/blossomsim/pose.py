"""
Cluster position and orientation from a single-view point cloud.

Every seed point gets a local surface normal from the PCA of its radius-limited
neighbourhood (smallest-eigenvalue eigenvector of the biased covariance),
flipped to face the camera; the cluster normal is the renormalized mean of
those local normals and the cluster position is the plain centroid.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import DegenerateNormals, EmptyCloud, TooFewNeighbors
from .geometry import KDTree, as_point3, eigen_sym3

MIN_NEIGHBORS = 3


@dataclass(frozen=True)
class PoseParams:
    radius: float = field(default=0.1, metadata={"help": "neighbourhood search radius R [m]"})
    k: int = field(default=30, metadata={"help": "neighbour cap per search"})
    stride: int = field(default=1, metadata={"help": "seed every stride-th point (1 = every point)"})

    def __post_init__(self):
        if self.radius <= 0:
            raise ValueError("radius must be positive")
        if self.k < MIN_NEIGHBORS:
            raise ValueError("k must be >= 3")
        if self.stride < 1:
            raise ValueError("stride must be >= 1")


@dataclass(frozen=True)
class ClusterPose:
    id: str
    position: np.ndarray
    normal: np.ndarray
    sub_normal_count: int
    fallback: bool = False  # True when no neighbourhood had 3+ points and whole-cloud PCA was used


def centroid(points) -> np.ndarray:
    p = np.asarray(points, dtype=float).reshape(-1, 3)
    if len(p) == 0:
        raise EmptyCloud("centroid of an empty point set")
    return p.mean(axis=0)


def covariance(points, min_points: int = MIN_NEIGHBORS) -> np.ndarray:
    """Biased (1/k) covariance of a neighbourhood about its own mean.

    Raises:
        TooFewNeighbors: fewer than ``min_points`` points.
    """
    p = np.asarray(points, dtype=float).reshape(-1, 3)
    if len(p) < min_points:
        raise TooFewNeighbors(f"{len(p)} points, need {min_points}")
    dev = p - p.mean(axis=0)
    c = dev.T @ dev / len(p)
    return 0.5 * (c + c.T)


def _orient(normals: np.ndarray, seeds: np.ndarray, viewpoint: np.ndarray, center: np.ndarray) -> np.ndarray:
    side = np.einsum("ij,ij->i", normals, viewpoint - seeds)
    tie = np.einsum("ij,j->i", normals, viewpoint - center)
    flip = (side < 0) | ((side == 0) & (tie < 0))
    return np.where(flip[:, None], -normals, normals)


def sub_normal(points, i: int, params: PoseParams = PoseParams(), viewpoint=(0.0, 0.0, 0.0), tree: Optional[KDTree] = None):
    """Local normal at ``points[i]``, or None when the neighbourhood has < 3 points."""
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    tree = tree or KDTree(pts)
    nbr = tree.radius_search(pts[i], params.radius, params.k)
    if len(nbr) < MIN_NEIGHBORS:
        return None
    _, vecs = eigen_sym3(covariance(pts[nbr]))
    n = vecs[:, 0][None, :]
    return _orient(n, pts[i][None, :], as_point3(viewpoint), pts.mean(axis=0))[0]


def sub_normals(points, params: PoseParams = PoseParams(), viewpoint=(0.0, 0.0, 0.0)) -> np.ndarray:
    """Local normals for every ``params.stride``-th point; rows are NaN where skipped."""
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    seeds_idx = np.arange(0, len(pts), params.stride)
    out = np.full((len(seeds_idx), 3), np.nan)
    if len(pts) == 0:
        return out
    tree = KDTree(pts)
    nbr, counts = tree.radius_search_many(pts[seeds_idx], params.radius, params.k)
    ok = counts >= MIN_NEIGHBORS
    if not ok.any():
        return out
    nbr, counts = nbr[ok], counts[ok]
    mask = nbr >= 0
    gathered = pts[np.where(mask, nbr, 0)]
    w = mask[:, :, None].astype(float)
    mean = (gathered * w).sum(axis=1) / counts[:, None]
    dev = (gathered - mean[:, None, :]) * w
    cov = np.einsum("nki,nkj->nij", dev, dev) / counts[:, None, None]
    _, vecs = eigen_sym3(cov)
    normals = vecs[:, :, 0]
    out[ok] = _orient(normals, pts[seeds_idx[ok]], as_point3(viewpoint), pts.mean(axis=0))
    return out


def estimate_pose(cloud, viewpoint=(0.0, 0.0, 0.0), params: PoseParams = PoseParams(), cluster_id: Optional[str] = None) -> ClusterPose:
    """Cluster position and camera-facing unit normal.

    Args:
        cloud: a ClusterCloud or an (N, 3) point array.
        viewpoint: camera origin in the same frame as the points.

    Raises:
        EmptyCloud: no points.
        DegenerateNormals: the averaged local normal has (near) zero length.
    """
    pts = getattr(cloud, "points", cloud)
    pts = np.asarray(pts, dtype=float).reshape(-1, 3)
    cid = cluster_id if cluster_id is not None else getattr(cloud, "id", "")
    position = centroid(pts)
    vp = as_point3(viewpoint)

    normals = sub_normals(pts, params, vp)
    good = ~np.isnan(normals[:, 0])
    m = int(good.sum())
    fallback = m == 0
    if fallback:
        if len(pts) < MIN_NEIGHBORS:
            raise DegenerateNormals(f"cluster {cid}: too few points for a normal")
        _, vecs = eigen_sym3(covariance(pts))
        mean = _orient(vecs[:, 0][None, :], position[None, :], vp, position)[0]
    else:
        mean = normals[good].sum(axis=0) / m
    norm = float(np.linalg.norm(mean))
    if norm < 1e-9:
        raise DegenerateNormals(f"cluster {cid}: averaged normal vanished")
    n = mean / norm
    # the average of camera-facing local normals can still lean away when the
    # viewpoint is nearly in-plane; keep the pose camera-facing
    if float(np.dot(n, vp - position)) <= 0:
        n = -n
    return ClusterPose(id=cid, position=position, normal=n, sub_normal_count=m, fallback=fallback)


def angular_error(a, b) -> float:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return math.atan2(float(np.linalg.norm(np.cross(a, b))), float(np.dot(a, b)))
