"""Post-segmentation processing: boundary simplification, back-projection, depth filtering."""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Optional

import numpy as np

from .errors import TooFewValidDepths
from .geometry import CameraModel, back_project_many, convex_hull, eigen_sym3, points_in_polygon
from .scene import ClusterObservation

DEFAULT_SAMPLE_STRIDE = 4
DEFAULT_MAX_DEPTH = 1.0


class VerdictStatus(str, Enum):
    ACCEPTED = "accepted"
    REJECTED_AUTOMATIC = "rejected_automatic"
    REJECTED_POLICY = "rejected_policy"


class RejectReason(str, Enum):
    BEYOND_DEPTH_LIMIT = "beyond_depth_limit"
    INVALID_DEPTH = "invalid_depth"
    OBSTACLE_CLEARANCE = "obstacle_clearance"


@dataclass(frozen=True)
class FilterVerdict:
    id: str
    status: VerdictStatus
    reason: Optional[RejectReason] = None

    def __post_init__(self):
        if (self.status is VerdictStatus.ACCEPTED) != (self.reason is None):
            raise ValueError("a reason is required exactly when the cluster is rejected")

    @property
    def accepted(self) -> bool:
        return self.status is VerdictStatus.ACCEPTED


@dataclass(frozen=True)
class ClusterCloud:
    id: str
    points: np.ndarray
    hull2d: np.ndarray
    hull3d: np.ndarray

    def __post_init__(self):
        if len(self.points) < 3:
            raise TooFewValidDepths(f"cluster {self.id}: {len(self.points)} valid points")
        if len(self.hull2d) != len(self.hull3d):
            raise ValueError("hull2d and hull3d must have the same vertex count")

    @property
    def centroid(self) -> np.ndarray:
        return self.points.mean(axis=0)


def simplify_boundary(obs: ClusterObservation) -> np.ndarray:
    return convex_hull(obs.mask)


def sample_pixels(mask: np.ndarray, stride: int = DEFAULT_SAMPLE_STRIDE) -> np.ndarray:
    """Mask vertices followed by the stride-aligned interior grid, de-duplicated."""
    mask = np.asarray(mask, dtype=float)
    lo = np.floor(mask.min(axis=0)).astype(int)
    hi = np.ceil(mask.max(axis=0)).astype(int)
    us = np.arange(lo[0] - lo[0] % stride, hi[0] + 1, stride)
    vs = np.arange(lo[1] - lo[1] % stride, hi[1] + 1, stride)
    uu, vv = np.meshgrid(us, vs)
    grid = np.column_stack([uu.ravel(), vv.ravel()]).astype(float)
    grid = grid[points_in_polygon(grid, mask)]
    samples = np.vstack([mask, grid])
    _, first = np.unique(samples, axis=0, return_index=True)
    return samples[np.sort(first)]


def _plane_depths(uv: np.ndarray, points: np.ndarray, cam: CameraModel) -> np.ndarray:
    """Depth where each pixel ray meets the least-squares plane of ``points``."""
    center = points.mean(axis=0)
    dev = points - center
    _, vecs = eigen_sym3(dev.T @ dev / len(points))
    n = vecs[:, 0]
    rays = np.column_stack([(uv[:, 0] - cam.cx) / cam.fx, (uv[:, 1] - cam.cy) / cam.fy, np.ones(len(uv))])
    denom = rays @ n
    fallback = center[2]
    with np.errstate(divide="ignore", invalid="ignore"):
        d = np.where(np.abs(denom) > 1e-6, float(np.dot(n, center)) / denom, fallback)
    return np.where(np.isfinite(d) & (d > 0), d, fallback)


def to_cloud(obs: ClusterObservation, cam: CameraModel, stride: int = DEFAULT_SAMPLE_STRIDE) -> ClusterCloud:
    """Back-project the valid-depth pixels of an observation.

    Hull vertices without a valid depth reading are placed where their pixel
    ray meets the best-fit plane of the valid points, so ``hull3d`` always
    matches ``hull2d`` vertex for vertex.

    Raises:
        TooFewValidDepths: fewer than 3 sampled pixels carry a valid depth.
    """
    samples = sample_pixels(obs.mask, stride)
    nv = len(obs.mask)
    depths = np.empty(len(samples))
    depths[:nv] = obs.vertex_depth_values()
    if obs.depth is not None:
        depths[nv:] = obs.depth.lookup(samples[nv:, 0], samples[nv:, 1])
    else:
        depths[nv:] = np.nan
    valid = cam.depth_valid(depths)
    if valid.sum() < 3:
        raise TooFewValidDepths(f"cluster {obs.id}: {int(valid.sum())} valid depth samples")
    points = back_project_many(samples[valid], depths[valid], cam)

    hull2d = simplify_boundary(obs)
    hull_depth = np.full(len(hull2d), np.nan)
    vdepth = dict(zip(map(tuple, obs.mask), obs.vertex_depth_values()))
    for i, uv in enumerate(map(tuple, hull2d)):
        hull_depth[i] = vdepth.get(uv, np.nan)
    bad = ~cam.depth_valid(hull_depth)
    if bad.any():
        hull_depth[bad] = _plane_depths(hull2d[bad], points, cam)
    hull3d = back_project_many(hull2d, hull_depth, cam)
    return ClusterCloud(id=obs.id, points=points, hull2d=hull2d, hull3d=hull3d)


def depth_filter(cloud: ClusterCloud, max_depth: float = DEFAULT_MAX_DEPTH) -> FilterVerdict:
    # strict: a cluster exactly at max_depth is kept
    if cloud.centroid[2] > max_depth:
        return FilterVerdict(cloud.id, VerdictStatus.REJECTED_AUTOMATIC, RejectReason.BEYOND_DEPTH_LIMIT)
    return FilterVerdict(cloud.id, VerdictStatus.ACCEPTED)


def invalid_depth_verdict(cluster_id: str) -> FilterVerdict:
    return FilterVerdict(cluster_id, VerdictStatus.REJECTED_AUTOMATIC, RejectReason.INVALID_DEPTH)
