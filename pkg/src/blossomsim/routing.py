"""
Safety screening, reachability, per-cluster waypoints and visit ordering.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Sequence

import numpy as np

from .errors import DegenerateHull
from .geometry import angle_between, as_point3, point_segment_distance
from .perception import FilterVerdict, RejectReason, VerdictStatus
from .pose import ClusterPose
from .scene import Obstacle, ObstacleKind

DEFAULT_OFFSET = 0.10


class Strategy(str, Enum):
    BOUNDARY = "boundary"
    CENTER = "center"


class IKResult(str, Enum):
    SUCCESS = "success"
    NO_IK = "no_ik"
    NON_OPTIMAL_IK = "non_optimal_ik"


@dataclass(frozen=True)
class SafetyPolicy:
    trunk_clearance: float = field(default=0.10, metadata={"help": "min clearance to trunks and posts [m]"})
    wire_clearance: float = field(default=0.05, metadata={"help": "min clearance to trellis wires [m]"})
    check_boundary_vertices: bool = field(
        default=True, metadata={"help": "boundary strategy also screens every hull vertex"}
    )

    def __post_init__(self):
        if self.trunk_clearance < 0 or self.wire_clearance < 0:
            raise ValueError("clearances must be >= 0")

    def clearance_for(self, kind: ObstacleKind) -> float:
        return self.wire_clearance if kind is ObstacleKind.TRELLIS_WIRE else self.trunk_clearance


@dataclass(frozen=True)
class KinematicModel:
    base: tuple = (0.0, 0.10, 0.05)
    reach: float = 0.850
    min_reach: float = 0.15
    max_approach_angle: float = math.radians(38.0)
    nonoptimal_ik_prob: float = 0.014

    def __post_init__(self):
        if not 0 < self.min_reach < self.reach:
            raise ValueError("need 0 < min_reach < reach")
        if not 0 <= self.nonoptimal_ik_prob <= 1:
            raise ValueError("nonoptimal_ik_prob must be a probability")
        if not 0 < self.max_approach_angle <= math.pi:
            raise ValueError("max_approach_angle must be in (0, pi]")


@dataclass(frozen=True)
class WaypointSet:
    """Approach, thinning start, sweep path and retract waypoints for one cluster.

    Every orientation is the cluster normal. ``target`` is the cluster centroid.
    """

    approach: tuple
    thin_start: tuple
    thin_path: tuple
    retract: tuple
    target: np.ndarray

    @property
    def normal(self) -> np.ndarray:
        return self.approach[1]

    def positions(self) -> list:
        return [self.approach[0], self.thin_start[0], *self.thin_path, self.retract[0]]

    def sweep(self) -> np.ndarray:
        """Thin start followed by the sweep path (a closed loop for boundary thinning)."""
        return np.array([self.thin_start[0], *self.thin_path])


@dataclass(frozen=True)
class Tour:
    order: tuple
    cost: float
    closed: bool = True
    initial_cost: float = 0.0
    initial_order: tuple = ()
    iterations: int = 0
    converged: bool = True


# ---------------------------------------------------------------------------
# Safety
# ---------------------------------------------------------------------------

def obstacle_clearance(points, obstacle: Obstacle) -> np.ndarray:
    """Surface clearance from point(s) to an obstacle (negative when inside)."""
    return point_segment_distance(np.asarray(points, dtype=float), obstacle.start, obstacle.end) - obstacle.radius


def safety_filter(pose: ClusterPose, hull3d, obstacles: Sequence[Obstacle], policy: SafetyPolicy, strategy) -> FilterVerdict:
    """Reject a cluster whose thinning targets come too close to an obstacle.

    Center thinning screens only the centroid; boundary thinning also screens
    every boundary vertex, so its rejections are a superset.
    """
    strategy = Strategy(strategy)
    check = [np.asarray(pose.position, dtype=float)]
    if strategy is Strategy.BOUNDARY and policy.check_boundary_vertices and hull3d is not None and len(hull3d):
        check.extend(np.asarray(hull3d, dtype=float))
    pts = np.array(check)
    for ob in obstacles:
        if np.any(obstacle_clearance(pts, ob) < policy.clearance_for(ob.kind)):
            return FilterVerdict(pose.id, VerdictStatus.REJECTED_POLICY, RejectReason.OBSTACLE_CLEARANCE)
    return FilterVerdict(pose.id, VerdictStatus.ACCEPTED)


# ---------------------------------------------------------------------------
# Waypoints and IK
# ---------------------------------------------------------------------------

def compute_waypoints(pose: ClusterPose, hull3d, strategy, offset: float = DEFAULT_OFFSET) -> WaypointSet:
    """Approach/retract at ``offset`` along the normal; thin at the centroid or along the hull.

    For boundary thinning the sweep starts at the first hull vertex and runs
    through the remaining vertices in hull order, which is clockwise as seen
    from the camera.

    Raises:
        DegenerateHull: boundary strategy with fewer than 3 hull vertices.
    """
    strategy = Strategy(strategy)
    p = np.asarray(pose.position, dtype=float)
    n = np.asarray(pose.normal, dtype=float)
    approach = (p + offset * n, n)
    if strategy is Strategy.CENTER:
        thin_start = (p, n)
        path: tuple = ()
    else:
        hull = np.asarray(hull3d, dtype=float) if hull3d is not None else np.empty((0, 3))
        if len(hull) < 3:
            raise DegenerateHull(f"cluster {pose.id}: boundary thinning needs >= 3 hull vertices")
        thin_start = (hull[0], n)
        path = tuple(hull[1:])
    return WaypointSet(approach=approach, thin_start=thin_start, thin_path=path, retract=approach, target=p)


def check_ik(wps: WaypointSet, kin: KinematicModel, rng) -> IKResult:
    """Simplified reachability: workspace shell plus an approach-direction cone.

    One uniform draw is consumed per call regardless of outcome.
    """
    draw = rng.random()
    base = as_point3(kin.base)
    for pos in wps.positions():
        d = float(np.linalg.norm(np.asarray(pos) - base))
        if not kin.min_reach <= d <= kin.reach:
            return IKResult.NO_IK
    tool_axis = -np.asarray(wps.normal, dtype=float)
    base_axis = np.asarray(wps.approach[0]) - base
    if angle_between(tool_axis, base_axis) > kin.max_approach_angle:
        return IKResult.NO_IK
    if draw < kin.nonoptimal_ik_prob:
        return IKResult.NON_OPTIMAL_IK
    return IKResult.SUCCESS


# ---------------------------------------------------------------------------
# Visit ordering
# ---------------------------------------------------------------------------

def tour_cost(dist: np.ndarray, perm: Sequence[int]) -> float:
    """Closed tour cost through node 0 (the start) and ``perm`` (1-based nodes)."""
    seq = [0, *perm, 0]
    return float(sum(dist[a, b] for a, b in zip(seq[:-1], seq[1:])))


def _swap_deltas(dist: np.ndarray, ext: np.ndarray, ii: np.ndarray, jj: np.ndarray) -> np.ndarray:
    a_prev, a, a_next = ext[ii - 1], ext[ii], ext[ii + 1]
    b_prev, b, b_next = ext[jj - 1], ext[jj], ext[jj + 1]
    adjacent = jj == ii + 1
    old = dist[a_prev, a] + dist[b, b_next] + np.where(adjacent, dist[a, b], dist[a, a_next] + dist[b_prev, b])
    new = dist[a_prev, b] + dist[a, b_next] + np.where(adjacent, dist[b, a], dist[b, a_next] + dist[b_prev, a])
    return new - old


def _two_opt_deltas(dist: np.ndarray, ext: np.ndarray, ii: np.ndarray, jj: np.ndarray) -> np.ndarray:
    # reverse ext[ii..jj]
    return dist[ext[ii - 1], ext[jj]] + dist[ext[ii], ext[jj + 1]] - dist[ext[ii - 1], ext[ii]] - dist[ext[jj], ext[jj + 1]]


def plan_route(
    poses: Sequence[ClusterPose],
    start,
    rng,
    max_iters: int = 10_000,
    improvement: str = "best",
    neighborhood: str = "swap",
) -> Tour:
    """Order clusters by local search on a closed tour from ``start``.

    Starts from a random permutation and repeatedly applies the improving
    pairwise position swap (``neighborhood="swap"``) or segment reversal
    (``"two_opt"``) until none improves the cost or ``max_iters`` moves were
    made. ``improvement`` selects best- or first-improvement; ties go to the
    lowest (i, j) position pair.
    """
    if improvement not in ("best", "first"):
        raise ValueError(f"unknown improvement rule {improvement!r}")
    if neighborhood not in ("swap", "two_opt"):
        raise ValueError(f"unknown neighborhood {neighborhood!r}")
    n = len(poses)
    if n == 0:
        return Tour(order=(), cost=0.0)

    nodes = np.vstack([as_point3(start), *[np.asarray(p.position, dtype=float) for p in poses]])
    dist = np.linalg.norm(nodes[:, None, :] - nodes[None, :, :], axis=2)
    perm = [int(x) + 1 for x in rng.permutation(n)]
    cost = tour_cost(dist, perm)
    initial = (cost, tuple(poses[i - 1].id for i in perm))

    ii, jj = np.triu_indices(n, k=1)
    ii = ii + 1
    jj = jj + 1
    delta_fn = _swap_deltas if neighborhood == "swap" else _two_opt_deltas
    iterations = 0
    converged = True
    while True:
        if iterations >= max_iters:
            converged = False
            break
        if len(ii) == 0:
            break
        ext = np.array([0, *perm, 0])
        deltas = delta_fn(dist, ext, ii, jj)
        tol = 1e-12 * max(1.0, cost)
        improving = np.flatnonzero(deltas < -tol)
        if len(improving) == 0:
            break
        k = int(improving[np.argmin(deltas[improving])]) if improvement == "best" else int(improving[0])
        i, j = int(ii[k]) - 1, int(jj[k]) - 1
        candidate = list(perm)
        if neighborhood == "swap":
            candidate[i], candidate[j] = candidate[j], candidate[i]
        else:
            candidate[i : j + 1] = candidate[i : j + 1][::-1]
        new_cost = tour_cost(dist, candidate)
        if new_cost >= cost:
            # rounding made the predicted gain vanish
            break
        perm, cost = candidate, new_cost
        iterations += 1

    return Tour(
        order=tuple(poses[i - 1].id for i in perm),
        cost=cost,
        initial_cost=initial[0],
        initial_order=initial[1],
        iterations=iterations,
        converged=converged,
    )
