"""
Home/Approach/Thin/Retract state machine, flower outcomes and run summaries.

Per-cluster timeline (all times in seconds):

    Approach state: segmentation, pose estimation and motion planning
                    (computation while stationary), the move from the previous
                    pose to the approach point, then the straight move in to
                    the thinning start point.
    Thin state:     fixed actuation (center) or the closed boundary sweep.
    Retract state:  the move back out to the approach point.

Clusters whose IK check did not succeed get an aborted trace carrying only the
computation phases and no states.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from enum import Enum
from typing import Mapping, Optional, Sequence

import numpy as np

from .errors import PlanMismatch
from .geometry import as_point3, closed_perimeter, point_polyline_distance
from .perception import FilterVerdict, RejectReason, VerdictStatus
from .routing import IKResult, Strategy, Tour, WaypointSet
from .scene import Cluster, Scene


class State(str, Enum):
    HOME = "Home"
    APPROACH = "Approach"
    THIN = "Thin"
    RETRACT = "Retract"


class Category(str, Enum):
    COMPLETELY_REMOVED = "completely_removed"
    PETAL_ANTHER_REMOVED = "petal_anther_removed"
    PETAL_REMOVED = "petal_removed"
    SAVED = "saved"


CATEGORIES = tuple(Category)

PHASES = (
    "segmentation",
    "pose_estimation",
    "motion_planning",
    "approach",
    "thin_start",
    "thin",
    "retract",
)
COMPUTE_PHASES = PHASES[:3]


@dataclass(frozen=True)
class TimingModel:
    segmentation_s: float = field(default=1.50, metadata={"help": "image acquisition + segmentation, per cluster [s]"})
    pose_estimation_s: float = field(default=0.85, metadata={"help": "pose estimation, per cluster [s]"})
    motion_plan_s: float = field(default=1.22, metadata={"help": "motion planning base cost, per cluster [s]"})
    plan_per_waypoint_s: float = field(
        default=0.021, metadata={"help": "extra planning cost per sweep waypoint (boundary only) [s]"}
    )
    travel_speed_mps: float = field(default=0.25, metadata={"help": "end-effector speed for approach/retract moves [m/s]"})
    center_thin_s: float = field(default=2.0, metadata={"help": "center-thinning actuation time [s]"})
    sweep_speed_mps: float = field(default=0.1215, metadata={"help": "boundary sweep speed [m/s]"})

    def __post_init__(self):
        for name in ("segmentation_s", "pose_estimation_s", "motion_plan_s", "travel_speed_mps", "center_thin_s", "sweep_speed_mps"):
            if not getattr(self, name) > 0:
                raise ValueError(f"timing.{name} must be positive")
        if self.plan_per_waypoint_s < 0:
            raise ValueError("timing.plan_per_waypoint_s must be >= 0")


# Saved shares 0.329 / 0.405 and ~33% complete removal; the remainder is split
# evenly between the two partial-damage categories.
DEFAULT_CATEGORICAL = {
    Strategy.BOUNDARY.value: (0.33, 0.1705, 0.1705, 0.329),
    Strategy.CENTER.value: (0.33, 0.1325, 0.1325, 0.405),
}


@dataclass(frozen=True)
class OutcomeModel:
    mode: str = field(default="categorical", metadata={"help": "categorical | geometric"})
    categorical: Mapping = field(
        default_factory=lambda: dict(DEFAULT_CATEGORICAL),
        metadata={"help": "per-strategy probabilities: completely_removed, petal_anther_removed, petal_removed, saved"},
    )
    effector_radius: float = field(default=0.012, metadata={"help": "geometric mode: petal+anther damage radius [m]"})
    core_radius: float = field(default=0.006, metadata={"help": "geometric mode: complete removal radius [m]"})
    margin: float = field(default=0.008, metadata={"help": "geometric mode: extra petal damage band [m]"})

    def __post_init__(self):
        if self.mode not in ("categorical", "geometric"):
            raise ValueError(f"unknown outcome mode {self.mode!r}")
        cat = {Strategy(k).value: tuple(float(x) for x in v) for k, v in self.categorical.items()}
        for k, v in cat.items():
            if len(v) != 4 or min(v) < 0 or abs(sum(v) - 1.0) > 1e-9:
                raise ValueError(f"outcome.categorical.{k} must be 4 probabilities summing to 1")
        object.__setattr__(self, "categorical", cat)
        if not 0 <= self.core_radius <= self.effector_radius or self.margin < 0:
            raise ValueError("need 0 <= core_radius <= effector_radius and margin >= 0")

    def vector(self, strategy) -> tuple:
        return self.categorical[Strategy(strategy).value]


@dataclass(frozen=True)
class ExecutionTrace:
    cluster_id: str
    strategy: Strategy
    ik: IKResult
    enter_time: float
    exit_time: float
    state_sequence: tuple
    phase_durations: Mapping
    flower_outcomes: tuple = ()
    aborted: bool = False

    @property
    def duration(self) -> float:
        return self.exit_time - self.enter_time

    @property
    def completely_removed(self) -> bool:
        return bool(self.flower_outcomes) and all(c is Category.COMPLETELY_REMOVED for _, c in self.flower_outcomes)


def run_timeline(traces: Sequence[ExecutionTrace]) -> list:
    """Whole-run state sequence: Home, each trace's states, Home."""
    seq = [(State.HOME, 0.0)]
    for t in traces:
        seq.extend(t.state_sequence)
    seq.append((State.HOME, traces[-1].exit_time if traces else 0.0))
    return seq


_GRAMMAR = re.compile(r"H(ATR)*H")
_CODE = {State.HOME: "H", State.APPROACH: "A", State.THIN: "T", State.RETRACT: "R"}


def is_legal_sequence(states) -> bool:
    return bool(_GRAMMAR.fullmatch("".join(_CODE[State(s)] for s in states)))


# ---------------------------------------------------------------------------
# Outcomes
# ---------------------------------------------------------------------------

def effector_coverage_distance(points, strategy, wps: WaypointSet) -> np.ndarray:
    """Distance from point(s) to the thinning tool's path.

    Center: the centroid. Boundary: the centroid plus the closed sweep loop.
    """
    p = np.asarray(points, dtype=float)
    d = np.linalg.norm(p - np.asarray(wps.target, dtype=float), axis=-1)
    if Strategy(strategy) is Strategy.BOUNDARY:
        d = np.minimum(d, point_polyline_distance(p, wps.sweep(), closed=True))
    return d


def apply_outcomes(cluster: Cluster, strategy, wps: Optional[WaypointSet], outcome: OutcomeModel, rng) -> list:
    """Category for each flower of ``cluster`` as (flower_id, Category) pairs."""
    ids = [f.id for f in cluster.flowers]
    if outcome.mode == "categorical":
        draws = rng.choice(len(CATEGORIES), size=len(ids), p=outcome.vector(strategy))
        return [(fid, CATEGORIES[k]) for fid, k in zip(ids, draws)]
    pos = np.array([f.position for f in cluster.flowers], dtype=float)
    d = effector_coverage_distance(pos, strategy, wps)
    out = []
    for fid, di in zip(ids, d):
        if di <= outcome.core_radius:
            cat = Category.COMPLETELY_REMOVED
        elif di <= outcome.effector_radius:
            cat = Category.PETAL_ANTHER_REMOVED
        elif di <= outcome.effector_radius + outcome.margin:
            cat = Category.PETAL_REMOVED
        else:
            cat = Category.SAVED
        out.append((fid, cat))
    return out


# ---------------------------------------------------------------------------
# Execution
# ---------------------------------------------------------------------------

def execute(
    tour: Tour,
    waypoints: Mapping[str, WaypointSet],
    ik_results: Mapping[str, IKResult],
    timing: TimingModel,
    outcome: OutcomeModel,
    scene: Optional[Scene],
    strategy,
    rng,
    home=(0.0, 0.0, 0.0),
) -> list:
    """Run the thinning state machine over an ordered tour.

    Accepted clusters whose IK verdict is not SUCCESS are emitted first as
    aborted traces (planning cost only, robot stays put); the tour is then
    executed in order starting from ``home``.

    Raises:
        PlanMismatch: the tour names a cluster without waypoints, without a
            SUCCESS verdict, or misses a SUCCESS cluster.
    """
    strategy = Strategy(strategy)
    for cid in tour.order:
        if cid not in waypoints or cid not in ik_results:
            raise PlanMismatch(f"tour references unknown cluster {cid!r}")
        if ik_results[cid] is not IKResult.SUCCESS:
            raise PlanMismatch(f"tour includes cluster {cid!r} with IK verdict {ik_results[cid].value}")
    ok = {cid for cid, r in ik_results.items() if r is IKResult.SUCCESS}
    if ok != set(tour.order) or len(tour.order) != len(set(tour.order)):
        raise PlanMismatch("tour must visit every SUCCESS cluster exactly once")

    clusters = {c.id: c for c in scene.clusters} if scene is not None else {}
    traces = []
    t = 0.0
    for cid, res in ik_results.items():
        if res is IKResult.SUCCESS:
            continue
        phases = {"segmentation": timing.segmentation_s, "pose_estimation": timing.pose_estimation_s,
                  "motion_planning": _plan_time(timing, strategy, waypoints.get(cid))}
        enter = t
        for v in phases.values():
            t += v
        traces.append(ExecutionTrace(cid, strategy, res, enter, t, (), phases, (), aborted=True))

    pos = as_point3(home)
    for cid in tour.order:
        wps = waypoints[cid]
        approach_pt = np.asarray(wps.approach[0])
        start_pt = np.asarray(wps.thin_start[0])
        inward = float(np.linalg.norm(start_pt - approach_pt))
        if strategy is Strategy.CENTER:
            thin = timing.center_thin_s
        else:
            thin = closed_perimeter(wps.sweep()) / timing.sweep_speed_mps
        phases = {
            "segmentation": timing.segmentation_s,
            "pose_estimation": timing.pose_estimation_s,
            "motion_planning": _plan_time(timing, strategy, wps),
            "approach": float(np.linalg.norm(approach_pt - pos)) / timing.travel_speed_mps,
            "thin_start": inward / timing.travel_speed_mps,
            "thin": thin,
            # the boundary loop closes at the start vertex, so retract mirrors the inward move
            "retract": inward / timing.travel_speed_mps,
        }
        enter = t
        t += phases["segmentation"]
        t += phases["pose_estimation"]
        t += phases["motion_planning"]
        t += phases["approach"]
        t += phases["thin_start"]
        thin_enter = t
        t += phases["thin"]
        retract_enter = t
        t += phases["retract"]
        states = ((State.APPROACH, enter), (State.THIN, thin_enter), (State.RETRACT, retract_enter))
        outcomes = ()
        if cid in clusters:
            outcomes = tuple(apply_outcomes(clusters[cid], strategy, wps, outcome, rng))
        traces.append(ExecutionTrace(cid, strategy, IKResult.SUCCESS, enter, t, states, phases, outcomes))
        pos = np.asarray(wps.retract[0])
    return traces


def _plan_time(timing: TimingModel, strategy: Strategy, wps: Optional[WaypointSet]) -> float:
    extra = 0
    if strategy is Strategy.BOUNDARY and wps is not None:
        extra = len(wps.thin_path) + 1
    return timing.motion_plan_s + timing.plan_per_waypoint_s * extra


# ---------------------------------------------------------------------------
# Summaries
# ---------------------------------------------------------------------------

@dataclass
class RunSummary:
    """Funnel, motion-plan, efficiency and cycle-time statistics for one strategy.

    Totals are stored; rates and means are derived so summaries merge by
    plain addition (see :func:`merge_summaries`).
    """

    strategy: str
    detected: int = 0
    accepted: int = 0
    rejected_auto: int = 0
    rejected_policy: int = 0
    reject_reasons: dict = field(default_factory=dict)
    success: int = 0
    no_ik: int = 0
    non_optimal: int = 0
    clusters_thinned: int = 0
    clusters_completely_removed: int = 0
    flower_counts: dict = field(default_factory=lambda: {c.value: 0 for c in CATEGORIES})
    cycle_count: int = 0
    cycle_time_total: float = 0.0
    phase_time_totals: dict = field(default_factory=lambda: {p: 0.0 for p in PHASES})
    tour_cost_total: float = 0.0
    replicates: int = 1

    # -- derived ---------------------------------------------------------
    @property
    def flowers_total(self) -> int:
        return sum(self.flower_counts.values())

    def proportion(self, category) -> float:
        total = self.flowers_total
        return self.flower_counts[Category(category).value] / total if total else 0.0

    @property
    def saved_proportion(self) -> float:
        return self.proportion(Category.SAVED)

    @property
    def thinned_proportion(self) -> float:
        return 1.0 - self.saved_proportion if self.flowers_total else 0.0

    @property
    def acceptance_rate(self) -> float:
        return self.accepted / self.detected if self.detected else 0.0

    @property
    def motion_plan_success_rate(self) -> float:
        return self.success / self.accepted if self.accepted else 0.0

    @property
    def proportional_success(self) -> float:
        if not self.clusters_thinned:
            return 0.0
        return 1.0 - self.clusters_completely_removed / self.clusters_thinned

    @property
    def mean_cycle_time(self) -> float:
        return self.cycle_time_total / self.cycle_count if self.cycle_count else 0.0

    def phase_means(self) -> dict:
        n = self.cycle_count
        return {p: (self.phase_time_totals[p] / n if n else 0.0) for p in PHASES}

    def check(self) -> list:
        """Internal consistency problems (empty when consistent)."""
        problems = []
        if self.accepted != self.success + self.no_ik + self.non_optimal:
            problems.append("accepted != success + no_ik + non_optimal")
        if self.detected != self.accepted + self.rejected_auto + self.rejected_policy:
            problems.append("detected != accepted + rejected_auto + rejected_policy")
        if self.clusters_thinned != self.success:
            problems.append("clusters_thinned != success")
        if self.clusters_completely_removed > self.clusters_thinned:
            problems.append("more completely-removed clusters than thinned clusters")
        return problems

    def to_dict(self) -> dict:
        return {
            "strategy": self.strategy,
            "replicates": self.replicates,
            "funnel": {
                "detected": self.detected,
                "accepted": self.accepted,
                "rejected_automatic": self.rejected_auto,
                "rejected_policy": self.rejected_policy,
                "reject_reasons": dict(sorted(self.reject_reasons.items())),
                "acceptance_rate": self.acceptance_rate,
            },
            "motion_plan": {
                "success": self.success,
                "no_ik": self.no_ik,
                "non_optimal_ik": self.non_optimal,
                "success_rate": self.motion_plan_success_rate,
            },
            "efficiency": {
                "clusters_thinned": self.clusters_thinned,
                "clusters_completely_removed": self.clusters_completely_removed,
                "proportional_success": self.proportional_success,
                "flower_counts": dict(self.flower_counts),
                "flower_proportions": {c.value: self.proportion(c) for c in CATEGORIES},
                "thinned_proportion": self.thinned_proportion,
            },
            "cycle_time": {
                "cycles": self.cycle_count,
                "total_s": self.cycle_time_total,
                "mean_s": self.mean_cycle_time,
                "phase_totals_s": dict(self.phase_time_totals),
                "phase_means_s": self.phase_means(),
            },
            "tour_cost_total_m": self.tour_cost_total,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RunSummary":
        return cls(
            strategy=d["strategy"],
            replicates=d["replicates"],
            detected=d["funnel"]["detected"],
            accepted=d["funnel"]["accepted"],
            rejected_auto=d["funnel"]["rejected_automatic"],
            rejected_policy=d["funnel"]["rejected_policy"],
            reject_reasons=dict(d["funnel"]["reject_reasons"]),
            success=d["motion_plan"]["success"],
            no_ik=d["motion_plan"]["no_ik"],
            non_optimal=d["motion_plan"]["non_optimal_ik"],
            clusters_thinned=d["efficiency"]["clusters_thinned"],
            clusters_completely_removed=d["efficiency"]["clusters_completely_removed"],
            flower_counts=dict(d["efficiency"]["flower_counts"]),
            cycle_count=d["cycle_time"]["cycles"],
            cycle_time_total=d["cycle_time"]["total_s"],
            phase_time_totals=dict(d["cycle_time"]["phase_totals_s"]),
            tour_cost_total=d["tour_cost_total_m"],
        )


_INT_FIELDS = (
    "detected", "accepted", "rejected_auto", "rejected_policy", "success", "no_ik", "non_optimal",
    "clusters_thinned", "clusters_completely_removed", "cycle_count", "replicates",
)


def merge_summaries(summaries: Sequence[RunSummary], strategy: Optional[str] = None) -> RunSummary:
    """Sum several summaries. Float totals use ``math.fsum`` so the result does not depend on order."""
    summaries = list(summaries)
    if strategy is None:
        names = {s.strategy for s in summaries}
        strategy = names.pop() if len(names) == 1 else "total"
    out = RunSummary(strategy=strategy, replicates=0)
    for name in _INT_FIELDS:
        setattr(out, name, sum(getattr(s, name) for s in summaries))
    reasons = sorted({k for s in summaries for k in s.reject_reasons})
    out.reject_reasons = {k: sum(s.reject_reasons.get(k, 0) for s in summaries) for k in reasons}
    out.flower_counts = {c.value: sum(s.flower_counts.get(c.value, 0) for s in summaries) for c in CATEGORIES}
    out.cycle_time_total = math.fsum(s.cycle_time_total for s in summaries)
    out.phase_time_totals = {p: math.fsum(s.phase_time_totals[p] for s in summaries) for p in PHASES}
    out.tour_cost_total = math.fsum(s.tour_cost_total for s in summaries)
    return out


def summarize(
    traces: Sequence[ExecutionTrace],
    verdicts: Sequence[FilterVerdict],
    ik_results: Mapping[str, IKResult],
    strategy,
    tour: Optional[Tour] = None,
) -> RunSummary:
    strategy = Strategy(strategy)
    s = RunSummary(strategy=strategy.value)
    s.detected = len(verdicts)
    reasons: dict = {}
    for v in verdicts:
        if v.status is VerdictStatus.ACCEPTED:
            s.accepted += 1
            continue
        if v.status is VerdictStatus.REJECTED_AUTOMATIC:
            s.rejected_auto += 1
        else:
            s.rejected_policy += 1
        reasons[v.reason.value] = reasons.get(v.reason.value, 0) + 1
    s.reject_reasons = dict(sorted(reasons.items()))
    for r in ik_results.values():
        if r is IKResult.SUCCESS:
            s.success += 1
        elif r is IKResult.NO_IK:
            s.no_ik += 1
        else:
            s.non_optimal += 1
    durations = []
    phase_lists = {p: [] for p in PHASES}
    for t in traces:
        if t.aborted:
            continue
        s.clusters_thinned += 1
        s.clusters_completely_removed += int(t.completely_removed)
        for _, cat in t.flower_outcomes:
            s.flower_counts[cat.value] += 1
        durations.append(t.duration)
        for p in PHASES:
            phase_lists[p].append(t.phase_durations.get(p, 0.0))
    s.cycle_count = len(durations)
    s.cycle_time_total = math.fsum(durations)
    s.phase_time_totals = {p: math.fsum(v) for p, v in phase_lists.items()}
    s.tour_cost_total = tour.cost if tour is not None else 0.0
    return s
