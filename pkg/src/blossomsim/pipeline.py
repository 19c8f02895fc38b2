"""
End-to-end simulation: generate, render, perceive, estimate poses, filter,
plan, execute and summarize, for one or several seeded replicates.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .config import ScenarioConfig
from .errors import DegenerateInput, DegenerateNormals, PipelineInvariantError, TooFewValidDepths
from .execution import ExecutionTrace, RunSummary, execute, is_legal_sequence, merge_summaries, run_timeline, summarize
from .perception import FilterVerdict, depth_filter, invalid_depth_verdict, to_cloud
from .pose import ClusterPose, estimate_pose
from .routing import IKResult, Strategy, Tour, WaypointSet, check_ik, compute_waypoints, plan_route, safety_filter
from .scene import Scene, generate_scene, render_observations

STRATEGY_ORDER = (Strategy.BOUNDARY, Strategy.CENTER)

# numpy substream tags; each (seed, tag, strategy) triple owns one Generator
_RENDER, _ROUTE, _IK, _OUTCOME = 1, 2, 3, 4


def strategies_for(choice: str) -> tuple:
    if choice == "both":
        return STRATEGY_ORDER
    return (Strategy(choice),)


def _stream(seed: int, tag: int, strategy: Optional[Strategy] = None) -> np.random.Generator:
    key = [int(seed), tag]
    if strategy is not None:
        key.append(STRATEGY_ORDER.index(strategy))
    return np.random.default_rng(key)


@dataclass
class Perceived:
    """Strategy-independent perception output for one scene."""

    verdicts: dict  # id -> FilterVerdict for clusters rejected before pose estimation
    poses: dict  # id -> ClusterPose
    hulls: dict  # id -> (M, 3) hull vertices
    detected: tuple  # ids in observation order


@dataclass
class StrategyResult:
    strategy: Strategy
    verdicts: list
    ik: dict
    waypoints: dict
    tour: Tour
    traces: list
    summary: RunSummary


@dataclass
class ReplicateResult:
    seed: int
    scene: Scene
    perceived: Perceived
    results: dict = field(default_factory=dict)  # strategy value -> StrategyResult


def perceive(scene: Scene, cfg: ScenarioConfig, seed: int) -> Perceived:
    cam = cfg.camera.build()
    observations = render_observations(scene, cam, cfg.render, _stream(seed, _RENDER))
    verdicts, poses, hulls = {}, {}, {}
    for obs in observations:
        try:
            cloud = to_cloud(obs, cam, cfg.perception.sample_stride)
        except (TooFewValidDepths, DegenerateInput):
            verdicts[obs.id] = invalid_depth_verdict(obs.id)
            continue
        v = depth_filter(cloud, cfg.perception.max_depth)
        if not v.accepted:
            verdicts[obs.id] = v
            continue
        try:
            poses[obs.id] = estimate_pose(cloud, cam.viewpoint, cfg.pose, obs.id)
        except DegenerateNormals:
            verdicts[obs.id] = invalid_depth_verdict(obs.id)
            continue
        hulls[obs.id] = cloud.hull3d
    return Perceived(verdicts=verdicts, poses=poses, hulls=hulls, detected=tuple(o.id for o in observations))


def run_strategy(scene: Scene, perceived: Perceived, cfg: ScenarioConfig, seed: int, strategy) -> StrategyResult:
    strategy = Strategy(strategy)
    kin = cfg.kinematics.build(scene.robot_base)
    ik_rng = _stream(seed, _IK, strategy)
    verdicts: list = []
    ik: dict = {}
    waypoints: dict = {}
    for cid in perceived.detected:
        if cid in perceived.verdicts:
            verdicts.append(perceived.verdicts[cid])
            continue
        pose = perceived.poses[cid]
        hull = perceived.hulls[cid]
        v = safety_filter(pose, hull, scene.obstacles, cfg.safety, strategy)
        verdicts.append(v)
        if not v.accepted:
            continue
        wps = compute_waypoints(pose, hull, strategy, cfg.route.approach_offset)
        waypoints[cid] = wps
        ik[cid] = check_ik(wps, kin, ik_rng)

    ok = [perceived.poses[cid] for cid, r in ik.items() if r is IKResult.SUCCESS]
    tour = plan_route(
        ok,
        cfg.route.home,
        _stream(seed, _ROUTE, strategy),
        max_iters=cfg.route.max_iters,
        improvement=cfg.route.improvement,
        neighborhood=cfg.route.neighborhood,
    )
    traces = execute(
        tour, waypoints, ik, cfg.timing, cfg.outcome, scene, strategy, _stream(seed, _OUTCOME, strategy), home=cfg.route.home
    )
    summary = summarize(traces, verdicts, ik, strategy, tour)
    check_invariants(traces, summary, perceived, scene)
    return StrategyResult(strategy, verdicts, ik, waypoints, tour, traces, summary)


def check_invariants(traces: Sequence[ExecutionTrace], summary: RunSummary, perceived: Perceived, scene: Scene) -> None:
    """Raise :class:`PipelineInvariantError` on any broken cross-stage invariant."""
    problems = list(summary.check())
    states = [s for s, _ in run_timeline(traces)]
    if not is_legal_sequence(states):
        problems.append("illegal state sequence")
    for t in traces:
        total = sum(t.phase_durations.values())
        if abs(total - t.duration) > 1e-9:
            problems.append(f"{t.cluster_id}: phase durations do not add up to the trace duration")
    vp = np.zeros(3)
    for pose in perceived.poses.values():
        if abs(float(np.linalg.norm(pose.normal)) - 1.0) > 1e-9 or float(np.dot(pose.normal, vp - pose.position)) <= 0:
            problems.append(f"{pose.id}: normal is not a camera-facing unit vector")
    if problems:
        raise PipelineInvariantError("; ".join(problems))


def run_replicate(cfg: ScenarioConfig, seed: int, strategies: Sequence = STRATEGY_ORDER) -> ReplicateResult:
    """One scene shared by every requested strategy (paired comparison)."""
    scene = generate_scene(cfg.scene, seed)
    perceived = perceive(scene, cfg, seed)
    rep = ReplicateResult(seed=seed, scene=scene, perceived=perceived)
    for s in strategies:
        rep.results[Strategy(s).value] = run_strategy(scene, perceived, cfg, seed, s)
    return rep


def _run_one(args):
    cfg, seed, strategies = args
    return run_replicate(cfg, seed, strategies)


def run_replicates(cfg: ScenarioConfig, seed: Optional[int] = None, replicates: Optional[int] = None,
                   strategies: Optional[Sequence] = None, workers: Optional[int] = None) -> list:
    """Replicate ``i`` uses scene seed ``seed + i``; results come back sorted by seed."""
    base = cfg.run.seed if seed is None else seed
    n = cfg.run.replicates if replicates is None else replicates
    strategies = tuple(Strategy(s) for s in (strategies or strategies_for(cfg.run.strategy)))
    workers = cfg.run.workers if workers is None else workers
    jobs = [(cfg, base + i, strategies) for i in range(n)]
    if workers > 1 and n > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            out = list(pool.map(_run_one, jobs))
    else:
        out = [_run_one(j) for j in jobs]
    return sorted(out, key=lambda r: r.seed)


def aggregate(replicates: Sequence[ReplicateResult]) -> dict:
    """Per-strategy merged summaries plus a combined ``total`` entry."""
    by_strategy: dict = {}
    for rep in replicates:
        for name, res in rep.results.items():
            by_strategy.setdefault(name, []).append(res.summary)
    out = {}
    for s in STRATEGY_ORDER:
        if s.value in by_strategy:
            out[s.value] = merge_summaries(by_strategy[s.value], s.value)
    total = merge_summaries(list(out.values()), "total")
    # replicates counts scenes, not strategy runs
    total.replicates = len(replicates)
    out["total"] = total
    return out
