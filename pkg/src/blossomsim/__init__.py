"""Seeded simulator of a single-view robotic blossom-thinning pipeline."""

__version__ = "0.1.0"

from .config import ScenarioConfig, dump_config, load_config, parse_config
from .errors import BlossomSimError, ConfigError, ParseError, PipelineInvariantError
from .execution import Category, OutcomeModel, RunSummary, TimingModel, execute, merge_summaries, summarize
from .geometry import CameraModel, KDTree, back_project, convex_hull, eigen_sym3
from .perception import depth_filter, to_cloud
from .pipeline import aggregate, run_replicate, run_replicates
from .pose import PoseParams, estimate_pose
from .replay import load_bundled_log, load_decision_log, replay
from .report import report_tables
from .routing import IKResult, KinematicModel, SafetyPolicy, Strategy, check_ik, compute_waypoints, plan_route, safety_filter
from .scene import SceneConfig, generate_scene, render_observations

__all__ = [
    "__version__",
    "BlossomSimError", "ConfigError", "ParseError", "PipelineInvariantError",
    "CameraModel", "KDTree", "back_project", "convex_hull", "eigen_sym3",
    "SceneConfig", "generate_scene", "render_observations",
    "depth_filter", "to_cloud",
    "PoseParams", "estimate_pose",
    "IKResult", "KinematicModel", "SafetyPolicy", "Strategy", "check_ik", "compute_waypoints", "plan_route", "safety_filter",
    "Category", "OutcomeModel", "RunSummary", "TimingModel", "execute", "merge_summaries", "summarize",
    "ScenarioConfig", "dump_config", "load_config", "parse_config",
    "aggregate", "run_replicate", "run_replicates",
    "load_bundled_log", "load_decision_log", "replay",
    "report_tables",
]
