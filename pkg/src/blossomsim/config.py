"""
Scenario configuration: a commented YAML file validated against a strict schema.

Unknown keys and type mismatches raise :class:`ConfigError` carrying the line
of the offending entry.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import yaml

from .errors import ConfigError
from .execution import OutcomeModel, TimingModel
from .geometry import DEFAULT_MAX_DEPTH as SENSOR_MAX_DEPTH
from .geometry import DEFAULT_MIN_DEPTH as SENSOR_MIN_DEPTH
from .geometry import CameraModel, focal_from_fov
from .perception import DEFAULT_MAX_DEPTH, DEFAULT_SAMPLE_STRIDE
from .pose import PoseParams
from .routing import DEFAULT_OFFSET, KinematicModel, SafetyPolicy
from .scene import RenderConfig, SceneConfig

STRATEGY_CHOICES = ("boundary", "center", "both")


@dataclass
class CameraConfig:
    width: int = field(default=1280, metadata={"help": "image width [px]"})
    height: int = field(default=720, metadata={"help": "image height [px]"})
    hfov_deg: float = field(default=69.0, metadata={"help": "horizontal field of view, used when fx is null [deg]"})
    vfov_deg: float = field(default=42.0, metadata={"help": "vertical field of view, used when fy is null [deg]"})
    fx: Optional[float] = field(default=None, metadata={"help": "focal length [px]; null derives it from the FOV"})
    fy: Optional[float] = field(default=None, metadata={"help": "focal length [px]; null derives it from the FOV"})
    cx: Optional[float] = field(default=None, metadata={"help": "principal point [px]; null = image center"})
    cy: Optional[float] = field(default=None, metadata={"help": "principal point [px]; null = image center"})
    viewpoint: tuple = field(default=(0.0, 0.0, 0.0), metadata={"help": "camera origin [m]"})
    min_depth: float = field(default=SENSOR_MIN_DEPTH, metadata={"help": "sensor minimum valid depth [m]"})
    max_depth: float = field(default=SENSOR_MAX_DEPTH, metadata={"help": "sensor maximum valid depth [m]"})

    def build(self) -> CameraModel:
        return CameraModel(
            width=self.width,
            height=self.height,
            fx=self.fx if self.fx is not None else focal_from_fov(self.width, self.hfov_deg),
            fy=self.fy if self.fy is not None else focal_from_fov(self.height, self.vfov_deg),
            cx=self.cx if self.cx is not None else self.width / 2.0,
            cy=self.cy if self.cy is not None else self.height / 2.0,
            viewpoint=self.viewpoint,
            min_depth=self.min_depth,
            max_depth=self.max_depth,
        )


@dataclass
class PerceptionConfig:
    sample_stride: int = field(default=DEFAULT_SAMPLE_STRIDE, metadata={"help": "interior pixel sampling stride [px]"})
    max_depth: float = field(default=DEFAULT_MAX_DEPTH, metadata={"help": "automatic depth filter limit [m]"})

    def validate(self):
        if self.sample_stride < 1:
            raise ConfigError("perception.sample_stride must be >= 1")
        if self.max_depth <= 0:
            raise ConfigError("perception.max_depth must be positive")


@dataclass
class KinematicsConfig:
    reach: float = field(default=0.850, metadata={"help": "manipulator reach [m]"})
    min_reach: float = field(default=0.15, metadata={"help": "innermost reachable distance [m]"})
    max_approach_angle_deg: float = field(
        default=38.0, metadata={"help": "max angle between tool axis and base-to-target direction [deg]"}
    )
    nonoptimal_ik_prob: float = field(default=0.014, metadata={"help": "chance a reachable plan is aborted as non-optimal"})

    def build(self, base) -> KinematicModel:
        return KinematicModel(
            base=tuple(base),
            reach=self.reach,
            min_reach=self.min_reach,
            max_approach_angle=math.radians(self.max_approach_angle_deg),
            nonoptimal_ik_prob=self.nonoptimal_ik_prob,
        )


@dataclass
class RouteConfig:
    improvement: str = field(default="best", metadata={"help": "best | first improvement"})
    neighborhood: str = field(default="swap", metadata={"help": "swap (pairwise position exchange) | two_opt"})
    max_iters: int = field(default=10000, metadata={"help": "cap on accepted local-search moves"})
    home: tuple = field(default=(0.0, 0.0, 0.15), metadata={"help": "end-effector Home position [m]"})
    approach_offset: float = field(default=DEFAULT_OFFSET, metadata={"help": "approach/retract offset along the normal [m]"})

    def validate(self):
        if self.improvement not in ("best", "first"):
            raise ConfigError("route.improvement must be 'best' or 'first'")
        if self.neighborhood not in ("swap", "two_opt"):
            raise ConfigError("route.neighborhood must be 'swap' or 'two_opt'")
        if self.max_iters < 0:
            raise ConfigError("route.max_iters must be >= 0")
        if self.approach_offset <= 0:
            raise ConfigError("route.approach_offset must be positive")


@dataclass
class RunConfig:
    strategy: str = field(default="both", metadata={"help": "boundary | center | both"})
    seed: int = field(default=42, metadata={"help": "base seed; replicate i uses seed + i"})
    replicates: int = field(default=1, metadata={"help": "number of scenes"})
    workers: int = field(default=1, metadata={"help": "worker processes for replicates"})

    def validate(self):
        if self.strategy not in STRATEGY_CHOICES:
            raise ConfigError(f"run.strategy must be one of {', '.join(STRATEGY_CHOICES)}")
        if self.replicates < 1:
            raise ConfigError("run.replicates must be >= 1")
        if self.workers < 1:
            raise ConfigError("run.workers must be >= 1")


SECTION_HELP = {
    "scene": "synthetic orchard layout (camera-frame meters: +z forward, +y down)",
    "render": "mask and depth rendering of each visible cluster",
    "camera": "pinhole camera",
    "perception": "boundary simplification, back-projection and automatic depth filter",
    "pose": "cluster orientation estimation",
    "safety": "obstacle clearance policy",
    "kinematics": "simplified manipulator reachability; the base comes from scene.robot_base",
    "route": "visit ordering and waypoints",
    "timing": "cycle-time model",
    "outcome": "flower outcome model",
    "run": "run control",
}


@dataclass
class ScenarioConfig:
    scene: SceneConfig = field(default_factory=SceneConfig)
    render: RenderConfig = field(default_factory=RenderConfig)
    camera: CameraConfig = field(default_factory=CameraConfig)
    perception: PerceptionConfig = field(default_factory=PerceptionConfig)
    pose: PoseParams = field(default_factory=PoseParams)
    safety: SafetyPolicy = field(default_factory=SafetyPolicy)
    kinematics: KinematicsConfig = field(default_factory=KinematicsConfig)
    route: RouteConfig = field(default_factory=RouteConfig)
    timing: TimingModel = field(default_factory=TimingModel)
    outcome: OutcomeModel = field(default_factory=OutcomeModel)
    run: RunConfig = field(default_factory=RunConfig)

    def validate(self):
        for f in dataclasses.fields(self):
            section = getattr(self, f.name)
            if hasattr(section, "validate"):
                section.validate()
        try:
            self.camera.build()
        except ValueError as exc:
            raise ConfigError(f"camera: {exc}") from None
        return self

    def replace(self, **sections) -> "ScenarioConfig":
        return dataclasses.replace(self, **sections)


# ---------------------------------------------------------------------------
# Loading
# ---------------------------------------------------------------------------

def _line(node) -> int:
    return node.start_mark.line + 1


def _scalar(node, where, path):
    if not isinstance(node, yaml.ScalarNode):
        raise ConfigError(f"{where}: expected a scalar", path, _line(node))
    return yaml.SafeLoader("").construct_object(node)


def _coerce_scalar(value, proto, where, node, path):
    if isinstance(proto, bool):
        if isinstance(value, bool):
            return value
        raise ConfigError(f"{where}: expected true/false, got {value!r}", path, _line(node))
    if isinstance(proto, int):
        if isinstance(value, int) and not isinstance(value, bool):
            return value
        raise ConfigError(f"{where}: expected an integer, got {value!r}", path, _line(node))
    if isinstance(proto, float) or proto is None:
        if value is None and proto is None:
            return None
        if isinstance(value, str):
            try:
                value = float(value)
            except ValueError:
                pass
        if isinstance(value, (int, float)) and not isinstance(value, bool) and math.isfinite(value):
            return float(value)
        raise ConfigError(f"{where}: expected a number, got {value!r}", path, _line(node))
    if isinstance(proto, str):
        if isinstance(value, str):
            return value
        raise ConfigError(f"{where}: expected a string, got {value!r}", path, _line(node))
    raise ConfigError(f"{where}: unsupported value", path, _line(node))


def _coerce(node, proto, where, path):
    if isinstance(proto, tuple):
        if not isinstance(node, yaml.SequenceNode):
            raise ConfigError(f"{where}: expected a list of {len(proto)} values", path, _line(node))
        if len(node.value) != len(proto):
            raise ConfigError(f"{where}: expected {len(proto)} values, got {len(node.value)}", path, _line(node))
        return tuple(
            _coerce_scalar(_scalar(n, where, path), p, where, n, path) for n, p in zip(node.value, proto)
        )
    if isinstance(proto, dict):
        if not isinstance(node, yaml.MappingNode):
            raise ConfigError(f"{where}: expected a mapping", path, _line(node))
        out = {}
        for knode, vnode in node.value:
            key = _scalar(knode, where, path)
            if key not in proto:
                raise ConfigError(f"{where}: unknown key {key!r}", path, _line(knode))
            out[key] = _coerce(vnode, proto[key], f"{where}.{key}", path)
        return {**proto, **out}
    return _coerce_scalar(_scalar(node, where, path), proto, where, node, path)


def _section_from_node(cls, node, name, path):
    if not isinstance(node, yaml.MappingNode):
        raise ConfigError(f"section {name!r} must be a mapping", path, _line(node))
    defaults = cls()
    known = {f.name: f for f in dataclasses.fields(cls)}
    values = {}
    for knode, vnode in node.value:
        key = _scalar(knode, name, path)
        if key not in known:
            raise ConfigError(f"unknown key {key!r} in section {name!r}", path, _line(knode))
        if key in values:
            raise ConfigError(f"duplicate key {key!r} in section {name!r}", path, _line(knode))
        proto = getattr(defaults, key)
        if isinstance(proto, dict):
            proto = {k: tuple(v) for k, v in proto.items()}
        values[key] = _coerce(vnode, proto, f"{name}.{key}", path)
    try:
        return dataclasses.replace(defaults, **values)
    except ValueError as exc:
        raise ConfigError(f"{name}: {exc}", path, _line(node)) from None


def parse_config(text: str, path=None) -> ScenarioConfig:
    try:
        root = yaml.compose(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise ConfigError(f"YAML syntax error: {getattr(exc, 'problem', exc)}", path, mark.line + 1 if mark else None) from None
    cfg = ScenarioConfig()
    if root is None:
        return cfg.validate()
    if not isinstance(root, yaml.MappingNode):
        raise ConfigError("top level must be a mapping of sections", path, _line(root))
    sections = {f.name: f for f in dataclasses.fields(ScenarioConfig)}
    seen = {}
    nodes = {}
    for knode, vnode in root.value:
        key = _scalar(knode, "top level", path)
        if key not in sections:
            raise ConfigError(f"unknown section {key!r}", path, _line(knode))
        if key in seen:
            raise ConfigError(f"duplicate section {key!r}", path, _line(knode))
        cls = type(getattr(cfg, key))
        seen[key] = _section_from_node(cls, vnode, key, path)
        nodes[key] = knode
    cfg = dataclasses.replace(cfg, **seen)
    for name in seen:
        section = getattr(cfg, name)
        try:
            if hasattr(section, "validate"):
                section.validate()
        except ConfigError as exc:
            raise ConfigError(str(exc), path, _line(nodes[name])) from None
    try:
        return cfg.validate()
    except ConfigError as exc:
        raise ConfigError(str(exc), path) from None


def load_config(path) -> ScenarioConfig:
    p = Path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc.strerror}", str(p)) from None
    return parse_config(text, str(p))


# ---------------------------------------------------------------------------
# Dumping
# ---------------------------------------------------------------------------

def _fmt(value) -> str:
    if value is None:
        return "null"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        s = repr(value)
        if "e" in s and "." not in s.split("e")[0]:
            mant, exp = s.split("e")
            s = f"{mant}.0e{exp}"
        return s
    if isinstance(value, str):
        return value
    if isinstance(value, (tuple, list)):
        return "[" + ", ".join(_fmt(v) for v in value) + "]"
    raise TypeError(f"cannot format {value!r}")


def dump_config(cfg: Optional[ScenarioConfig] = None) -> str:
    """Serialize ``cfg`` (default: the shipped defaults) as commented YAML."""
    cfg = cfg or ScenarioConfig()
    lines = [
        "# blossomsim scenario configuration",
        "# Unknown keys are rejected. Lengths in meters, times in seconds.",
        "",
    ]
    for sf in dataclasses.fields(cfg):
        section = getattr(cfg, sf.name)
        lines.append(f"# {SECTION_HELP[sf.name]}")
        lines.append(f"{sf.name}:")
        for f in dataclasses.fields(section):
            value = getattr(section, f.name)
            if f.metadata.get("help"):
                lines.append(f"  # {f.metadata['help']}")
            if f.name == "max_approach_angle" and isinstance(section, KinematicModel):
                value = math.degrees(value)
            if isinstance(value, dict):
                lines.append(f"  {f.name}:")
                for k, v in value.items():
                    lines.append(f"    {k}: {_fmt(v)}")
            else:
                lines.append(f"  {f.name}: {_fmt(value)}")
        lines.append("")
    return "\n".join(lines)


def config_to_dict(cfg: ScenarioConfig) -> dict:
    out = {}
    for sf in dataclasses.fields(cfg):
        section = getattr(cfg, sf.name)
        out[sf.name] = {
            f.name: (dict(getattr(section, f.name)) if isinstance(getattr(section, f.name), dict) else getattr(section, f.name))
            for f in dataclasses.fields(section)
        }
    return out
