"""
Synthetic orchard scenes and their rendered cluster observations.

The world frame is the camera optical frame at the imaging pose: the eye-in-hand
camera sits at the origin looking along +z, +x right, +y down. The canopy is a
plane leaning toward the camera by ``90 - canopy_tilt_deg`` degrees. Flower
clusters are disks on (or, for the background row, behind) that plane.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from enum import Enum
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import BoundsError, ConfigError, ParseError
from .geometry import CameraModel, as_point3, polygon_signed_area, project, unit


class ObstacleKind(str, Enum):
    TRUNK = "trunk"
    TRELLIS_WIRE = "trellis_wire"
    POST = "post"


class ObservationSource(str, Enum):
    SYNTHETIC = "synthetic"
    ANNOTATED = "annotated"


@dataclass(frozen=True)
class Flower:
    id: str
    position: tuple
    cluster_id: str


@dataclass(frozen=True)
class Cluster:
    id: str
    centroid: tuple
    true_normal: tuple
    radius: float
    flowers: tuple
    background: bool = False

    def __post_init__(self):
        if not 0 < self.radius <= 0.15:
            raise ValueError(f"cluster radius {self.radius} outside (0, 0.15]")
        if not self.flowers:
            raise ValueError("a cluster needs at least one flower")
        if abs(float(np.linalg.norm(self.true_normal)) - 1.0) > 1e-9:
            raise ValueError("true_normal must be unit length")


@dataclass(frozen=True)
class Obstacle:
    kind: ObstacleKind
    start: tuple
    end: tuple
    radius: float

    def __post_init__(self):
        if self.radius <= 0:
            raise ValueError("obstacle radius must be positive")
        if np.linalg.norm(np.subtract(self.end, self.start)) <= 0:
            raise ValueError("obstacle segment must have positive length")


@dataclass(frozen=True)
class Scene:
    clusters: tuple
    obstacles: tuple
    canopy_point: tuple
    canopy_normal: tuple
    tilt_deg: float
    robot_base: tuple
    rng_seed: int

    def __post_init__(self):
        ids = [c.id for c in self.clusters]
        if len(set(ids)) != len(ids):
            raise ValueError("cluster ids must be unique")

    def cluster(self, cluster_id: str) -> Cluster:
        for c in self.clusters:
            if c.id == cluster_id:
                return c
        raise KeyError(cluster_id)


@dataclass
class SceneConfig:
    cluster_count: int = field(default=10, metadata={"help": "clusters generated per scene"})
    flowers_per_cluster: tuple = field(default=(4, 6), metadata={"help": "inclusive range of flowers per cluster"})
    cluster_radius: tuple = field(default=(0.045, 0.085), metadata={"help": "cluster disk radius range [m]"})
    canopy_distance: float = field(default=0.70, metadata={"help": "depth of the canopy plane on the optical axis [m]"})
    canopy_tilt_deg: float = field(default=75.0, metadata={"help": "canopy angle from horizontal [deg]"})
    half_width: float = field(default=0.40, metadata={"help": "lateral extent of the cluster band, +/- [m]"})
    wire_heights: tuple = field(
        default=(-0.34, 0.34),
        metadata={"help": "trellis wires bracketing the imaged band, in-plane height relative to the anchor [m]"},
    )
    cluster_height_range: tuple = field(
        default=(-0.23, 0.23), metadata={"help": "in-plane height band holding clusters [m]"}
    )
    wire_gap: float = field(default=0.03, metadata={"help": "minimum centroid distance from a wire [m]"})
    normal_jitter_deg: float = field(default=12.0, metadata={"help": "max tilt of a cluster normal off the canopy normal [deg]"})
    background_fraction: float = field(default=0.03, metadata={"help": "probability a cluster belongs to the background row"})
    background_depth: float = field(default=1.40, metadata={"help": "background row depth on the optical axis [m]"})
    wire_radius: float = field(default=0.0015, metadata={"help": "trellis wire radius [m]"})
    trunk_x: Optional[float] = field(default=0.50, metadata={"help": "lateral trunk position; null for no trunk [m]"})
    trunk_radius: float = field(default=0.04, metadata={"help": "trunk radius [m]"})
    post_x: Optional[float] = field(default=None, metadata={"help": "lateral support post position; null for none [m]"})
    post_radius: float = field(default=0.05, metadata={"help": "support post radius [m]"})
    robot_base: tuple = field(default=(0.0, 0.10, 0.05), metadata={"help": "manipulator base position [m]"})

    def validate(self):
        lo, hi = self.flowers_per_cluster
        if self.cluster_count < 0:
            raise ConfigError("scene.cluster_count must be >= 0")
        if not 1 <= lo <= hi:
            raise ConfigError("scene.flowers_per_cluster must satisfy 1 <= lo <= hi")
        rlo, rhi = self.cluster_radius
        if not 0 < rlo <= rhi <= 0.15:
            raise ConfigError("scene.cluster_radius must satisfy 0 < lo <= hi <= 0.15")
        for name in ("canopy_distance", "half_width", "background_depth", "wire_radius", "trunk_radius", "post_radius"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"scene.{name} must be positive")
        if not 0 < self.canopy_tilt_deg <= 90:
            raise ConfigError("scene.canopy_tilt_deg must be in (0, 90]")
        hlo, hhi = self.cluster_height_range
        if not hlo < hhi:
            raise ConfigError("scene.cluster_height_range must be increasing")
        if not 0 <= self.background_fraction <= 1:
            raise ConfigError("scene.background_fraction must be a probability")
        if self.wire_gap < 0 or self.normal_jitter_deg < 0:
            raise ConfigError("scene.wire_gap and scene.normal_jitter_deg must be >= 0")


@dataclass
class RenderConfig:
    mask_vertices: int = field(default=48, metadata={"help": "vertices on each rendered mask polygon (>= 12)"})
    boundary_raggedness: float = field(
        default=0.12, metadata={"help": "max fractional inward notch of mask vertices (makes masks non-convex)"}
    )
    depth_noise: float = field(default=0.001, metadata={"help": "std-dev of additive depth noise [m]"})
    invalid_depth_fraction: float = field(default=0.02, metadata={"help": "fraction of pixels with invalid depth"})
    invalid_cluster_prob: float = field(
        default=0.012, metadata={"help": "probability that a whole cluster returns no valid depth"}
    )

    def validate(self):
        if self.mask_vertices < 12:
            raise ConfigError("render.mask_vertices must be >= 12")
        if not 0 <= self.boundary_raggedness < 1:
            raise ConfigError("render.boundary_raggedness must be in [0, 1)")
        if self.depth_noise < 0:
            raise ConfigError("render.depth_noise must be >= 0")
        for name in ("invalid_depth_fraction", "invalid_cluster_prob"):
            if not 0 <= getattr(self, name) <= 1:
                raise ConfigError(f"render.{name} must be a probability")


@dataclass(frozen=True)
class DepthPatch:
    """Dense depth values over a pixel rectangle starting at (u0, v0).

    ``values[row, col]`` is the depth of pixel (u0 + col, v0 + row); 0 or NaN
    marks an invalid reading. Pixels outside the rectangle read as NaN.
    """

    u0: int
    v0: int
    values: np.ndarray

    def lookup(self, u, v) -> np.ndarray:
        u = np.rint(np.asarray(u, dtype=float)).astype(np.int64) - self.u0
        v = np.rint(np.asarray(v, dtype=float)).astype(np.int64) - self.v0
        h, w = self.values.shape
        inside = (u >= 0) & (u < w) & (v >= 0) & (v < h)
        out = np.full(np.shape(u), np.nan)
        out[inside] = self.values[v[inside], u[inside]]
        return out


@dataclass(frozen=True)
class ClusterObservation:
    """One segmented cluster.

    ``vertex_depths`` holds per-vertex depth readings when they were supplied
    explicitly (annotation files); otherwise vertex depths come from ``depth``.
    """

    id: str
    mask: np.ndarray
    depth: Optional[DepthPatch]
    source: ObservationSource = ObservationSource.SYNTHETIC
    vertex_depths: Optional[np.ndarray] = None
    image_size: tuple = (1280, 720)

    def __post_init__(self):
        m = np.asarray(self.mask, dtype=float).reshape(-1, 2)
        if len(m) < 3:
            raise ValueError("mask needs at least 3 vertices")
        if np.any(np.all(m == np.roll(m, -1, axis=0), axis=1)):
            raise ValueError("mask has repeated consecutive vertices")
        object.__setattr__(self, "mask", m)

    def vertex_depth_values(self) -> np.ndarray:
        if self.vertex_depths is not None:
            return np.asarray(self.vertex_depths, dtype=float)
        if self.depth is None:
            return np.full(len(self.mask), np.nan)
        return self.depth.lookup(self.mask[:, 0], self.mask[:, 1])


# ---------------------------------------------------------------------------
# Generation
# ---------------------------------------------------------------------------

def canopy_frame(cfg: SceneConfig):
    """Anchor point, lateral axis, in-plane up axis and camera-facing normal."""
    t = math.radians(cfg.canopy_tilt_deg)
    anchor = np.array([0.0, 0.0, cfg.canopy_distance])
    lateral = np.array([1.0, 0.0, 0.0])
    up = np.array([0.0, -math.sin(t), -math.cos(t)])
    normal = np.array([0.0, math.cos(t), -math.sin(t)])
    return anchor, lateral, up, normal


def _disk_basis(normal: np.ndarray):
    ref = np.array([1.0, 0.0, 0.0]) if abs(normal[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    a = unit(ref - np.dot(ref, normal) * normal)
    b = np.cross(normal, a)
    return a, b


def _tup(v) -> tuple:
    return tuple(float(x) for x in v)


def generate_scene(config, seed: int) -> Scene:
    """Build a reproducible synthetic scene.

    Args:
        config: a :class:`SceneConfig` or any object with a ``scene`` attribute
            holding one (e.g. a scenario config).
        seed: RNG seed; the scene is a pure function of (config, seed).
    """
    cfg: SceneConfig = getattr(config, "scene", config)
    cfg.validate()
    rng = np.random.default_rng(seed)
    anchor, lateral, up, normal = canopy_frame(cfg)
    back_offset = np.array([0.0, 0.0, cfg.background_depth - cfg.canopy_distance])

    clusters = []
    hlo, hhi = cfg.cluster_height_range
    jitter = math.radians(cfg.normal_jitter_deg)
    for ci in range(cfg.cluster_count):
        x = rng.uniform(-cfg.half_width, cfg.half_width)
        h = rng.uniform(hlo, hhi)
        for _ in range(64):
            if all(abs(h - w) >= cfg.wire_gap for w in cfg.wire_heights):
                break
            h = rng.uniform(hlo, hhi)
        background = bool(rng.random() < cfg.background_fraction)
        centroid = anchor + x * lateral + h * up
        if background:
            centroid = centroid + back_offset

        tilt = rng.uniform(0.0, jitter)
        azimuth = rng.uniform(0.0, 2 * math.pi)
        n = unit(
            math.cos(tilt) * normal
            + math.sin(tilt) * (math.cos(azimuth) * lateral + math.sin(azimuth) * up)
        )
        radius = float(rng.uniform(*cfg.cluster_radius))
        a, b = _disk_basis(n)
        cid = f"c{ci:03d}"
        count = int(rng.integers(cfg.flowers_per_cluster[0], cfg.flowers_per_cluster[1] + 1))
        rho = radius * np.sqrt(rng.random(count))
        phi = rng.uniform(0.0, 2 * math.pi, count)
        flowers = tuple(
            Flower(
                id=f"{cid}.f{j}",
                position=_tup(centroid + rho[j] * (math.cos(phi[j]) * a + math.sin(phi[j]) * b)),
                cluster_id=cid,
            )
            for j in range(count)
        )
        clusters.append(
            Cluster(id=cid, centroid=_tup(centroid), true_normal=_tup(n), radius=radius, flowers=flowers, background=background)
        )

    obstacles = []
    span = 1.5
    for w in cfg.wire_heights:
        mid = anchor + w * up
        obstacles.append(
            Obstacle(ObstacleKind.TRELLIS_WIRE, _tup(mid - span * lateral), _tup(mid + span * lateral), cfg.wire_radius)
        )
    for kind, x, r in ((ObstacleKind.TRUNK, cfg.trunk_x, cfg.trunk_radius), (ObstacleKind.POST, cfg.post_x, cfg.post_radius)):
        if x is None:
            continue
        base = anchor + x * lateral
        obstacles.append(Obstacle(kind, _tup(base - 1.0 * up), _tup(base + 1.0 * up), r))

    return Scene(
        clusters=tuple(clusters),
        obstacles=tuple(obstacles),
        canopy_point=_tup(anchor),
        canopy_normal=_tup(normal),
        tilt_deg=float(cfg.canopy_tilt_deg),
        robot_base=_tup(as_point3(cfg.robot_base)),
        rng_seed=int(seed),
    )


# ---------------------------------------------------------------------------
# Rendering
# ---------------------------------------------------------------------------

def _dedupe_consecutive(poly: np.ndarray) -> np.ndarray:
    keep = [0]
    for i in range(1, len(poly)):
        if not np.array_equal(poly[i], poly[keep[-1]]):
            keep.append(i)
    out = poly[keep]
    while len(out) > 1 and np.array_equal(out[0], out[-1]):
        out = out[:-1]
    return out


def render_observations(scene: Scene, cam: CameraModel, render: Optional[RenderConfig] = None, rng=None) -> list:
    """Project every visible cluster to a mask polygon plus a depth patch.

    A cluster is visible when its centroid is in front of the camera and
    projects inside the image. Masks are integer-pixel polygons clipped to the
    image bounds; depths come from intersecting each pixel ray with the
    cluster's disk plane.
    """
    render = render or RenderConfig()
    render.validate()
    if rng is None:
        rng = np.random.default_rng(scene.rng_seed)
    observations = []
    for cluster in scene.clusters:
        c = np.asarray(cluster.centroid)
        n = np.asarray(cluster.true_normal)
        if c[2] <= cam.min_depth:
            continue
        uc, vc, _ = project(c, cam)
        if not cam.in_image(uc, vc):
            continue

        a, b = _disk_basis(n)
        k = render.mask_vertices
        ang = 2 * math.pi * np.arange(k) / k
        notch = 1.0 - render.boundary_raggedness * rng.random(k)
        rim = c + (cluster.radius * notch)[:, None] * (np.cos(ang)[:, None] * a + np.sin(ang)[:, None] * b)
        if np.any(rim[:, 2] <= 0):
            continue
        uv = project(rim, cam)[:, :2]
        uv = np.rint(uv)
        uv[:, 0] = np.clip(uv[:, 0], 0, cam.width - 1)
        uv[:, 1] = np.clip(uv[:, 1], 0, cam.height - 1)
        uv = _dedupe_consecutive(uv)
        if len(uv) < 3:
            continue
        # same winding as the hull (clockwise on screen)
        if polygon_signed_area(uv) < 0:
            uv = uv[::-1]

        u0, v0 = int(uv[:, 0].min()), int(uv[:, 1].min())
        u1, v1 = int(uv[:, 0].max()), int(uv[:, 1].max())
        uu, vv = np.meshgrid(np.arange(u0, u1 + 1), np.arange(v0, v1 + 1))
        rays = np.stack([(uu - cam.cx) / cam.fx, (vv - cam.cy) / cam.fy, np.ones_like(uu, dtype=float)], axis=-1)
        denom = rays @ n
        with np.errstate(divide="ignore", invalid="ignore"):
            depth = np.where(np.abs(denom) > 1e-9, float(np.dot(n, c)) / denom, np.nan)
        if render.depth_noise > 0:
            depth = depth + rng.normal(0.0, render.depth_noise, depth.shape)
        dropout = rng.random(depth.shape) < render.invalid_depth_fraction
        depth = np.where(dropout, 0.0, depth)
        if rng.random() < render.invalid_cluster_prob:
            depth = np.zeros_like(depth)
        depth.setflags(write=False)
        observations.append(
            ClusterObservation(
                id=cluster.id,
                mask=uv,
                depth=DepthPatch(u0, v0, depth),
                source=ObservationSource.SYNTHETIC,
                image_size=(cam.width, cam.height),
            )
        )
    return observations


# ---------------------------------------------------------------------------
# Annotation files
# ---------------------------------------------------------------------------

def _fmt_num(x: float) -> str:
    x = float(x)
    if math.isnan(x):
        return "nan"
    if x.is_integer() and abs(x) < 1e15:
        return str(int(x))
    return repr(x)


def format_annotations(observations, width: int, height: int) -> str:
    lines = [f"image {width} {height}"]
    for obs in observations:
        lines.append(f"cluster {obs.id}")
        depths = obs.vertex_depth_values()
        for (u, v), d in zip(obs.mask, depths):
            lines.append(f"v {_fmt_num(u)} {_fmt_num(v)} {_fmt_num(d)}")
        lines.append("end")
    return "\n".join(lines) + "\n"


def write_annotations(path, observations, width: int, height: int) -> None:
    Path(path).write_text(format_annotations(observations, width, height), encoding="utf-8")


def _annotated_patch(mask: np.ndarray, depths: np.ndarray) -> DepthPatch:
    ui = np.rint(mask[:, 0]).astype(int)
    vi = np.rint(mask[:, 1]).astype(int)
    u0, v0 = int(ui.min()), int(vi.min())
    values = np.full((vi.max() - v0 + 1, ui.max() - u0 + 1), np.nan)
    values[vi - v0, ui - u0] = depths
    values.setflags(write=False)
    return DepthPatch(u0, v0, values)


def parse_annotations(text: str) -> list:
    """Parse the line-oriented annotation format (see :func:`format_annotations`).

    Raises:
        ParseError: malformed content; the message names the line and the
            cluster record index.
        BoundsError: a vertex lies outside the declared image.
    """
    width = height = None
    observations = []
    current = None
    record = -1
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        tok = line.split()
        head = tok[0]
        if width is None:
            if head != "image" or len(tok) != 3:
                raise ParseError("expected header 'image <width> <height>'", line=lineno)
            try:
                width, height = int(tok[1]), int(tok[2])
            except ValueError:
                raise ParseError("image size must be integers", line=lineno) from None
            if width <= 0 or height <= 0:
                raise ParseError("image size must be positive", line=lineno)
            continue
        if head == "cluster":
            if current is not None:
                raise ParseError("'cluster' before previous record's 'end'", line=lineno, record=record)
            record += 1
            if len(tok) != 2:
                raise ParseError("expected 'cluster <id>'", line=lineno, record=record)
            current = {"id": tok[1], "uv": [], "d": [], "line": lineno}
        elif head == "v":
            if current is None:
                raise ParseError("vertex outside a cluster record", line=lineno)
            if len(tok) != 4:
                raise ParseError("expected 'v <u> <v> <depth_m>'", line=lineno, record=record)
            try:
                u, v, d = (float(t) for t in tok[1:])
            except ValueError:
                raise ParseError(f"malformed vertex {' '.join(tok[1:])!r}", line=lineno, record=record) from None
            if not (math.isfinite(u) and math.isfinite(v)):
                raise ParseError("vertex coordinates must be finite", line=lineno, record=record)
            if not (0 <= u <= width - 1 and 0 <= v <= height - 1):
                raise BoundsError(f"vertex ({u}, {v}) outside {width}x{height} image", line=lineno, record=record)
            current["uv"].append((u, v))
            current["d"].append(d)
        elif head == "end":
            if current is None:
                raise ParseError("'end' without 'cluster'", line=lineno)
            mask = np.array(current["uv"], dtype=float).reshape(-1, 2)
            depths = np.array(current["d"], dtype=float)
            try:
                obs = ClusterObservation(
                    id=current["id"],
                    mask=mask,
                    depth=_annotated_patch(mask, depths) if len(mask) else None,
                    source=ObservationSource.ANNOTATED,
                    vertex_depths=depths,
                    image_size=(width, height),
                )
            except ValueError as exc:
                raise ParseError(str(exc), line=current["line"], record=record) from None
            observations.append(obs)
            current = None
        else:
            raise ParseError(f"unknown directive {head!r}", line=lineno, record=record if current else None)
    if width is None:
        raise ParseError("missing 'image' header")
    if current is not None:
        raise ParseError("unterminated cluster record", line=current["line"], record=record)
    ids = [o.id for o in observations]
    if len(set(ids)) != len(ids):
        raise ParseError("duplicate cluster id")
    return observations


def load_annotations(path) -> list:
    return parse_annotations(Path(path).read_text(encoding="utf-8"))


# ---------------------------------------------------------------------------
# Scene serialization
# ---------------------------------------------------------------------------

SCENE_SCHEMA_VERSION = 1


def scene_to_dict(scene: Scene) -> dict:
    d = asdict(scene)
    for ob in d["obstacles"]:
        ob["kind"] = ObstacleKind(ob["kind"]).value
    d["schema_version"] = SCENE_SCHEMA_VERSION
    return d


def scene_to_json(scene: Scene) -> str:
    return json.dumps(scene_to_dict(scene), sort_keys=True, indent=1) + "\n"


def scene_from_dict(d: dict) -> Scene:
    if d.get("schema_version") != SCENE_SCHEMA_VERSION:
        raise ValueError(f"unsupported scene schema {d.get('schema_version')!r}")
    clusters = tuple(
        Cluster(
            id=c["id"],
            centroid=tuple(c["centroid"]),
            true_normal=tuple(c["true_normal"]),
            radius=c["radius"],
            flowers=tuple(Flower(f["id"], tuple(f["position"]), f["cluster_id"]) for f in c["flowers"]),
            background=c["background"],
        )
        for c in d["clusters"]
    )
    obstacles = tuple(
        Obstacle(ObstacleKind(o["kind"]), tuple(o["start"]), tuple(o["end"]), o["radius"]) for o in d["obstacles"]
    )
    return Scene(
        clusters=clusters,
        obstacles=obstacles,
        canopy_point=tuple(d["canopy_point"]),
        canopy_normal=tuple(d["canopy_normal"]),
        tilt_deg=d["tilt_deg"],
        robot_base=tuple(d["robot_base"]),
        rng_seed=d["rng_seed"],
    )


def scene_from_json(text: str) -> Scene:
    return scene_from_dict(json.loads(text))
