import dataclasses
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from blossomsim.errors import BoundsError, ConfigError, ParseError
from blossomsim.geometry import CameraModel, polygon_signed_area
from blossomsim.scene import (
    ClusterObservation,
    DepthPatch,
    ObstacleKind,
    RenderConfig,
    SceneConfig,
    canopy_frame,
    format_annotations,
    generate_scene,
    parse_annotations,
    render_observations,
    scene_from_json,
    scene_to_json,
)

CAM = CameraModel.from_fov()


def test_scene_is_pure_function_of_seed():
    a = generate_scene(SceneConfig(), 7)
    b = generate_scene(SceneConfig(), 7)
    c = generate_scene(SceneConfig(), 8)
    assert scene_to_json(a) == scene_to_json(b)
    assert scene_to_json(a) != scene_to_json(c)


def test_scene_layout_invariants():
    cfg = SceneConfig(cluster_count=40)
    scene = generate_scene(cfg, 3)
    anchor, lateral, up, normal = canopy_frame(cfg)
    assert len(scene.clusters) == 40
    # the canopy normal faces the camera at the origin
    assert np.dot(normal, -anchor) > 0
    for c in scene.clusters:
        lo, hi = cfg.flowers_per_cluster
        assert lo <= len(c.flowers) <= hi
        assert cfg.cluster_radius[0] <= c.radius <= cfg.cluster_radius[1]
        assert abs(np.linalg.norm(c.true_normal) - 1) < 1e-12
        assert math.degrees(math.acos(min(1.0, np.dot(c.true_normal, normal)))) <= cfg.normal_jitter_deg + 1e-9
        for f in c.flowers:
            assert f.cluster_id == c.id
            assert np.linalg.norm(np.subtract(f.position, c.centroid)) <= c.radius + 1e-12
        if not c.background:
            # foreground centroids lie on the canopy plane
            assert abs(np.dot(np.subtract(c.centroid, anchor), normal)) < 1e-12
            h = np.dot(np.subtract(c.centroid, anchor), up)
            assert all(abs(h - w) >= cfg.wire_gap - 1e-12 for w in cfg.wire_heights)
    kinds = [o.kind for o in scene.obstacles]
    assert kinds.count(ObstacleKind.TRELLIS_WIRE) == len(cfg.wire_heights)
    assert kinds.count(ObstacleKind.TRUNK) == 1


def test_background_clusters_sit_at_background_depth():
    cfg = SceneConfig(cluster_count=30, background_fraction=1.0)
    scene = generate_scene(cfg, 0)
    anchor, _, _, normal = canopy_frame(cfg)
    offset = np.array([0.0, 0.0, cfg.background_depth - cfg.canopy_distance])
    for c in scene.clusters:
        assert c.background
        # shifting back by the row offset puts the centroid on the canopy plane
        on_plane = np.subtract(c.centroid, offset)
        assert abs(np.dot(on_plane - anchor, normal)) < 1e-12
        assert c.centroid[2] > 1.0


@pytest.mark.parametrize(
    "bad",
    [
        dict(cluster_count=-1),
        dict(flowers_per_cluster=(3, 2)),
        dict(cluster_radius=(0.1, 0.05)),
        dict(canopy_tilt_deg=0.0),
        dict(background_fraction=1.5),
        dict(cluster_height_range=(0.2, -0.2)),
    ],
)
def test_scene_config_validation(bad):
    with pytest.raises(ConfigError):
        generate_scene(dataclasses.replace(SceneConfig(), **bad), 0)


def test_render_masks_are_valid_polygons_inside_image():
    scene = generate_scene(SceneConfig(cluster_count=25), 11)
    obs = render_observations(scene, CAM, RenderConfig(), np.random.default_rng(0))
    assert obs
    for o in obs:
        m = o.mask
        assert np.all(m == np.rint(m))
        assert m[:, 0].min() >= 0 and m[:, 0].max() <= CAM.width - 1
        assert m[:, 1].min() >= 0 and m[:, 1].max() <= CAM.height - 1
        assert polygon_signed_area(m) > 0
        assert not np.any(np.all(m == np.roll(m, -1, axis=0), axis=1))


def test_noiseless_depth_matches_disk_plane():
    scene = generate_scene(SceneConfig(cluster_count=5, background_fraction=0.0), 2)
    render = RenderConfig(depth_noise=0.0, invalid_depth_fraction=0.0, invalid_cluster_prob=0.0)
    for o in render_observations(scene, CAM, render, np.random.default_rng(0)):
        c = scene.cluster(o.id)
        u = o.mask[:, 0]
        v = o.mask[:, 1]
        d = o.depth.lookup(u, v)
        pts = np.column_stack([(u - CAM.cx) * d / CAM.fx, (v - CAM.cy) * d / CAM.fy, d])
        np.testing.assert_allclose((pts - c.centroid) @ np.asarray(c.true_normal), 0, atol=1e-12)


def test_depth_patch_lookup_outside_is_nan():
    p = DepthPatch(10, 20, np.array([[1.0, 2.0], [3.0, 4.0]]))
    np.testing.assert_array_equal(p.lookup([10, 11, 10.4, 9], [20, 21, 21, 20]), [1.0, 4.0, 3.0, np.nan])


def test_observation_rejects_repeated_vertices():
    with pytest.raises(ValueError):
        ClusterObservation("x", np.array([[0, 0], [0, 0], [1, 1]]), None)
    with pytest.raises(ValueError):
        ClusterObservation("x", np.array([[0, 0], [1, 1]]), None)


# -- annotations ------------------------------------------------------------

def test_annotation_round_trip():
    scene = generate_scene(SceneConfig(cluster_count=6), 5)
    obs = render_observations(scene, CAM, RenderConfig(), np.random.default_rng(1))
    text = format_annotations(obs, CAM.width, CAM.height)
    back = parse_annotations(text)
    assert [o.id for o in back] == [o.id for o in obs]
    for a, b in zip(obs, back):
        np.testing.assert_array_equal(a.mask, b.mask)
        np.testing.assert_array_equal(a.vertex_depth_values(), b.vertex_depth_values())
    assert format_annotations(back, CAM.width, CAM.height) == text


@settings(max_examples=200)
@given(
    st.lists(
        st.tuples(st.integers(0, 99), st.integers(0, 49), st.floats(0.1, 5.0) | st.just(float("nan"))),
        min_size=3,
        max_size=12,
        unique_by=lambda t: (t[0], t[1]),
    )
)
def test_annotation_round_trip_property(verts):
    uv = np.array([(u, v) for u, v, _ in verts], dtype=float)
    if np.any(np.all(uv == np.roll(uv, -1, axis=0), axis=1)):
        return
    d = np.array([x for *_, x in verts])
    obs = ClusterObservation("k1", uv, None, vertex_depths=d, image_size=(100, 50))
    back = parse_annotations(format_annotations([obs], 100, 50))[0]
    np.testing.assert_array_equal(back.mask, uv)
    np.testing.assert_array_equal(back.vertex_depth_values(), d)


@pytest.mark.parametrize(
    "text,line,exc",
    [
        ("cluster a\n", 1, ParseError),
        ("image 10 10\ncluster a\nv 1 1\nend\n", 3, ParseError),
        ("image 10 10\ncluster a\nv 1 1 0.5\nv 2 2 0.5\nv 12 2 0.5\nend\n", 5, BoundsError),
        ("image 10 10\ncluster a\nv 1 1 x\nend\n", 3, ParseError),
        ("image 10 10\nv 1 1 1\n", 2, ParseError),
        ("image 10 10\ncluster a\nv 1 1 1\nv 2 2 1\nv 1 2 1\n", 2, ParseError),
        ("image 10 10\nbogus\n", 2, ParseError),
    ],
)
def test_annotation_errors_carry_line(text, line, exc):
    with pytest.raises(exc) as info:
        parse_annotations(text)
    assert info.value.line == line
    assert f"line {line}" in str(info.value)


def test_annotation_duplicate_ids():
    text = "image 10 10\n" + "cluster a\nv 1 1 1\nv 2 2 1\nv 1 2 1\nend\n" * 2
    with pytest.raises(ParseError, match="duplicate"):
        parse_annotations(text)


def test_scene_json_round_trip():
    scene = generate_scene(SceneConfig(), 4)
    text = scene_to_json(scene)
    again = scene_to_json(scene_from_json(text))
    assert again == text
    assert '"schema_version": 1' in text
