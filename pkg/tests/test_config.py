import dataclasses
import math

import pytest
import yaml
from hypothesis import given, settings
from hypothesis import strategies as st

from blossomsim.config import RunConfig, ScenarioConfig, dump_config, load_config, parse_config
from blossomsim.errors import ConfigError
from blossomsim.scene import SceneConfig


def test_empty_document_gives_defaults():
    assert parse_config("") == ScenarioConfig()
    assert parse_config("# nothing\n") == ScenarioConfig()


def test_default_dump_round_trips():
    text = dump_config()
    assert parse_config(text) == ScenarioConfig()


def test_dump_is_valid_plain_yaml_with_comments():
    text = dump_config()
    data = yaml.safe_load(text)
    assert set(data) == {f.name for f in dataclasses.fields(ScenarioConfig)}
    assert data["run"]["seed"] == 42
    assert "# run control" in text
    # every field line is preceded by a help comment
    lines = text.splitlines()
    assert sum(1 for ln in lines if ln.startswith("  # ")) >= 30


@settings(max_examples=100)
@given(
    st.integers(0, 2**31 - 1),
    st.integers(1, 50),
    st.sampled_from(["boundary", "center", "both"]),
    st.floats(1e-6, 0.5, allow_nan=False),
    st.floats(0.01, 1e3),
)
def test_round_trip_property(seed, count, strategy, noise, speed):
    cfg = ScenarioConfig()
    cfg = cfg.replace(
        run=dataclasses.replace(cfg.run, seed=seed, strategy=strategy),
        scene=dataclasses.replace(cfg.scene, cluster_count=count),
        render=dataclasses.replace(cfg.render, depth_noise=noise),
        timing=dataclasses.replace(cfg.timing, travel_speed_mps=speed),
    )
    assert parse_config(dump_config(cfg)) == cfg


def test_partial_override():
    cfg = parse_config("run:\n  seed: 7\nscene:\n  cluster_count: 3\n  cluster_radius: [0.02, 0.05]\n")
    assert cfg.run.seed == 7
    assert cfg.scene.cluster_count == 3
    assert cfg.scene.cluster_radius == (0.02, 0.05)
    assert cfg.timing == ScenarioConfig().timing


def test_integer_accepted_for_float_field():
    cfg = parse_config("timing:\n  center_thin_s: 2\n")
    assert cfg.timing.center_thin_s == 2.0 and isinstance(cfg.timing.center_thin_s, float)


def test_categorical_mapping_override():
    cfg = parse_config("outcome:\n  categorical:\n    center: [0.25, 0.25, 0.25, 0.25]\n")
    assert cfg.outcome.categorical["center"] == (0.25, 0.25, 0.25, 0.25)
    assert cfg.outcome.categorical["boundary"] == ScenarioConfig().outcome.categorical["boundary"]


@pytest.mark.parametrize(
    "text,line,fragment",
    [
        ("scene:\n  cluster_count: 3\n  clustr_radius: [0.1, 0.1]\n", 3, "unknown key 'clustr_radius'"),
        ("run:\n  seed: 1\nrobot:\n  speed: 3\n", 3, "unknown section 'robot'"),
        ("run:\n  seed: 1.5\n", 2, "expected an integer"),
        ("run:\n  seed: 1\n  seed: 2\n", 3, "duplicate key"),
        ("timing:\n  center_thin_s: fast\n", 2, "expected a number"),
        ("scene:\n  cluster_radius: [0.1]\n", 2, "expected 2 values"),
        ("scene: 3\n", 1, "must be a mapping"),
        ("outcome:\n  categorical:\n    middle: [1, 0, 0, 0]\n", 3, "unknown key 'middle'"),
        ("run:\n  strategy: diagonal\n", 1, "strategy"),
        ("run: [\n", 2, "YAML syntax error"),
    ],
)
def test_errors_carry_line(text, line, fragment):
    with pytest.raises(ConfigError) as info:
        parse_config(text, "cfg.yaml")
    assert info.value.line == line
    assert str(info.value).startswith(f"cfg.yaml:{line}: ")
    assert fragment in str(info.value)


def test_bool_is_not_an_integer():
    with pytest.raises(ConfigError):
        parse_config("run:\n  replicates: true\n")


def test_non_finite_numbers_rejected():
    with pytest.raises(ConfigError):
        parse_config("timing:\n  center_thin_s: .inf\n")


def test_section_validation_runs():
    with pytest.raises(ConfigError):
        parse_config("run:\n  replicates: 0\n")
    with pytest.raises(ConfigError):
        parse_config("scene:\n  flowers_per_cluster: [5, 2]\n")


def test_load_config_reads_file_and_reports_missing(tmp_path):
    p = tmp_path / "s.yaml"
    p.write_text("run:\n  seed: 3\n")
    assert load_config(p).run.seed == 3
    with pytest.raises(ConfigError, match="cannot read config"):
        load_config(tmp_path / "missing.yaml")


def test_kinematics_angle_is_in_degrees():
    cfg = parse_config("kinematics:\n  max_approach_angle_deg: 45\n")
    kin = cfg.kinematics.build((0, 0, 0))
    assert kin.max_approach_angle == pytest.approx(math.radians(45))


def test_camera_intrinsics_override():
    cam = parse_config("camera:\n  fx: 600\n  fy: 600\n").camera.build()
    assert cam.fx == 600 and cam.cx == 640.0


def test_run_config_validation_direct():
    with pytest.raises(ConfigError):
        RunConfig(workers=0).validate()
    assert SceneConfig() == ScenarioConfig().scene
