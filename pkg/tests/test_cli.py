import json

import pytest

from blossomsim import __version__, cli
from blossomsim.config import ScenarioConfig, dump_config, parse_config
from blossomsim.errors import PipelineInvariantError

SMALL = "scene:\n  cluster_count: 4\nperception:\n  sample_stride: 12\nrun:\n  replicates: 2\n"


def _files(d):
    return {p.relative_to(d).as_posix(): p.read_bytes() for p in sorted(d.rglob("*")) if p.is_file()}


@pytest.fixture
def small_cfg(tmp_path):
    p = tmp_path / "small.yaml"
    p.write_text(SMALL)
    return p


def test_version(capsys):
    with pytest.raises(SystemExit) as info:
        cli.main(["--version"])
    assert info.value.code == 0
    assert __version__ in capsys.readouterr().out


def test_dump_default_config(capsys):
    assert cli.main(["--dump-default-config"]) == 0
    out = capsys.readouterr().out
    assert out == dump_config()
    assert parse_config(out) == ScenarioConfig()


def test_missing_command_is_usage_error(capsys):
    assert cli.main([]) == 2


def test_simulation_run_writes_artifacts(tmp_path, small_cfg, capsys):
    out = tmp_path / "out"
    assert cli.main(["run", "--config", str(small_cfg), "--out", str(out), "--format", "delimited"]) == 0
    stdout = capsys.readouterr().out
    assert stdout == (out / "report.csv").read_text()
    names = set(_files(out))
    assert {"summary.json", "funnel.csv", "motion_plan.csv", "efficiency.csv", "cycle_time.csv",
            "report.csv", "decisions.csv", "traces.csv", "run_meta.json", "figures/funnel.png"} <= names
    doc = json.loads((out / "summary.json").read_text())
    assert doc["mode"] == "simulation" and doc["seeds"] == [42, 43]
    assert doc["config"]["scene"]["cluster_count"] == 4


def test_runs_are_byte_identical(tmp_path, small_cfg, capsys):
    a, b = tmp_path / "a", tmp_path / "b"
    for d in (a, b):
        assert cli.main(["run", "--config", str(small_cfg), "--out", str(d), "--seed", "9"]) == 0
    fa, fb = _files(a), _files(b)
    fa.pop("run_meta.json"), fb.pop("run_meta.json")
    assert fa == fb


def test_overrides_and_env_out_dir(tmp_path, small_cfg, monkeypatch, capsys):
    monkeypatch.setenv("BLOSSOMSIM_OUT", str(tmp_path / "env"))
    args = ["run", "--config", str(small_cfg), "--seed", "5", "--strategy", "center",
            "--replicates", "1", "--format", "structured", "--no-figures"]
    assert cli.main(args) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["seeds"] == [5]
    assert set(doc["summaries"]) == {"center", "total"}
    assert (tmp_path / "env" / "report.json").exists()
    assert not (tmp_path / "env" / "figures").exists()


def test_bundled_replay(tmp_path, capsys):
    assert cli.main(["run", "--replay", "bundled", "--out", str(tmp_path)]) == 0
    out = capsys.readouterr().out
    assert "proportional success 92%" in out
    assert "acceptance boundary 84% / center 91%" in out
    assert not (tmp_path / "traces.csv").exists()
    assert (tmp_path / "decisions.csv").read_text().startswith("cluster_id,strategy,status")


def test_replay_bad_log_exit_2(tmp_path, capsys):
    log = tmp_path / "bad.log"
    log.write_text("cluster_id,strategy,status,reason,ik,completely_removed\na,center,accepted,,success,\n")
    assert cli.main(["run", "--replay", str(log), "--out", str(tmp_path / "o")]) == 2
    err = capsys.readouterr().err
    assert err.startswith("blossomsim: error: ") and "line 2" in err
    assert cli.main(["run", "--replay", str(tmp_path / "nope.log"), "--out", str(tmp_path / "o")]) == 2


def test_config_error_exit_2(tmp_path, capsys):
    bad = tmp_path / "bad.yaml"
    bad.write_text("scene:\n  cluster_count: 3\n  clustr_radius: [0.1, 0.1]\n")
    assert cli.main(["run", "--config", str(bad), "--out", str(tmp_path / "o")]) == 2
    assert f"{bad}:3: unknown key 'clustr_radius'" in capsys.readouterr().err


def test_invalid_override_exit_2(tmp_path, capsys):
    assert cli.main(["run", "--replicates", "0", "--out", str(tmp_path)]) == 2


def test_invariant_violation_exit_3(tmp_path, small_cfg, monkeypatch, capsys):
    def boom(*a, **k):
        raise PipelineInvariantError("phase durations do not add up")

    monkeypatch.setattr(cli, "run_replicates", boom)
    assert cli.main(["run", "--config", str(small_cfg), "--out", str(tmp_path)]) == 3
    assert "invariant violated" in capsys.readouterr().err
