import csv
import io
import json

import pytest

from dmguide.cli import main
from dmguide.config import RunConfig, load_config

SMALL = ["--set", "synth.n_episodes=600", "--set", "ppo.iterations=3", "--set", "idm.human_fraction=0.2"]
PIPELINE = [
    ["synth-gen"], ["parse"], ["build-episodes"], ["train-idm"], ["pseudo-label"], ["mine-intents"],
    ["train-intent-gen"], ["train-player"], ["train-dm", "--variant", "human"], ["train-dm", "--variant", "idm"],
    ["train-dm", "--variant", "random"], ["train-dm", "--variant", "mined"], ["train-dm-rl", "--variant", "mined"],
    ["train-dm-rl", "--variant", "gen"], ["evaluate"],
]


def run(cmd, workdir, extra=()):
    return main([*cmd, "--workdir", str(workdir), *SMALL, *extra])


@pytest.fixture(scope="module")
def pipeline_dirs(tmp_path_factory):
    dirs = []
    for name in ("a", "b"):
        d = tmp_path_factory.mktemp(name)
        for cmd in PIPELINE:
            assert run(cmd, d) == 0, cmd
        dirs.append(d)
    return dirs


def test_pipeline_produces_report(pipeline_dirs):
    rows = list(csv.DictReader(io.StringIO((pipeline_dirs[0] / "report.csv").read_text())))
    assert [r["model_id"] for r in rows] == [
        "Human-Label", "IDM-Label", "Random-Label", "Mined Intent", "Gen. Intent", "RL+Mined Intent", "RL+Gen. Intent"]
    assert (pipeline_dirs[0] / "report.txt").read_text().startswith("# star =")


def test_rerun_is_byte_identical(pipeline_dirs):
    a, b = pipeline_dirs
    names = sorted(p.name for p in a.iterdir())
    assert names == sorted(p.name for p in b.iterdir())
    for name in names:
        assert (a / name).read_bytes() == (b / name).read_bytes(), name


def test_rerunning_a_stage_is_idempotent(pipeline_dirs, tmp_path):
    d = pipeline_dirs[0]
    before = (d / "pm_eval.model").read_bytes()
    assert run(["train-player"], d) == 0
    assert (d / "pm_eval.model").read_bytes() == before


def test_artifacts_carry_headers(pipeline_dirs):
    d = pipeline_dirs[0]
    meta = json.loads((d / "episodes.jsonl.meta.json").read_text())
    assert {"version", "command", "config_hash", "seed", "n_actions"} <= set(meta)
    assert meta["n_actions"] == 23
    head = (d / "pm_reward.model").read_text().splitlines()[:8]
    assert head[0] == "linmodel v1 23 32768"
    assert any(line.startswith("# config_hash=") for line in head)
    assert any(line.startswith("# command=train-player") for line in head)


def test_rl_without_player_model_names_producer(tmp_path, capsys):
    for cmd in PIPELINE[:7]:
        assert run(cmd, tmp_path) == 0
    assert run(["train-dm", "--variant", "mined"], tmp_path) == 0
    capsys.readouterr()
    assert run(["train-dm-rl", "--variant", "mined"], tmp_path) == 1
    assert "`dmguide train-player`" in capsys.readouterr().err


def test_config_errors_before_work(tmp_path, capsys):
    assert main(["synth-gen", "--workdir", str(tmp_path / "w"), "--set", "synth.noise=2"]) == 1
    assert "synth" in capsys.readouterr().err
    assert not (tmp_path / "w").exists()
    assert main(["synth-gen", "--workdir", str(tmp_path / "w"), "--set", "nosuch.key=1"]) == 1
    assert main(["synth-gen", "--workdir", str(tmp_path / "w"), "--set", "idm.threshold=1.0"]) == 1
    assert not (tmp_path / "w").exists()


def test_config_file_and_overrides(tmp_path):
    ini = tmp_path / "run.ini"
    ini.write_text("[run]\nseed = 4\n\n[synth]\nnoise = 0.25\n\n[ppo]\nclip = 0.3\n")
    cfg = load_config(str(ini), ["synth.mode=ambiguous"])
    assert (cfg.seed, cfg.synth.noise, cfg.synth.mode, cfg.ppo.clip) == (4, 0.25, "ambiguous", 0.3)
    assert load_config(None, []) == RunConfig()
    with pytest.raises(ValueError):
        load_config(None, ["synth.noise"])


def test_config_round_trip_and_hash(tmp_path):
    cfg = load_config(None, ["run.seed=9", "policy.k_distractors=2"])
    ini = tmp_path / "c.ini"
    ini.write_text(cfg.to_ini())
    assert load_config(str(ini)) == cfg
    assert cfg.hash() == load_config(None, ["run.seed=9", "policy.k_distractors=2", "run.workdir=elsewhere"]).hash()
    assert cfg.hash() != RunConfig().hash()


def test_stage_seeds_differ_and_are_stable():
    cfg = RunConfig(seed=3)
    assert cfg.stage_seed("train-idm") != cfg.stage_seed("train-player")
    assert cfg.stage_seed("train-idm") == RunConfig(seed=3).stage_seed("train-idm")
    assert 0 <= cfg.stage_seed("x") < 2 ** 63


def test_matrix_command_structure(tmp_path):
    argv = ["matrix", "--seeds", "2", "--workdir", str(tmp_path), "--set", "synth.n_episodes=400",
            "--set", "ppo.iterations=2", "--set", "idm.human_fraction=0.2"]
    assert main(argv) == 0
    rows = list(csv.DictReader(io.StringIO((tmp_path / "matrix.csv").read_text())))
    assert len(rows) == 7
    assert "+/-" in (tmp_path / "matrix.txt").read_text()
    per_seed = list(csv.DictReader(io.StringIO((tmp_path / "matrix_per_seed.csv").read_text())))
    assert len(per_seed) == 14
