import csv
import json

import pytest

from critrouter import cli
from critrouter.config import env_to_dict, load_config
from critrouter.env import ConfigError
from critrouter.policy import FeatureLayout, load_checkpoint
from critrouter.trainer import NumericalError, TrainRecord


def small_config(tmp_path, **train):
    cfg = {"train": {"batch_size": 8, "iterations": 3, **train}}
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg))
    return path


def run(*argv):
    return cli.main([str(a) for a in argv])


def test_train_writes_artifacts(tmp_path):
    cfg = small_config(tmp_path)
    assert run("train", "--config", cfg, "--out", tmp_path / "a") == 0
    assert (tmp_path / "a" / "checkpoint.bin").is_file()
    with open(tmp_path / "a" / "train.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["iter", "reward_mod", "reward_raw", "route_acc", "verify_acc", "usage_1", "usage_2", "usage_3", "grad_norm"]
    assert len(rows) == 4


def test_same_seed_same_csv(tmp_path):
    cfg = small_config(tmp_path)
    for d in ("a", "b"):
        assert run("train", "--config", cfg, "--out", tmp_path / d, "--seed", 7) == 0
    assert (tmp_path / "a" / "train.csv").read_bytes() == (tmp_path / "b" / "train.csv").read_bytes()
    assert (tmp_path / "a" / "checkpoint.bin").read_bytes() == (tmp_path / "b" / "checkpoint.bin").read_bytes()


def test_zero_iterations_keeps_initial_params(tmp_path):
    cfg = small_config(tmp_path)
    assert run("train", "--config", cfg, "--out", tmp_path, "--iterations", 0) == 0
    env, config = load_config(cfg)
    p = load_checkpoint(tmp_path / "checkpoint.bin", FeatureLayout(config.horizon, env.K, config.bins, env.signal))
    assert not p.weights.any()


def test_bad_config_exit_2(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert run("train", "--config", bad, "--out", tmp_path) == 2
    assert run("train", "--config", tmp_path / "missing.json", "--out", tmp_path) == 2
    bad.write_text(json.dumps({"train": {"group_size": 1}}))
    assert run("train", "--config", bad, "--out", tmp_path) == 2
    assert "error" in capsys.readouterr().err


def test_numerical_failure_exit_3(tmp_path, monkeypatch):
    rec = TrainRecord(1, 0.0, 0.0, 0.0, 0.0, (0.0, 0.0, 0.0), float("nan"))

    def boom(config, env, **kw):
        raise NumericalError("non-finite gradient at iteration 1", rec, [rec])

    monkeypatch.setattr(cli, "train", boom)
    assert run("train", "--config", small_config(tmp_path), "--out", tmp_path) == 3
    assert (tmp_path / "train.csv").read_text().count("\n") == 2


def test_eval_checkpoint_and_missing(tmp_path):
    cfg = small_config(tmp_path)
    run("train", "--config", cfg, "--out", tmp_path)
    assert run("eval", "--config", cfg, "--checkpoint", tmp_path / "checkpoint.bin", "--out", tmp_path, "--n", 50) == 0
    m = json.loads((tmp_path / "eval.json").read_text())
    assert m["n"] == 50 and (tmp_path / "eval.csv").is_file()
    assert run("eval", "--checkpoint", tmp_path / "nope.bin", "--out", tmp_path) == 2
    assert run("eval", "--out", tmp_path) == 2


def test_eval_turn_budgets_write_two_files(tmp_path):
    cfg = small_config(tmp_path)
    run("train", "--config", cfg, "--out", tmp_path)
    for T in (1, 3):
        assert run("eval", "--config", cfg, "--checkpoint", tmp_path / "checkpoint.bin", "--out", tmp_path, "--turns", T, "--name", f"eval_T{T}", "--n", 200, "--budget", "off") == 0
    a = json.loads((tmp_path / "eval_T1.json").read_text())
    b = json.loads((tmp_path / "eval_T3.json").read_text())
    assert a["horizon"] == 1 and b["horizon"] == 3


def test_eval_random_baseline(tmp_path):
    assert run("eval", "--baseline", "random", "--out", tmp_path, "--n", 6000, "--budget", "off") == 0
    m = json.loads((tmp_path / "eval.json").read_text())
    assert abs(m["accuracy"] - 0.574) <= 0.02
    assert run("eval", "--baseline", "fixed:8", "--out", tmp_path) == 2


def test_ablation_rows_and_plot(tmp_path):
    cfg = small_config(tmp_path)
    assert run("ablate-xi", "--config", cfg, "--xi-grid", "0,0,0;0.25,0.125,0", "--out", tmp_path / "two", "--n", 100) == 0
    rows = (tmp_path / "two" / "ablation.csv").read_text().strip().split("\n")
    assert len(rows) == 3
    svg = (tmp_path / "two" / "ablation.svg").read_text()
    assert svg.count("agent 1, xi=") >= 2
    assert run("ablate-xi", "--config", cfg, "--xi-grid", "0.25,0.125,0", "--out", tmp_path / "one", "--n", 100) == 0
    assert len((tmp_path / "one" / "ablation.csv").read_text().strip().split("\n")) == 2
    assert run("ablate-xi", "--config", cfg, "--xi-grid", "0.1,0.2", "--out", tmp_path) == 2


def test_plots_are_byte_stable(tmp_path):
    cfg = small_config(tmp_path)
    for d in ("a", "b"):
        run("ablate-xi", "--config", cfg, "--xi-grid", "0,0,0", "--out", tmp_path / d, "--n", 50)
    assert (tmp_path / "a" / "ablation.svg").read_bytes() == (tmp_path / "b" / "ablation.svg").read_bytes()


def test_sweep_command(tmp_path):
    cfg = small_config(tmp_path)
    run("train", "--config", cfg, "--out", tmp_path)
    assert run("sweep", "--config", cfg, "--checkpoint", tmp_path / "checkpoint.bin", "--out", tmp_path, "--turns-list", "1,2,3", "--n", 200) == 0
    rows = list(csv.DictReader(open(tmp_path / "sweep.csv")))
    ex = [float(r["exhaustion_fraction"]) for r in rows]
    assert ex[0] == 1.0 and ex == sorted(ex, reverse=True)


def test_report(tmp_path):
    cfg = small_config(tmp_path)
    for seed in (1, 2):
        d = tmp_path / "runs" / f"s{seed}"
        run("train", "--config", cfg, "--out", d, "--seed", seed)
        run("eval", "--config", cfg, "--checkpoint", d / "checkpoint.bin", "--out", d, "--seed", seed, "--n", 100)
    assert run("report", tmp_path / "runs") == 0
    text = (tmp_path / "runs" / "summary.md").read_text()
    assert "| policy |" in text and "±" in text
    (tmp_path / "empty").mkdir()
    assert run("report", tmp_path / "empty") == 2


def test_config_is_not_modified(tmp_path):
    cfg = small_config(tmp_path)
    before = cfg.read_bytes()
    run("train", "--config", cfg, "--out", tmp_path)
    run("eval", "--config", cfg, "--baseline", "oracle", "--out", tmp_path, "--n", 50)
    assert cfg.read_bytes() == before


def test_pool_section_roundtrip(tmp_path):
    env, _ = load_config(None)
    path = tmp_path / "pool.json"
    path.write_text(json.dumps({"pool": env_to_dict(env)}))
    env2, cfg2 = load_config(path)
    assert env_to_dict(env2) == env_to_dict(env)
    assert cfg2.xi == tuple(a.xi for a in env.agents)


def test_pool_validation(tmp_path):
    path = tmp_path / "p.json"
    path.write_text(json.dumps({"pool": {"agents": [{"name": "x", "success_prob": {"easy": 0.5}}]}}))
    with pytest.raises(ConfigError):
        load_config(path)
    path.write_text(json.dumps({"pool": {"difficulty_weights": [0.5, 0.5, 0.5]}}))
    with pytest.raises(ConfigError):
        load_config(path)
    path.write_text(json.dumps({"train": {"nonsense": 1}}))
    with pytest.raises(ConfigError):
        load_config(path)
