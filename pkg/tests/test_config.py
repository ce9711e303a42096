from pathlib import Path

import pytest

from fedlf.config import ExperimentConfig, dump_config, parse_config
from fedlf.errors import ConfigError


def test_empty_file_gives_paper_defaults(tmp_path):
    p = tmp_path / "empty.ini"
    p.write_text("")
    cfg = parse_config(p)
    assert cfg == ExperimentConfig()
    fl = cfg.fl()
    assert (fl.num_clients, fl.local_epochs, fl.batch_size, fl.learning_rate, fl.online_rate,
            fl.num_rounds) == (20, 5, 32, 0.1, 0.4, 200)
    w = fl.weights
    assert (w.smoothing_factor, w.tau, w.lam, w.gamma) == (0.25, 100.0, 0.01, 0.01)
    assert (cfg.head_threshold, cfg.tail_threshold) == (1500, 200)


def test_override_switches_method_only():
    cfg = parse_config(text="[federation]\nmethod = fedlf\n", overrides=["method=fedavg"])
    assert cfg.fl().method.method == "fedavg"
    assert cfg.replace(method="fedlf") == ExperimentConfig()
    assert parse_config(overrides=["fedlf.lambda=0.5"]).lam == 0.5


def test_constraint_and_unknown_keys_reported_together():
    with pytest.raises(ConfigError) as exc:
        parse_config(text="[fedlf]\nlambda = -1\nbogus = 3\n[data]\ntau = 5\n",
                     overrides=["num_rounds=ten", "nope=1"])
    text = str(exc.value)
    for piece in ("lambda", "bogus", "tau", "num_rounds", "nope"):
        assert piece in text
    assert len(exc.value.problems) == 5


def test_cifar_requires_existing_directory(tmp_path):
    with pytest.raises(ConfigError, match="data_path"):
        parse_config(overrides=["dataset=cifar10"])
    with pytest.raises(ConfigError, match="not a directory"):
        parse_config(overrides=["dataset=cifar10", f"data_path={tmp_path / 'missing'}"])
    cfg = parse_config(overrides=["dataset=cifar10", f"data_path={tmp_path}"])
    assert cfg.arch().input_dim == 3072


def test_threshold_cross_check():
    with pytest.raises(ConfigError, match="head_threshold"):
        parse_config(overrides=["head_threshold=10", "tail_threshold=20"])


def test_round_trip():
    cfg = parse_config(overrides=["hidden_widths=32,16", "use_center=off", "gamma=0.2",
                                  "format=jsonl", "learning_rate=0.05"])
    assert parse_config(text=dump_config(cfg)) == cfg


def test_quickstart_file_parses():
    cfg = parse_config(Path(__file__).parents[1] / "configs" / "quickstart.ini")
    assert (cfg.num_classes, cfg.input_dim, cfg.n_max, cfg.imbalance_factor, cfg.num_rounds) == \
        (10, 16, 500, 100.0, 30)
