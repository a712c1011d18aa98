"""Tests for run configuration files."""
from __future__ import annotations

import logging

import pytest

from cpg.config import (
    hyper_from_config,
    load_config,
    parse_config_text,
    policy_from_config,
    schedule_from_config,
    validate_config,
)
from cpg.const import DEFAULT_HIDDEN, DEFAULT_MAX_EXPANSION, ENV_SEED
from cpg.errors import ConfigError


def test_parse_config_text():
    """Test comments and blank lines are skipped and values kept raw."""
    raw = parse_config_text("# run\nseed = 3  # inline\n\nhidden=64, 32\n")
    assert raw == {"seed": "3", "hidden": "64, 32"}


@pytest.mark.parametrize("text", ["seed 3\n", "= 3\n", "seed = 1\nseed = 2\n"])
def test_parse_config_text_rejects_bad_lines(text):
    """Test lines without a key, without '=' or repeated keys are errors."""
    with pytest.raises(ConfigError):
        parse_config_text(text)


def test_validate_config_defaults():
    """Test an empty config gets every default."""
    config = validate_config({}, environ={})
    assert config["seed"] == 0
    assert config["task_source"] == "synthetic"
    assert config["hidden"] == DEFAULT_HIDDEN
    assert config["max_expansion"] == DEFAULT_MAX_EXPANSION
    assert config["reuse_shadow"] is True
    assert "checkpoint" not in config


def test_load_config_coerces_values(write_config):
    """Test strings from the file become typed values."""
    config = load_config(write_config(pick_all="yes"), environ={})

    assert config["seed"] == 5
    assert config["hidden"] == (12, 8)
    assert config["goal"] == pytest.approx(0.8)
    assert config["pick_all"] is True

    hyper = hyper_from_config(config)
    assert hyper.lr == pytest.approx(0.05)
    assert hyper.pick_all
    assert schedule_from_config(config).step_fraction == pytest.approx(0.25)
    assert policy_from_config(config).max_retries == 1


def test_seed_environment_override(write_config, caplog):
    """Test CPG_SEED replaces the configured seed with a warning."""
    with caplog.at_level(logging.WARNING):
        config = load_config(write_config(), environ={ENV_SEED: "17"})
    assert config["seed"] == 17
    assert ENV_SEED in caplog.text

    with pytest.raises(ConfigError):
        load_config(write_config(), environ={ENV_SEED: "seventeen"})
    with pytest.raises(ConfigError):
        load_config(write_config(), environ={ENV_SEED: "-1"})
    with pytest.raises(ConfigError):
        load_config(write_config(), environ={ENV_SEED: str(2**64)})


@pytest.mark.parametrize(
    "overrides",
    [
        {"colour": "blue"},
        {"goal": 1.5},
        {"step_fraction": 1.0},
        {"hidden": "12, 0"},
        {"hidden": "wide"},
        {"max_expansion": 0.5},
        {"goal_mode": "median"},
        {"batch_size": 0},
        {"pick_all": "sometimes"},
        {"threshold": "nan"},
        {"lr": "inf"},
        {"mask_lr": "nan"},
        {"shadow_init": "-inf"},
        {"growth_noise": "inf"},
        {"goal": "nan"},
        {"seed": 2**64},
        {"order_seed": -1},
    ],
)
def test_invalid_values_are_rejected(write_config, overrides):
    """Test unknown keys and out-of-range values are configuration errors."""
    with pytest.raises(ConfigError):
        load_config(write_config(**overrides), environ={})


def test_data_sources_need_their_paths(write_config):
    """Test file sources require their paths and test files come in pairs."""
    with pytest.raises(ConfigError):
        load_config(write_config(task_source="idx"), environ={})
    with pytest.raises(ConfigError):
        load_config(write_config(task_source="csv"), environ={})
    with pytest.raises(ConfigError):
        load_config(write_config(test_images="t.idx"), environ={})

    config = load_config(
        write_config(task_source="csv", train_csv="train.csv"), environ={}
    )
    assert config["train_csv"] == "train.csv"


def test_load_config_missing_file(tmp_path):
    """Test an unreadable config file is a configuration error."""
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.conf", environ={})


def test_largest_seed_is_accepted(write_config):
    """Test the largest seed a checkpoint can store passes validation."""
    config = load_config(write_config(seed=2**64 - 1), environ={})
    assert config["seed"] == 2**64 - 1
