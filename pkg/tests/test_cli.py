"""Tests for the command-line interface."""
from __future__ import annotations

import numpy as np
import pytest

from cpg.cli import build_parser, main
from cpg.config import load_config
from cpg.const import (
    ENV_SEED,
    EXIT_CONFIG_ERROR,
    EXIT_DATA_ERROR,
    EXIT_GOAL_UNMET,
    EXIT_OK,
)
from cpg.data import gen_synthetic_tasks


@pytest.fixture
def checkpoint_path(write_config, tmp_path, monkeypatch):
    """Run a small experiment through the CLI and return its checkpoint."""
    monkeypatch.delenv(ENV_SEED, raising=False)
    path = tmp_path / "run.cpg"
    assert main(["run", "--config", write_config(checkpoint=str(path))]) in (
        EXIT_OK,
        EXIT_GOAL_UNMET,
    )
    return path


def _eval_csv(tmp_path, config_path: str) -> str:
    """Write task 1's eval split with its original class ids."""
    config = load_config(config_path, environ={})
    task = gen_synthetic_tasks(
        config["n_tasks"],
        config["classes_per_task"],
        config["dim"],
        config["per_class"],
        config["sep"],
        config["seed"],
    ).tasks[0]
    labels = np.asarray(task.classes)[task.eval.labels]
    header = ",".join(f"x{i}" for i in range(task.eval.dim)) + ",label"
    lines = [header] + [
        ",".join(f"{v:.9g}" for v in row) + f",{label}"
        for row, label in zip(task.eval.samples, labels)
    ]
    path = tmp_path / "task1.csv"
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return str(path)


def test_parser_requires_a_command():
    """Test the parser refuses a missing subcommand."""
    with pytest.raises(SystemExit):
        build_parser().parse_args([])


def test_run_prints_summary(write_config, tmp_path, monkeypatch, capsys):
    """Test a run writes its checkpoint and report and prints the average."""
    monkeypatch.setenv(ENV_SEED, "5")
    path = tmp_path / "run.cpg"
    report = tmp_path / "run.csv"

    code = main(
        ["run", "--config", write_config(checkpoint=str(path), report=str(report))]
    )

    assert code in (EXIT_OK, EXIT_GOAL_UNMET)
    assert path.exists()
    assert report.read_text(encoding="utf-8").splitlines()[-1].startswith("avg,")
    assert capsys.readouterr().out.startswith("average ")


def test_run_rejects_unknown_config_key(write_config, monkeypatch):
    """Test an unknown key exits with the configuration error code."""
    monkeypatch.delenv(ENV_SEED, raising=False)
    assert main(["run", "--config", write_config(colour="blue")]) == EXIT_CONFIG_ERROR


@pytest.mark.parametrize("overrides", [{"threshold": "nan"}, {"lr": "inf"}])
def test_run_rejects_non_finite_values(write_config, monkeypatch, overrides):
    """Test non-finite rates and thresholds exit with the configuration error code."""
    monkeypatch.delenv(ENV_SEED, raising=False)
    assert main(["run", "--config", write_config(**overrides)]) == EXIT_CONFIG_ERROR


def test_run_missing_config(tmp_path):
    """Test a missing config file is a configuration error."""
    assert main(["run", "--config", str(tmp_path / "none.conf")]) == EXIT_CONFIG_ERROR


def test_eval_scores_a_task(checkpoint_path, write_config, tmp_path, capsys):
    """Test eval restricts CSV data to the task's classes and reports accuracy."""
    data = _eval_csv(tmp_path, write_config())
    capsys.readouterr()

    code = main(
        ["eval", "--checkpoint", str(checkpoint_path), "--task", "1", "--data", data]
    )

    assert code == EXIT_OK
    out = capsys.readouterr().out
    assert out.startswith("task 1: accuracy")
    assert "on 12 samples" in out


def test_eval_errors(checkpoint_path, write_config, tmp_path):
    """Test unknown tasks, missing checkpoints and IDX without labels."""
    data = _eval_csv(tmp_path, write_config())
    assert (
        main(["eval", "--checkpoint", str(checkpoint_path), "--task", "9", "--data", data])
        == EXIT_DATA_ERROR
    )
    assert (
        main(["eval", "--checkpoint", str(tmp_path / "none.cpg"), "--task", "1",
              "--data", data])
        == EXIT_DATA_ERROR
    )
    assert (
        main(["eval", "--checkpoint", str(checkpoint_path), "--task", "1",
              "--data", str(tmp_path / "images.idx")])
        == EXIT_DATA_ERROR
    )


def test_eval_rejects_non_finite_csv(checkpoint_path, tmp_path):
    """Test a NaN feature in the eval CSV exits with the data error code."""
    data = tmp_path / "nan.csv"
    header = ",".join(f"x{i}" for i in range(6)) + ",label"
    data.write_text(f"{header}\nnan,0,0,0,0,0,0\n", encoding="utf-8")
    assert (
        main(["eval", "--checkpoint", str(checkpoint_path), "--task", "1",
              "--data", str(data)])
        == EXIT_DATA_ERROR
    )


def test_report_command(checkpoint_path, tmp_path, capsys):
    """Test report writes the CSV it prints."""
    out = tmp_path / "report.csv"
    capsys.readouterr()

    assert main(["report", "--checkpoint", str(checkpoint_path), "--out", str(out)]) == 0

    text = out.read_text(encoding="utf-8")
    assert capsys.readouterr().out == text
    assert text.startswith("row,accuracy,goal,flag,exp,red\n")
    assert len(text.splitlines()) == 5


def test_inspect_command(checkpoint_path, capsys):
    """Test inspect lists every task and the size breakdown."""
    capsys.readouterr()
    assert main(["inspect", "--checkpoint", str(checkpoint_path)]) == EXIT_OK

    out = capsys.readouterr().out
    assert "task 1: owns" in out
    assert "task 3: owns" in out
    assert "bytes: backbone" in out


def test_inspect_missing_checkpoint(tmp_path):
    """Test a missing checkpoint exits with the data error code."""
    assert main(["inspect", "--checkpoint", str(tmp_path / "x.cpg")]) == EXIT_DATA_ERROR
