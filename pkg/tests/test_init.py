"""Tests for building task sequences and running a full experiment."""
from __future__ import annotations

from unittest.mock import patch

import numpy as np
import pytest

from cpg import build_tasks, run_experiment, task_goals
from cpg.baselines import baseline_accuracies
from cpg.checkpoint import load_checkpoint
from cpg.config import hyper_from_config, load_config, validate_config
from cpg.controller import evaluate
from cpg.errors import LedgerError


def test_run_experiment_is_deterministic(write_config, tmp_path):
    """Test two runs of one config write identical reports and checkpoints."""
    outputs = []
    for name in ("a", "b"):
        config = load_config(
            write_config(
                f"{name}.conf",
                report=str(tmp_path / f"{name}.csv"),
                checkpoint=str(tmp_path / f"{name}.cpg"),
            ),
            environ={},
        )
        state, report = run_experiment(config)
        outputs.append(
            (
                (tmp_path / f"{name}.csv").read_bytes(),
                (tmp_path / f"{name}.cpg").read_bytes(),
                report.accuracies,
            )
        )

    assert outputs[0] == outputs[1]
    assert state.committed_tasks == 3
    assert outputs[0][0].decode().splitlines()[-1].startswith("avg,")


def test_run_experiment_respects_expansion_bound(write_config):
    """Test the backbone never grows past the configured bound."""
    config = load_config(write_config(max_expansion=1.2), environ={})

    state, report = run_experiment(config)

    assert report.expansion <= 1.2
    assert state.net.n_params <= int(1.2 * state.n0)
    assert len(report.accuracies) == 3
    assert report.task_order == (0, 1, 2)


def test_checkpoint_reproduces_final_accuracies(write_config, tmp_path):
    """Test a reloaded checkpoint scores every task as the run reported."""
    path = tmp_path / "run.cpg"
    config = load_config(write_config(checkpoint=str(path)), environ={})
    _, report = run_experiment(config)

    state = load_checkpoint(path)
    tasks = build_tasks(config)

    for task_id, task in enumerate(tasks.tasks, start=1):
        assert evaluate(state, task_id, task.eval) == report.accuracies[task_id - 1]


def test_run_experiment_detects_changed_logits(write_config):
    """Test a committed task whose logits move fails the run."""
    config = load_config(write_config(n_tasks=2), environ={})
    rng = np.random.default_rng(0)

    def drifting(state, task_id, samples):
        return rng.standard_normal((len(samples), 2))

    with patch("cpg.task_logits", side_effect=drifting), pytest.raises(LedgerError):
        run_experiment(config)


def test_build_tasks_from_csv(tmp_path):
    """Test a CSV source splits by class with a held-out share per task."""
    rng = np.random.default_rng(3)
    path = tmp_path / "train.csv"
    rows = ["a,b,label"]
    for label in range(4):
        for _ in range(10):
            a, b = rng.normal(size=2) + 5 * label
            rows.append(f"{a:.4f},{b:.4f},{label}")
    path.write_text("\n".join(rows) + "\n", encoding="utf-8")
    config = validate_config(
        {"task_source": "csv", "train_csv": str(path), "classes_per_task": "2"},
        environ={},
    )

    tasks = build_tasks(config)

    assert len(tasks) == 2
    assert [task.classes for task in tasks.tasks] == [(0, 1), (2, 3)]
    assert tasks.tasks[0].train.dim == 2
    assert len(tasks.tasks[0].train) + len(tasks.tasks[0].eval) == 20


def test_task_goals_from_baselines(write_config):
    """Test avg and top goals come from the baseline accuracies."""
    config = load_config(write_config(goal_mode="avg"), environ={})
    tasks = build_tasks(config)
    scores = [[0.7, 0.8], [0.9, 0.9], [0.6, 0.5]]

    with patch("cpg.baseline_accuracies", return_value=scores) as baselines:
        goals = task_goals(config, tasks)

    baselines.assert_called_once()
    assert [g.value for g in goals] == pytest.approx([0.75, 0.9, 0.55])
    assert all(g.source == "avg" for g in goals)

    config = load_config(
        write_config(goal_mode="top", top_delta=0.01, goal_offset=-0.02), environ={}
    )
    with patch("cpg.baseline_accuracies", return_value=scores):
        goals = task_goals(config, tasks)
    assert [g.value for g in goals] == pytest.approx([0.79, 0.89, 0.59])


def test_task_goals_explicit(write_config):
    """Test explicit mode repeats the configured goal for every task."""
    config = load_config(write_config(goal=0.7, goal_offset=0.05), environ={})
    goals = task_goals(config, build_tasks(config))
    assert [g.value for g in goals] == pytest.approx([0.75] * 3)


def _glyph_config(write_config, idx_digits, name: str, **overrides):
    """Load a five-task IDX config whose goals come from the best scratch model."""
    values = {
        "goal_mode": "max",
        "baseline_trials": 3,
        "epochs": 6,
        "pick_epochs": 6,
        **idx_digits,
        **overrides,
    }
    return load_config(write_config(name, **values), environ={})


def test_later_tasks_keep_pace_with_scratch(write_config, idx_digits):
    """Test tasks 2-5 average no worse than independent models over three seeds."""
    cpg_means, scratch_means = [], []
    for seed in range(3):
        config = _glyph_config(write_config, idx_digits, f"seed{seed}.conf", seed=seed)
        tasks = build_tasks(config)
        scores = baseline_accuracies(
            tasks,
            config["baseline"],
            config["hidden"],
            hyper_from_config(config),
            config["baseline_trials"],
            config["seed"],
        )

        with patch("cpg.baseline_accuracies", return_value=scores):
            _, report = run_experiment(config)

        assert len(report.accuracies) == 5
        cpg_means.append(np.mean(report.accuracies[1:]))
        scratch_means.append(np.mean([np.mean(trials) for trials in scores[1:]]))

    assert np.mean(cpg_means) >= np.mean(scratch_means) - 0.01


def test_average_accuracy_ignores_task_order(write_config, idx_digits):
    """Test the run average barely moves when the task order is shuffled."""
    averages = []
    for order_seed in (0, 1, 2):
        config = _glyph_config(
            write_config, idx_digits, f"order{order_seed}.conf", order_seed=order_seed
        )
        _, report = run_experiment(config)
        assert sorted(report.task_order) == [0, 1, 2, 3, 4]
        averages.append(report.average)

    assert max(averages) - min(averages) < 0.03
