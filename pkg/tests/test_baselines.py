"""Tests for independent-learning baselines."""
from __future__ import annotations

import pytest

from cpg.baselines import baseline_accuracies, finetune_trials, train_scratch
from cpg.const import BASELINE_FINETUNE, BASELINE_SCRATCH
from cpg.errors import ConfigError

from .conftest import HIDDEN


def test_train_scratch_learns_easy_task(easy_tasks, hyper):
    """Test an independent model separates two distant blobs."""
    accuracy = train_scratch(easy_tasks.tasks[0], HIDDEN, hyper, seed=1)
    assert 0.9 <= accuracy <= 1.0
    assert accuracy == train_scratch(easy_tasks.tasks[0], HIDDEN, hyper, seed=1)


def test_finetune_trials_shape_and_determinism(easy_tasks, hyper):
    """Test one score per task and trial, repeated exactly for a seed."""
    scores = finetune_trials(easy_tasks, HIDDEN, hyper, trials=2, seed=3)

    assert len(scores) == 3
    assert all(len(task_scores) == 2 for task_scores in scores)
    assert all(0.0 <= s <= 1.0 for task_scores in scores for s in task_scores)
    assert scores == finetune_trials(easy_tasks, HIDDEN, hyper, trials=2, seed=3)


def test_baseline_accuracies_sources(easy_tasks, hyper):
    """Test both baseline sources give a score list per task."""
    scratch = baseline_accuracies(easy_tasks, BASELINE_SCRATCH, HIDDEN, hyper, trials=1)
    finetune = baseline_accuracies(
        easy_tasks, BASELINE_FINETUNE, HIDDEN, hyper, trials=1
    )
    assert [len(s) for s in scratch] == [1, 1, 1]
    assert [len(s) for s in finetune] == [1, 1, 1]


def test_baseline_accuracies_rejects_bad_requests(easy_tasks, hyper):
    """Test unknown sources and zero trials are configuration errors."""
    with pytest.raises(ConfigError):
        baseline_accuracies(easy_tasks, "ensemble", HIDDEN, hyper)
    with pytest.raises(ConfigError):
        baseline_accuracies(easy_tasks, BASELINE_SCRATCH, HIDDEN, hyper, trials=0)
    with pytest.raises(ConfigError):
        finetune_trials(easy_tasks, HIDDEN, hyper, trials=0)
