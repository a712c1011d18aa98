"""Independent-learning baselines used to derive accuracy goals."""

from __future__ import annotations

import logging
from collections.abc import Sequence

import numpy as np

from .const import BASELINE_FINETUNE, BASELINE_SCRATCH, DEFAULT_BASELINE_TRIALS
from .controller import build_backbone
from .data import TaskData, TaskSequence
from .errors import ConfigError
from .ledger import init_ledger
from .nn import Network, build_network
from .training import Hyper, TaskTrainer, derive_seed

_LOGGER = logging.getLogger(__name__)


def _fit(net: Network, task: TaskData, hyper: Hyper, seed: int) -> TaskTrainer:
    """Train every weight of ``net`` and a fresh head on one task."""
    trainer = TaskTrainer(net, init_ledger(net.n_params), 1, task, hyper, seed)
    for _ in range(hyper.epochs):
        trainer.train_epoch()
    return trainer


def train_scratch(
    task: TaskData, hidden: Sequence[int], hyper: Hyper, seed: int
) -> float:
    """Return the eval accuracy of an independent model trained on one task."""
    net = build_network(build_backbone(task.train.dim, hidden), seed)
    return _fit(net, task, hyper, seed).evaluate()


def finetune_trials(
    tasks: TaskSequence,
    hidden: Sequence[int],
    hyper: Hyper,
    trials: int = DEFAULT_BASELINE_TRIALS,
    seed: int = 0,
) -> list[list[float]]:
    """Return per-task accuracies of fine-tuning chains.

    In each trial the first task trains from scratch; every later task
    fine-tunes the whole model of a randomly chosen earlier task under a new
    head.
    """
    if trials < 1:
        raise ConfigError("At least one baseline trial is required")
    scores: list[list[float]] = [[] for _ in tasks.tasks]
    for trial in range(trials):
        rng = np.random.default_rng(derive_seed(seed, trial))
        models: list[Network] = []
        for index, task in enumerate(tasks.tasks):
            run_seed = derive_seed(seed, trial, index)
            if index == 0:
                net = build_network(build_backbone(task.train.dim, hidden), run_seed)
            else:
                net = models[int(rng.integers(index))]
            trainer = _fit(net, task, hyper, run_seed)
            models.append(trainer.net)
            scores[index].append(trainer.evaluate())
        _LOGGER.debug("Fine-tune trial %d: %s", trial, [s[-1] for s in scores])
    return scores


def baseline_accuracies(
    tasks: TaskSequence,
    source: str,
    hidden: Sequence[int],
    hyper: Hyper,
    trials: int = DEFAULT_BASELINE_TRIALS,
    seed: int = 0,
) -> list[list[float]]:
    """Return ``trials`` baseline accuracies for every task in order."""
    if source == BASELINE_FINETUNE:
        scores = finetune_trials(tasks, hidden, hyper, trials, seed)
    elif source == BASELINE_SCRATCH:
        if trials < 1:
            raise ConfigError("At least one baseline trial is required")
        scores = [
            [
                train_scratch(task, hidden, hyper, derive_seed(seed, index, trial))
                for trial in range(trials)
            ]
            for index, task in enumerate(tasks.tasks)
        ]
    else:
        raise ConfigError(f"Unknown baseline {source!r}")
    _LOGGER.info(
        "%s baselines: %s",
        source,
        ", ".join(f"{np.mean(s):.4f}" for s in scores),
    )
    return scores
