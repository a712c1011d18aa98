"""Gradual magnitude pruning against an accuracy goal."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
import numpy.typing as npt

from .const import (
    DEFAULT_MIN_REMAINING,
    DEFAULT_RETRAIN_EPOCHS,
    DEFAULT_STEP_FRACTION,
    GOAL_EXPLICIT,
    GOAL_MODES,
)
from .errors import ConfigError, GoalUnreachableError, LedgerError, PruneError
from .nn import IndexArray, Tensor
from .training import TaskTrainer

_LOGGER = logging.getLogger(__name__)


@dataclass(frozen=True)
class PruneSchedule:
    """How much to prune per step and how long to retrain after it."""

    step_fraction: float = DEFAULT_STEP_FRACTION
    retrain_epochs: int = DEFAULT_RETRAIN_EPOCHS
    min_remaining: int = DEFAULT_MIN_REMAINING

    def __post_init__(self) -> None:
        """Validate the schedule."""
        if not 0 < self.step_fraction < 1:
            raise ConfigError("step_fraction must lie strictly between 0 and 1")
        if self.retrain_epochs < 1:
            raise ConfigError("retrain_epochs must be at least 1")
        if self.min_remaining < 0:
            raise ConfigError("min_remaining must be non-negative")


@dataclass(frozen=True)
class AccuracyGoal:
    """Target accuracy for one task and where it came from."""

    value: float
    source: str = GOAL_EXPLICIT

    def __post_init__(self) -> None:
        """Validate the goal."""
        if not 0.0 <= self.value <= 1.0:
            raise ConfigError(f"Accuracy goal {self.value} outside [0, 1]")
        if self.source not in GOAL_MODES:
            raise ConfigError(f"Unknown goal source {self.source!r}")


def _smallest(params: Tensor, candidates: IndexArray, count: int) -> IndexArray:
    """Return the ``count`` candidates of smallest magnitude, lower index first."""
    if count <= 0:
        return np.zeros(0, dtype=np.int64)
    order = np.lexsort((candidates, np.abs(params[candidates])))
    return np.sort(candidates[order[:count]])


def select_prune_set(
    params: Tensor, candidates: npt.ArrayLike, fraction: float
) -> IndexArray:
    """Return the ``floor(fraction * |candidates|)`` smallest-magnitude candidates.

    Ties are broken by lower flat index first.
    """
    pool = np.unique(np.asarray(candidates, dtype=np.int64))
    if pool.size == 0:
        raise PruneError("No candidates to prune")
    if not 0.0 <= fraction <= 1.0:
        raise PruneError(f"Prune fraction {fraction} outside [0, 1]")
    return _smallest(params, pool, math.floor(fraction * pool.size))


def _step_prune_set(
    trainer: TaskTrainer,
    candidates: IndexArray,
    layer_of: npt.NDArray[np.int64],
    schedule: PruneSchedule,
) -> IndexArray:
    """Choose the next step's prune set, keeping a per-layer floor."""
    candidate_layers = layer_of[candidates]
    layers, counts = np.unique(candidate_layers, return_counts=True)
    remaining = dict(zip(layers.tolist(), counts.tolist()))
    eligible = candidates[
        np.array(
            [remaining[layer] > schedule.min_remaining for layer in candidate_layers],
            dtype=bool,
        )
    ]
    if eligible.size == 0:
        return eligible

    count = max(1, math.floor(schedule.step_fraction * candidates.size))
    chosen = _smallest(trainer.net.params, eligible, min(count, eligible.size))

    kept: list[IndexArray] = []
    for layer in np.unique(layer_of[chosen]).tolist():
        in_layer = chosen[layer_of[chosen] == layer]
        allowed = remaining[layer] - schedule.min_remaining
        kept.append(_smallest(trainer.net.params, in_layer, allowed))
    return np.sort(np.concatenate(kept))


def gradual_prune(
    trainer: TaskTrainer,
    task_id: int,
    goal: AccuracyGoal,
    schedule: PruneSchedule,
) -> tuple[IndexArray, float]:
    """Prune the task's trainable weights step by step while the goal holds.

    Each step snapshots the trainer, zeroes a ``step_fraction`` of the
    remaining candidates and retrains for up to ``retrain_epochs``. A step
    that cannot get back to the goal is rolled back and ends the procedure.

    Returns:
        The surviving trainable indices and the accuracy of the final state

    Raises:
        GoalUnreachableError: If the starting model is already below the goal
    """
    if trainer.task_id != task_id:
        raise LedgerError(f"Trainer is learning task {trainer.task_id}, not {task_id}")
    accuracy = trainer.evaluate()
    if accuracy < goal.value:
        raise GoalUnreachableError(accuracy, goal.value, "before pruning")

    layer_of = trainer.net.layer_of()
    steps = 0
    while True:
        candidates = np.flatnonzero(trainer.trainable).astype(np.int64)
        if candidates.size == 0:
            break
        pruned = _step_prune_set(trainer, candidates, layer_of, schedule)
        if pruned.size == 0:
            break

        snapshot = trainer.snapshot()
        trainer.prune(pruned)
        retrained = trainer.evaluate()
        for _ in range(schedule.retrain_epochs):
            trainer.train_epoch()
            retrained = trainer.evaluate()
            if retrained >= goal.value:
                break

        if retrained < goal.value:
            trainer.restore(snapshot)
            _LOGGER.debug(
                "Task %d prune step %d fell to %.4f (goal %.4f), rolled back",
                task_id,
                steps + 1,
                retrained,
                goal.value,
            )
            break
        steps += 1
        accuracy = retrained
        _LOGGER.debug(
            "Task %d prune step %d removed %d weights, %d remain, accuracy %.4f",
            task_id,
            steps,
            pruned.size,
            candidates.size - pruned.size,
            accuracy,
        )

    survivors = np.flatnonzero(trainer.trainable).astype(np.int64)
    _LOGGER.info(
        "Task %d compacted to %d weights in %d steps (accuracy %.4f, goal %.4f)",
        task_id,
        survivors.size,
        steps,
        accuracy,
        goal.value,
    )
    return survivors, accuracy
