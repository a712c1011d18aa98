"""Sequential task learning: compact, pick and grow.

The first task trains from scratch and is compacted. Every later task picks
from the weights earlier tasks committed, trains the free ones, widens the
backbone when that is not enough, and is compacted in turn. Committed
weights are never written again.
"""

from __future__ import annotations

import logging
import math
from collections.abc import Sequence
from dataclasses import dataclass, field

import numpy as np

from .const import (
    DEFAULT_GOAL_OFFSET,
    DEFAULT_INCREMENT_FRACTION,
    DEFAULT_MAX_EXPANSION,
    DEFAULT_MAX_RETRIES,
    DEFAULT_TOP_DELTA,
    GOAL_AVG,
    GOAL_EXPLICIT,
    GOAL_MAX,
    GOAL_MODES,
    LAYER_DENSE,
    LAYER_RELU,
)
from .data import Dataset, TaskData
from .errors import ConfigError, GoalUnreachableError, LedgerError, UnknownTaskError
from .ledger import Ledger, commit_task, compose_view, init_ledger
from .masks import MaskBits, ShadowMask, force_all_picks, freeze_mask, train_pick_round
from .nn import LayerSpec, Network, Tensor, build_network, forward, growth_cost, with_head
from .pruner import AccuracyGoal, PruneSchedule, gradual_prune
from .training import Hyper, TaskTrainer, pad_head

_LOGGER = logging.getLogger(__name__)


@dataclass(frozen=True)
class GrowthPolicy:
    """How far and how often the backbone may widen."""

    increment_fraction: float = DEFAULT_INCREMENT_FRACTION
    max_expansion: float = DEFAULT_MAX_EXPANSION
    max_retries: int = DEFAULT_MAX_RETRIES

    def __post_init__(self) -> None:
        """Validate the policy."""
        if self.max_expansion < 1.0:
            raise ConfigError("max_expansion must be at least 1")
        if self.increment_fraction <= 0:
            raise ConfigError("increment_fraction must be positive")
        if self.max_retries < 0:
            raise ConfigError("max_retries must be non-negative")


@dataclass(frozen=True)
class TaskRecord:
    """Everything a committed task needs to be evaluated later."""

    task_id: int
    mask: MaskBits
    head: Tensor
    head_in_width: int
    n_classes: int
    goal: AccuracyGoal
    achieved: float
    owned_count: int
    best_effort: bool = False
    classes: tuple[int, ...] = ()
    growth_events: int = 0
    n_params_at_commit: int = 0

    def __post_init__(self) -> None:
        """Check the head size."""
        expected = self.head_in_width * self.n_classes + self.n_classes
        if self.head.shape != (expected,):
            raise LedgerError(
                f"Head of task {self.task_id} has {self.head.size} parameters, "
                f"expected {expected}"
            )

    @property
    def head_param_count(self) -> int:
        """Return the number of head parameters."""
        return int(self.head.shape[0])


@dataclass
class CpgState:
    """Backbone, ledger and per-task records of one run."""

    net: Network
    ledger: Ledger
    records: list[TaskRecord] = field(default_factory=list)
    policy: GrowthPolicy = field(default_factory=GrowthPolicy)
    n0: int = 0
    seed: int = 0
    task_order: tuple[int, ...] = ()

    @property
    def committed_tasks(self) -> int:
        """Return the number of committed tasks."""
        return self.ledger.committed_tasks

    @property
    def expansion(self) -> float:
        """Return current parameters over initial parameters."""
        return self.net.n_params / self.n0

    @property
    def redundancy(self) -> float:
        """Return free parameters over initial parameters."""
        return self.ledger.free_count / self.n0

    def record(self, task_id: int) -> TaskRecord:
        """Return the record of a committed task."""
        if not 1 <= task_id <= len(self.records):
            raise UnknownTaskError(
                f"Task {task_id} is not committed ({len(self.records)} tasks)"
            )
        return self.records[task_id - 1]


def build_backbone(input_dim: int, hidden: Sequence[int]) -> list[LayerSpec]:
    """Return a dense/ReLU stack with the given hidden widths."""
    if not hidden:
        raise ConfigError("At least one hidden layer is required")
    spec: list[LayerSpec] = []
    width = input_dim
    for out_width in hidden:
        spec.append(LayerSpec(LAYER_DENSE, width, out_width))
        spec.append(LayerSpec(LAYER_RELU, out_width, out_width, has_bias=False))
        width = out_width
    return spec


def new_state(
    input_dim: int,
    hidden: Sequence[int],
    policy: GrowthPolicy | None = None,
    seed: int = 0,
) -> CpgState:
    """Return a fresh state with an initialized backbone and an empty ledger."""
    net = build_network(build_backbone(input_dim, hidden), seed)
    return CpgState(
        net=net,
        ledger=init_ledger(net.n_params),
        policy=policy or GrowthPolicy(),
        n0=net.n_params,
        seed=seed,
    )


def set_accuracy_goal(
    mode: str,
    baselines: Sequence[float] | None = None,
    value: float | None = None,
    top_delta: float = DEFAULT_TOP_DELTA,
    offset: float = DEFAULT_GOAL_OFFSET,
) -> AccuracyGoal:
    """Derive a task's accuracy goal.

    Args:
        mode: One of ``explicit``, ``avg``, ``max`` or ``top``
        baselines: Baseline accuracies, required unless ``mode`` is explicit
        value: The goal for explicit mode
        top_delta: Increment added in ``top`` mode
        offset: Added to the derived goal; the result is clipped to [0, 1]

    Raises:
        ConfigError: On an unknown mode or missing inputs
    """
    if mode not in GOAL_MODES:
        raise ConfigError(f"Unknown goal mode {mode!r}")
    if mode == GOAL_EXPLICIT:
        if value is None:
            raise ConfigError("Explicit goals need a value")
        target = value
    else:
        if not baselines:
            raise ConfigError(f"Goal mode {mode!r} needs baseline accuracies")
        scores = np.asarray(baselines, dtype=np.float64)
        mean, best = float(scores.mean()), float(scores.max())
        if mode == GOAL_AVG:
            target = mean
        elif mode == GOAL_MAX:
            target = best
        else:
            target = max(mean, best) + top_delta
    return AccuracyGoal(float(np.clip(target + offset, 0.0, 1.0)), mode)


def plan_growth(net: Network, policy: GrowthPolicy, n0: int) -> list[int] | None:
    """Return per-layer increments for one growth step, or None if none fit.

    Each dense layer gains ``ceil(increment_fraction * width)`` units. When
    that would break the expansion bound, the largest increment shrinks one
    unit at a time until it fits.
    """
    added = [
        math.ceil(policy.increment_fraction * layer.out_width)
        if layer.kind == LAYER_DENSE
        else 0
        for layer in net.layers
    ]
    budget = math.floor(policy.max_expansion * n0) - net.n_params
    while any(added) and growth_cost(net, added) > budget:
        added[int(np.argmax(added))] -= 1
    return added if any(added) else None


def _train_to_goal(trainer: TaskTrainer, goal: AccuracyGoal) -> float:
    """Train for ``epochs`` epochs, then on until the goal or ``max_epochs``."""
    hyper = trainer.hyper
    accuracy = 0.0
    for epoch in range(1, max(hyper.epochs, hyper.max_epochs) + 1):
        trainer.train_epoch()
        if epoch < hyper.epochs:
            continue
        accuracy = trainer.evaluate()
        if accuracy >= goal.value:
            break
    return accuracy


def _pick_phase(trainer: TaskTrainer, shadow: ShadowMask) -> tuple[ShadowMask, float]:
    """Train the mask and free weights for ``pick_epochs`` epochs."""
    pick_all = trainer.hyper.pick_all
    for _ in range(trainer.hyper.pick_epochs):
        shadow, _, _ = train_pick_round(
            trainer, shadow, trainer.batches(), learn_mask=not pick_all
        )
    return shadow, trainer.evaluate()


def _commit(
    state: CpgState,
    trainer: TaskTrainer,
    task: TaskData,
    mask: MaskBits,
    goal: AccuracyGoal,
    best_effort: bool,
    schedule: PruneSchedule,
) -> TaskRecord:
    """Compact the trainer's free weights and commit the survivors."""
    prune_goal = goal
    if best_effort:
        prune_goal = AccuracyGoal(min(goal.value, trainer.evaluate()), goal.source)
    survivors, achieved = gradual_prune(
        trainer, trainer.task_id, prune_goal, schedule
    )

    state.ledger = commit_task(trainer.ledger, trainer.task_id, survivors)
    state.net = trainer.net
    head = trainer.head.copy()
    head.setflags(write=False)
    record = TaskRecord(
        task_id=trainer.task_id,
        mask=mask,
        head=head,
        head_in_width=trainer.head_in_width,
        n_classes=trainer.n_classes,
        goal=goal,
        achieved=achieved,
        owned_count=int(survivors.size),
        best_effort=best_effort,
        classes=task.classes,
        growth_events=trainer.growth_events,
        n_params_at_commit=state.net.n_params,
    )
    state.records.append(record)
    if best_effort:
        _LOGGER.warning(
            "Task %d committed best effort: accuracy %.4f below goal %.4f",
            record.task_id,
            achieved,
            goal.value,
        )
    _LOGGER.info(
        "Task %d committed: accuracy %.4f, %d weights owned, %d picked, "
        "expansion %.2f, redundancy %.2f",
        record.task_id,
        achieved,
        record.owned_count,
        int(mask.sum()),
        state.expansion,
        state.redundancy,
    )
    return record


def learn_first_task(
    state: CpgState,
    task: TaskData,
    goal: AccuracyGoal,
    schedule: PruneSchedule,
    hyper: Hyper,
) -> TaskRecord:
    """Train task 1 from scratch, compact it and commit the survivors.

    Raises:
        LedgerError: If a task has already been committed
        GoalUnreachableError: If ``max_epochs`` of training miss the goal
    """
    if state.committed_tasks != 0:
        raise LedgerError(
            f"First task already learned ({state.committed_tasks} committed)"
        )
    _LOGGER.info("Learning task 1 (%d training samples)", len(task.train))
    trainer = TaskTrainer(state.net, state.ledger, 1, task, hyper, state.seed)
    accuracy = _train_to_goal(trainer, goal)
    if accuracy < goal.value:
        raise GoalUnreachableError(
            accuracy, goal.value, f"after {max(hyper.epochs, hyper.max_epochs)} epochs"
        )
    return _commit(
        state, trainer, task, force_all_picks(0), goal, False, schedule
    )


def learn_next_task(
    state: CpgState,
    task: TaskData,
    goal: AccuracyGoal,
    schedule: PruneSchedule,
    hyper: Hyper,
) -> TaskRecord:
    """Pick from earlier tasks, grow if needed, compact and commit.

    When the goal stays out of reach after ``max_retries`` growth steps or at
    the expansion bound, the task is committed best effort and flagged.
    """
    if state.committed_tasks < 1:
        raise LedgerError("learn_first_task must run before learn_next_task")
    task_id = state.committed_tasks + 1
    _LOGGER.info("Learning task %d (%d training samples)", task_id, len(task.train))

    trainer = TaskTrainer(state.net, state.ledger, task_id, task, hyper, state.seed)
    trainer.reset_free()
    shadow = ShadowMask.initial(trainer.prior.size, hyper.shadow_init, hyper.threshold)
    if hyper.pick_all:
        trainer.pick_bits = force_all_picks(trainer.prior.size)

    best_effort = False
    retries = 0
    while True:
        shadow, accuracy = _pick_phase(trainer, shadow)
        _LOGGER.debug(
            "Task %d attempt %d: accuracy %.4f (goal %.4f), %d of %d picked",
            task_id,
            retries + 1,
            accuracy,
            goal.value,
            int(trainer.pick_bits.sum()),
            trainer.prior.size,
        )
        if accuracy >= goal.value:
            break
        if retries >= state.policy.max_retries:
            best_effort = True
            break
        added = plan_growth(trainer.net, state.policy, state.n0)
        if added is None:
            _LOGGER.warning(
                "Task %d cannot grow: expansion bound %.2f reached",
                task_id,
                state.policy.max_expansion,
            )
            best_effort = True
            break
        trainer.grow(added)
        if hyper.reset_on_grow:
            trainer.reset_free()
        if not hyper.reuse_shadow:
            shadow = ShadowMask.initial(
                trainer.prior.size, hyper.shadow_init, hyper.threshold
            )
        retries += 1

    mask = force_all_picks(trainer.prior.size) if hyper.pick_all else freeze_mask(shadow)
    trainer.pick_bits = mask
    return _commit(state, trainer, task, mask, goal, best_effort, schedule)


def learn_task(
    state: CpgState,
    task: TaskData,
    goal: AccuracyGoal,
    schedule: PruneSchedule,
    hyper: Hyper,
) -> TaskRecord:
    """Learn the next task, first or later."""
    if state.committed_tasks == 0:
        return learn_first_task(state, task, goal, schedule, hyper)
    return learn_next_task(state, task, goal, schedule, hyper)


def task_logits(state: CpgState, task_id: int, samples: Tensor) -> Tensor:
    """Return a committed task's logits from its frozen view and private head."""
    record = state.record(task_id)
    view = compose_view(
        state.ledger, state.net.params, task_id, record.mask, include_free=False
    )
    width = state.net.layers[-1].out_width
    head = pad_head(record.head, record.head_in_width, record.n_classes, width)
    return forward(
        with_head(state.net, record.n_classes), np.concatenate([view, head]), samples
    )


def evaluate(state: CpgState, task_id: int, eval_data: Dataset) -> float:
    """Return a committed task's accuracy on ``eval_data``."""
    predictions = np.argmax(task_logits(state, task_id, eval_data.samples), axis=1)
    return float(np.mean(predictions == eval_data.labels))
