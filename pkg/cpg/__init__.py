"""Continual learning by compacting, picking and growing a shared backbone."""

from __future__ import annotations

import hashlib
import logging
import time
from collections.abc import Mapping
from typing import Any

import numpy as np

from .baselines import baseline_accuracies
from .checkpoint import save_checkpoint
from .config import hyper_from_config, policy_from_config, schedule_from_config
from .const import (
    CONF_BASELINE,
    CONF_BASELINE_TRIALS,
    CONF_CHECKPOINT,
    CONF_CLASSES_PER_TASK,
    CONF_DIM,
    CONF_GOAL,
    CONF_GOAL_MODE,
    CONF_GOAL_OFFSET,
    CONF_HIDDEN,
    CONF_N_TASKS,
    CONF_ORDER_SEED,
    CONF_PER_CLASS,
    CONF_REPORT,
    CONF_SEED,
    CONF_SEP,
    CONF_TASK_SOURCE,
    CONF_TEST_CSV,
    CONF_TEST_IMAGES,
    CONF_TEST_LABELS,
    CONF_TOP_DELTA,
    CONF_TRAIN_CSV,
    CONF_TRAIN_IMAGES,
    CONF_TRAIN_LABELS,
    GOAL_EXPLICIT,
    SOURCE_CSV,
    SOURCE_IDX,
)
from .controller import (
    CpgState,
    evaluate,
    learn_task,
    new_state,
    set_accuracy_goal,
    task_logits,
)
from .data import TaskSequence, gen_synthetic_tasks, load_csv, load_idx, split_by_class
from .errors import LedgerError
from .pruner import AccuracyGoal
from .report import RunReport, build_report, emit_report

_LOGGER = logging.getLogger(__name__)


def build_tasks(config: Mapping[str, Any]) -> TaskSequence:
    """Build the configured task sequence."""
    source = config[CONF_TASK_SOURCE]
    if source == SOURCE_IDX:
        train = load_idx(config[CONF_TRAIN_IMAGES], config[CONF_TRAIN_LABELS])
        test = (
            load_idx(config[CONF_TEST_IMAGES], config[CONF_TEST_LABELS], train.n_classes)
            if CONF_TEST_IMAGES in config
            else None
        )
        return split_by_class(
            train, config[CONF_CLASSES_PER_TASK], config[CONF_ORDER_SEED], test
        )
    if source == SOURCE_CSV:
        train = load_csv(config[CONF_TRAIN_CSV])
        test = (
            load_csv(config[CONF_TEST_CSV], train.n_classes)
            if CONF_TEST_CSV in config
            else None
        )
        return split_by_class(
            train, config[CONF_CLASSES_PER_TASK], config[CONF_ORDER_SEED], test
        )
    return gen_synthetic_tasks(
        n_tasks=config[CONF_N_TASKS],
        classes_per_task=config[CONF_CLASSES_PER_TASK],
        dim=config[CONF_DIM],
        per_class=config[CONF_PER_CLASS],
        sep=config[CONF_SEP],
        seed=config[CONF_SEED],
        order_seed=config[CONF_ORDER_SEED],
    )


def task_goals(config: Mapping[str, Any], tasks: TaskSequence) -> list[AccuracyGoal]:
    """Return one accuracy goal per task, running baselines when needed."""
    mode = config[CONF_GOAL_MODE]
    if mode == GOAL_EXPLICIT:
        goal = set_accuracy_goal(
            mode, value=config[CONF_GOAL], offset=config[CONF_GOAL_OFFSET]
        )
        return [goal] * len(tasks)
    scores = baseline_accuracies(
        tasks,
        config[CONF_BASELINE],
        config[CONF_HIDDEN],
        hyper_from_config(config),
        config[CONF_BASELINE_TRIALS],
        config[CONF_SEED],
    )
    return [
        set_accuracy_goal(
            mode,
            baselines,
            top_delta=config[CONF_TOP_DELTA],
            offset=config[CONF_GOAL_OFFSET],
        )
        for baselines in scores
    ]


def _digest(logits: np.ndarray) -> str:
    return hashlib.sha256(np.ascontiguousarray(logits).tobytes()).hexdigest()


def run_experiment(config: Mapping[str, Any]) -> tuple[CpgState, RunReport]:
    """Learn every configured task in order and summarise the run.

    Eval logits of each task are fingerprinted at commit and checked again at
    the end of the run. Writes the checkpoint and report when configured.

    Raises:
        LedgerError: If a committed task's logits changed during the run
    """
    started = time.perf_counter()
    tasks = build_tasks(config)
    goals = task_goals(config, tasks)
    hyper = hyper_from_config(config)
    schedule = schedule_from_config(config)
    state = new_state(
        tasks.tasks[0].train.dim,
        config[CONF_HIDDEN],
        policy_from_config(config),
        config[CONF_SEED],
    )
    state.task_order = tasks.order
    _LOGGER.info(
        "Running %d tasks on a %d-parameter backbone (seed %d, order %s)",
        len(tasks),
        state.n0,
        state.seed,
        tasks.order,
    )

    digests: list[str] = []
    for task, goal in zip(tasks.tasks, goals):
        record = learn_task(state, task, goal, schedule, hyper)
        digests.append(_digest(task_logits(state, record.task_id, task.eval.samples)))

    accuracies: list[float] = []
    for task_id, (task, digest) in enumerate(zip(tasks.tasks, digests), start=1):
        if _digest(task_logits(state, task_id, task.eval.samples)) != digest:
            raise LedgerError(f"Logits of task {task_id} changed after its commit")
        accuracies.append(evaluate(state, task_id, task.eval))

    report = build_report(state, accuracies, time.perf_counter() - started)
    if config.get(CONF_CHECKPOINT):
        save_checkpoint(state, config[CONF_CHECKPOINT])
    if config.get(CONF_REPORT):
        emit_report(
            state.records,
            state.net.n_params,
            state.n0,
            state.ledger.free_count,
            config[CONF_REPORT],
            accuracies,
        )
    _LOGGER.info(
        "Run finished in %.1fs: average accuracy %.4f, expansion %.2f, "
        "redundancy %.2f",
        report.wall_time,
        report.average,
        report.expansion,
        report.redundancy,
    )
    return state, report
