"""Run summaries: per-task accuracy table and model-size accounting."""

from __future__ import annotations

import csv
import io
import logging
import math
from collections.abc import Sequence
from dataclasses import dataclass, field
from pathlib import Path
from typing import TypedDict

import numpy as np

from .checkpoint import atomic_write
from .controller import CpgState, TaskRecord
from .errors import CpgError

_LOGGER = logging.getLogger(__name__)

REPORT_HEADER = ("row", "accuracy", "goal", "flag", "exp", "red")
SUMMARY_ROW = "avg"
FLAG_BEST_EFFORT = "best-effort"


class SizeReport(TypedDict):
    """Model size in bytes, split by component."""

    backbone: int
    heads: int
    masks: int
    ledger: int
    normalization: int
    total: int


@dataclass
class RunReport:
    """Outcome of a sequential run."""

    accuracies: list[float]
    goals: list[float]
    best_effort: list[bool]
    expansion: float
    redundancy: float
    wall_time: float = 0.0
    task_order: tuple[int, ...] = ()
    growth_events: list[int] = field(default_factory=list)

    @property
    def average(self) -> float:
        """Return the mean per-task accuracy."""
        return float(np.mean(self.accuracies))

    @property
    def any_best_effort(self) -> bool:
        """Return whether any task missed its goal."""
        return any(self.best_effort)


def build_report(
    state: CpgState,
    accuracies: Sequence[float] | None = None,
    wall_time: float = 0.0,
) -> RunReport:
    """Summarise a state; accuracies default to those recorded at commit."""
    if not state.records:
        raise CpgError("No committed tasks to report")
    scores = (
        [record.achieved for record in state.records]
        if accuracies is None
        else list(accuracies)
    )
    if len(scores) != len(state.records):
        raise CpgError(f"{len(scores)} accuracies for {len(state.records)} tasks")
    return RunReport(
        accuracies=scores,
        goals=[record.goal.value for record in state.records],
        best_effort=[record.best_effort for record in state.records],
        expansion=state.expansion,
        redundancy=state.redundancy,
        wall_time=wall_time,
        task_order=state.task_order,
        growth_events=[record.growth_events for record in state.records],
    )


def format_report(
    records: Sequence[TaskRecord],
    n_params: int,
    n0: int,
    free_count: int,
    accuracies: Sequence[float] | None = None,
) -> str:
    """Render the report CSV: one row per task, then the summary row."""
    if not records:
        raise CpgError("A report needs at least one task record")
    if n0 < 1:
        raise CpgError("Initial parameter count must be positive")
    scores = (
        [record.achieved for record in records] if accuracies is None else accuracies
    )

    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(REPORT_HEADER)
    for record, score in zip(records, scores, strict=True):
        writer.writerow(
            (
                record.task_id,
                f"{100 * score:.1f}",
                f"{100 * record.goal.value:.1f}",
                FLAG_BEST_EFFORT if record.best_effort else "",
                "",
                "",
            )
        )
    writer.writerow(
        (
            SUMMARY_ROW,
            f"{100 * float(np.mean(scores)):.1f}",
            "",
            "",
            f"{n_params / n0:.2f}",
            f"{free_count / n0:.2f}",
        )
    )
    return buffer.getvalue()


def emit_report(
    records: Sequence[TaskRecord],
    n_params: int,
    n0: int,
    free_count: int,
    path: str | Path,
    accuracies: Sequence[float] | None = None,
) -> str:
    """Write the report CSV to ``path`` and return its text."""
    text = format_report(records, n_params, n0, free_count, accuracies)
    atomic_write(path, text.encode("utf-8"))
    _LOGGER.info("Wrote report for %d tasks to %s", len(records), path)
    return text


def size_report(state: CpgState) -> SizeReport:
    """Return the bytes needed to store the model and its task metadata."""
    backbone = 4 * state.net.n_params
    heads = 4 * sum(record.head_param_count for record in state.records)
    masks = sum(math.ceil(record.mask.size / 8) for record in state.records)
    ledger = 2 * state.ledger.n_params
    normalization = 0  # the backbone has no normalization layers
    return SizeReport(
        backbone=backbone,
        heads=heads,
        masks=masks,
        ledger=ledger,
        normalization=normalization,
        total=backbone + heads + masks + ledger + normalization,
    )
