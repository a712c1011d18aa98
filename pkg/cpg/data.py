"""Datasets, class-split task sequences and deterministic batching."""

from __future__ import annotations

import csv
import logging
from collections.abc import Iterator
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import numpy.typing as npt

from .const import (
    IDX_IMAGES_MAGIC,
    IDX_LABELS_MAGIC,
    SYNTHETIC_TRAIN_FRACTION,
)
from .errors import DataError, DataFormatError

_LOGGER = logging.getLogger(__name__)

CSV_LABEL_COLUMN = "label"


@dataclass(frozen=True)
class Dataset:
    """Samples as an ``(N, features)`` float32 array plus integer labels."""

    samples: npt.NDArray[np.float32]
    labels: npt.NDArray[np.int64]
    n_classes: int
    feature_shape: tuple[int, ...] = ()

    def __post_init__(self) -> None:
        """Validate shapes and label range."""
        if self.samples.ndim != 2 or self.samples.shape[0] == 0:
            raise DataError("A dataset needs a non-empty (N, features) array")
        if not np.isfinite(self.samples).all():
            raise DataFormatError("Samples must be finite")
        if self.labels.shape != (self.samples.shape[0],):
            raise DataError("Expected one label per sample")
        if self.n_classes < 1:
            raise DataError("A dataset needs at least one class")
        if self.labels.min() < 0 or self.labels.max() >= self.n_classes:
            raise DataError(f"Labels must lie in [0, {self.n_classes})")
        if not self.feature_shape:
            object.__setattr__(self, "feature_shape", (self.samples.shape[1],))

    def __len__(self) -> int:
        """Return the number of samples."""
        return int(self.samples.shape[0])

    @property
    def dim(self) -> int:
        """Return the flattened feature width."""
        return int(self.samples.shape[1])


@dataclass(frozen=True)
class TaskData:
    """One task: train and eval splits plus its original class ids."""

    train: Dataset
    eval: Dataset
    classes: tuple[int, ...]


@dataclass(frozen=True)
class TaskSequence:
    """Ordered tasks; ``order[i]`` is the canonical index of the i-th task."""

    tasks: tuple[TaskData, ...]
    order: tuple[int, ...]
    seed: int

    def __len__(self) -> int:
        """Return the number of tasks."""
        return len(self.tasks)


def task_order(n_tasks: int, order_seed: int) -> tuple[int, ...]:
    """Return the task permutation for a seed; seed 0 keeps the identity."""
    if order_seed == 0:
        return tuple(range(n_tasks))
    return tuple(int(i) for i in np.random.default_rng(order_seed).permutation(n_tasks))


def restrict_to_classes(dataset: Dataset, classes: tuple[int, ...]) -> Dataset:
    """Keep samples of the given classes and relabel them ``0..len-1``."""
    lookup = np.full(dataset.n_classes, -1, dtype=np.int64)
    lookup[list(classes)] = np.arange(len(classes))
    keep = lookup[dataset.labels] >= 0
    if not np.any(keep):
        raise DataError(f"No samples for classes {classes}")
    return Dataset(
        samples=dataset.samples[keep],
        labels=lookup[dataset.labels[keep]],
        n_classes=len(classes),
        feature_shape=dataset.feature_shape,
    )


def _holdout(dataset: Dataset, seed: int) -> tuple[Dataset, Dataset]:
    """Split a dataset into train/eval parts, per class, deterministically."""
    rng = np.random.default_rng(seed)
    train_rows: list[npt.NDArray[np.int64]] = []
    eval_rows: list[npt.NDArray[np.int64]] = []
    for label in range(dataset.n_classes):
        rows = rng.permutation(np.flatnonzero(dataset.labels == label))
        if rows.size < 2:
            raise DataError(f"Class {label} needs at least two samples to split")
        cut = max(1, min(rows.size - 1, int(rows.size * SYNTHETIC_TRAIN_FRACTION)))
        train_rows.append(rows[:cut])
        eval_rows.append(rows[cut:])

    def take(parts: list[npt.NDArray[np.int64]]) -> Dataset:
        rows = np.sort(np.concatenate(parts))
        return Dataset(
            dataset.samples[rows],
            dataset.labels[rows],
            dataset.n_classes,
            dataset.feature_shape,
        )

    return take(train_rows), take(eval_rows)


def split_by_class(
    dataset: Dataset,
    classes_per_task: int,
    order_seed: int = 0,
    eval_dataset: Dataset | None = None,
) -> TaskSequence:
    """Partition the classes into consecutive groups, one task per group.

    Without ``eval_dataset`` each task holds out a share of its own samples
    for evaluation.
    """
    if classes_per_task < 1 or dataset.n_classes % classes_per_task:
        raise DataError(
            f"{dataset.n_classes} classes do not split into groups of "
            f"{classes_per_task}"
        )
    if eval_dataset is not None and eval_dataset.n_classes != dataset.n_classes:
        raise DataError("Train and eval datasets disagree on the class count")

    n_tasks = dataset.n_classes // classes_per_task
    canonical: list[TaskData] = []
    for task in range(n_tasks):
        classes = tuple(range(task * classes_per_task, (task + 1) * classes_per_task))
        train = restrict_to_classes(dataset, classes)
        if eval_dataset is None:
            train, held_out = _holdout(train, order_seed * 7919 + task)
        else:
            held_out = restrict_to_classes(eval_dataset, classes)
        canonical.append(TaskData(train, held_out, classes))

    order = task_order(n_tasks, order_seed)
    _LOGGER.debug("Split %d classes into %d tasks, order %s", dataset.n_classes, n_tasks, order)
    return TaskSequence(tuple(canonical[i] for i in order), order, order_seed)


def gen_synthetic_tasks(
    n_tasks: int,
    classes_per_task: int,
    dim: int,
    per_class: int,
    sep: float,
    seed: int,
    order_seed: int = 0,
) -> TaskSequence:
    """Generate tasks whose classes are unit-variance Gaussian blobs.

    Class means are drawn uniformly on the sphere of radius ``sep``.
    """
    if n_tasks < 1 or classes_per_task < 1 or dim < 1 or per_class < 2:
        raise DataError("Synthetic tasks need positive sizes and two samples per class")
    if not np.isfinite(sep) or sep < 0:
        raise DataError("Class separation must be a finite non-negative number")

    rng = np.random.default_rng(seed)
    cut = max(1, min(per_class - 1, int(per_class * SYNTHETIC_TRAIN_FRACTION)))
    canonical: list[TaskData] = []
    for task in range(n_tasks):
        train_x, train_y, eval_x, eval_y = [], [], [], []
        for label in range(classes_per_task):
            direction = rng.standard_normal(dim)
            mean = sep * direction / np.linalg.norm(direction)
            points = mean + rng.standard_normal((per_class, dim))
            train_x.append(points[:cut])
            eval_x.append(points[cut:])
            train_y.append(np.full(cut, label, dtype=np.int64))
            eval_y.append(np.full(per_class - cut, label, dtype=np.int64))
        classes = tuple(range(task * classes_per_task, (task + 1) * classes_per_task))
        canonical.append(
            TaskData(
                Dataset(
                    np.concatenate(train_x).astype(np.float32),
                    np.concatenate(train_y),
                    classes_per_task,
                ),
                Dataset(
                    np.concatenate(eval_x).astype(np.float32),
                    np.concatenate(eval_y),
                    classes_per_task,
                ),
                classes,
            )
        )

    order = task_order(n_tasks, order_seed)
    return TaskSequence(tuple(canonical[i] for i in order), order, seed)


def _read_idx(path: Path, magic: int) -> tuple[tuple[int, ...], npt.NDArray[np.uint8]]:
    """Read an unsigned-byte IDX file and return its dims and payload."""
    try:
        raw = path.read_bytes()
    except OSError as err:
        raise DataError(f"Cannot read {path}: {err}") from err
    if len(raw) < 4:
        raise DataFormatError(f"{path} is truncated")
    found = int(np.frombuffer(raw, dtype=">u4", count=1)[0])
    if found != magic:
        raise DataFormatError(f"{path} has magic {found:#010x}, expected {magic:#010x}")
    n_dims = magic & 0xFF
    header = 4 + 4 * n_dims
    if len(raw) < header:
        raise DataFormatError(f"{path} is truncated")
    dims = tuple(int(d) for d in np.frombuffer(raw, dtype=">u4", count=n_dims, offset=4))
    expected = int(np.prod(dims))
    if len(raw) - header < expected:
        raise DataFormatError(
            f"{path} is truncated: {len(raw) - header} of {expected} bytes"
        )
    return dims, np.frombuffer(raw, dtype=np.uint8, count=expected, offset=header)


def load_idx(
    images_path: str | Path,
    labels_path: str | Path,
    n_classes: int | None = None,
) -> Dataset:
    """Load an IDX image/label pair, scaling pixels to ``[0, 1]``.

    Args:
        images_path: File with magic 0x00000803 (N x rows x cols bytes)
        labels_path: File with magic 0x00000801 (N bytes)
        n_classes: Expected class count; inferred from the labels if omitted

    Raises:
        DataFormatError: On bad magic numbers or truncated files
        DataError: On count mismatches or out-of-range labels
    """
    dims, pixels = _read_idx(Path(images_path), IDX_IMAGES_MAGIC)
    (n_labels,), labels = _read_idx(Path(labels_path), IDX_LABELS_MAGIC)
    if dims[0] != n_labels:
        raise DataError(f"{dims[0]} images but {n_labels} labels")
    labels = labels.astype(np.int64)
    classes = int(labels.max()) + 1 if n_classes is None else n_classes
    if labels.max() >= classes:
        raise DataError(f"Label {int(labels.max())} outside {classes} classes")

    samples = (pixels.reshape(dims[0], -1).astype(np.float32) / np.float32(255.0))
    _LOGGER.info("Loaded %d IDX samples of shape %s", dims[0], dims[1:])
    return Dataset(samples, labels, classes, tuple(dims[1:]))


def load_csv(path: str | Path, n_classes: int | None = None) -> Dataset:
    """Load a CSV with a header, float feature columns and a ``label`` column."""
    path = Path(path)
    try:
        with path.open(newline="", encoding="utf-8") as handle:
            rows = list(csv.reader(handle))
    except OSError as err:
        raise DataError(f"Cannot read {path}: {err}") from err
    if len(rows) < 2:
        raise DataFormatError(f"{path} needs a header and at least one row")

    header = [name.strip() for name in rows[0]]
    if CSV_LABEL_COLUMN not in header:
        raise DataFormatError(f"{path} has no '{CSV_LABEL_COLUMN}' column")
    label_col = header.index(CSV_LABEL_COLUMN)
    features, labels = [], []
    for line_no, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != len(header):
            raise DataFormatError(f"{path}:{line_no} has {len(row)} fields")
        try:
            label = int(row[label_col])
            values = [float(v) for i, v in enumerate(row) if i != label_col]
        except ValueError as err:
            raise DataFormatError(f"{path}:{line_no}: {err}") from err
        if not np.isfinite(values).all():
            raise DataFormatError(f"{path}:{line_no} has a non-finite value")
        if label < 0:
            raise DataError(f"{path}:{line_no} has negative label {label}")
        features.append(values)
        labels.append(label)

    label_array = np.asarray(labels, dtype=np.int64)
    classes = int(label_array.max()) + 1 if n_classes is None else n_classes
    if label_array.max() >= classes:
        raise DataError(f"Label {int(label_array.max())} outside {classes} classes")
    return Dataset(np.asarray(features, dtype=np.float32), label_array, classes)


def batch_iter(
    dataset: Dataset, batch_size: int, epoch_seed: int
) -> Iterator[tuple[npt.NDArray[np.float32], npt.NDArray[np.int64]]]:
    """Yield shuffled batches; the last partial batch is kept."""
    if batch_size < 1:
        raise DataError("Batch size must be at least 1")
    order = np.random.default_rng(epoch_seed).permutation(len(dataset))
    for start in range(0, order.size, batch_size):
        rows = order[start : start + batch_size]
        yield dataset.samples[rows], dataset.labels[rows]
