"""Fixtures for CPG engine tests."""
from __future__ import annotations

import struct
from collections.abc import Callable
from pathlib import Path

import numpy as np
import pytest

from cpg.const import IDX_IMAGES_MAGIC, IDX_LABELS_MAGIC, LAYER_DENSE, LAYER_RELU
from cpg.controller import CpgState, GrowthPolicy, build_backbone, learn_task, new_state
from cpg.data import Dataset, TaskData, TaskSequence, gen_synthetic_tasks
from cpg.ledger import init_ledger
from cpg.nn import LayerSpec, Network, build_network
from cpg.pruner import AccuracyGoal, PruneSchedule
from cpg.training import Hyper, TaskTrainer

INPUT_DIM = 6
HIDDEN = (12, 8)


def write_idx(
    directory: Path, images: np.ndarray, labels: np.ndarray, prefix: str = ""
) -> tuple[Path, Path]:
    """Write an IDX image file and its label file."""
    images_path = directory / f"{prefix}images.idx"
    labels_path = directory / f"{prefix}labels.idx"
    images_path.write_bytes(
        struct.pack(">IIII", IDX_IMAGES_MAGIC, *images.shape)
        + images.astype(np.uint8).tobytes()
    )
    labels_path.write_bytes(
        struct.pack(">II", IDX_LABELS_MAGIC, labels.size)
        + labels.astype(np.uint8).tobytes()
    )
    return images_path, labels_path


@pytest.fixture
def hyper() -> Hyper:
    """Fast optimisation settings for small synthetic tasks."""
    return Hyper(
        lr=0.05,
        momentum=0.9,
        mask_lr=1e-3,
        batch_size=16,
        epochs=4,
        max_epochs=30,
        pick_epochs=4,
    )


@pytest.fixture
def schedule() -> PruneSchedule:
    """Coarse pruning schedule so compaction finishes quickly."""
    return PruneSchedule(step_fraction=0.25, retrain_epochs=2, min_remaining=1)


@pytest.fixture
def easy_tasks() -> TaskSequence:
    """Three well separated two-class tasks."""
    return gen_synthetic_tasks(
        n_tasks=3, classes_per_task=2, dim=INPUT_DIM, per_class=40, sep=8.0, seed=7
    )


@pytest.fixture
def noise_task() -> TaskData:
    """A task whose labels carry no signal."""
    rng = np.random.default_rng(11)
    samples = rng.standard_normal((100, INPUT_DIM)).astype(np.float32)
    labels = rng.integers(0, 2, size=100).astype(np.int64)
    labels[:2] = (0, 1)
    labels[80:82] = (0, 1)
    return TaskData(
        Dataset(samples[:80], labels[:80], 2),
        Dataset(samples[80:], labels[80:], 2),
        (0, 1),
    )


@pytest.fixture
def small_net() -> Network:
    """Dense 4->8, ReLU, dense 8->3: 67 parameters."""
    return build_network(
        [
            LayerSpec(LAYER_DENSE, 4, 8),
            LayerSpec(LAYER_RELU, 8, 8, has_bias=False),
            LayerSpec(LAYER_DENSE, 8, 3),
        ],
        seed=0,
    )


@pytest.fixture
def fresh_state() -> CpgState:
    """An untrained state sized for the synthetic tasks."""
    return new_state(INPUT_DIM, HIDDEN, GrowthPolicy(max_retries=1), seed=1)


@pytest.fixture
def trained_trainer(easy_tasks, hyper) -> TaskTrainer:
    """A task-1 trainer after a few epochs on the first synthetic task."""
    net = build_network(build_backbone(INPUT_DIM, HIDDEN), seed=3)
    trainer = TaskTrainer(
        net, init_ledger(net.n_params), 1, easy_tasks.tasks[0], hyper, seed=3
    )
    for _ in range(8):
        trainer.train_epoch()
    return trainer


@pytest.fixture
def learned_state(fresh_state, easy_tasks, hyper, schedule) -> CpgState:
    """A state that has committed all three synthetic tasks."""
    for task in easy_tasks.tasks:
        learn_task(fresh_state, task, AccuracyGoal(0.85), schedule, hyper)
    return fresh_state


@pytest.fixture
def write_config(tmp_path) -> Callable[..., str]:
    """Write a ``key = value`` config file for a small synthetic run."""

    def _write(name: str = "run.conf", **overrides: object) -> str:
        values: dict[str, object] = {
            "seed": 5,
            "n_tasks": 3,
            "dim": INPUT_DIM,
            "per_class": 30,
            "sep": 8.0,
            "hidden": "12, 8",
            "goal": 0.8,
            "epochs": 4,
            "max_epochs": 30,
            "pick_epochs": 4,
            "batch_size": 16,
            "lr": 0.05,
            "mask_lr": 0.001,
            "step_fraction": 0.25,
            "retrain_epochs": 2,
            "max_retries": 1,
        }
        values.update(overrides)
        lines = ["# small synthetic run", ""]
        lines += [f"{key} = {value}" for key, value in values.items()]
        path = tmp_path / name
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        return str(path)

    return _write


@pytest.fixture
def idx_digits(tmp_path) -> dict[str, str]:
    """Ten 8x8 glyph classes as IDX train and test files; returns config keys."""
    rng = np.random.default_rng(42)
    glyphs = rng.integers(0, 2, size=(10, 8, 8)) * 190 + 30

    def draw(per_class: int) -> tuple[np.ndarray, np.ndarray]:
        labels = np.repeat(np.arange(10), per_class)
        noise = rng.normal(0.0, 30.0, size=(labels.size, 8, 8))
        return np.clip(glyphs[labels] + noise, 0, 255), labels

    train_images, train_labels = write_idx(tmp_path, *draw(40), prefix="train-")
    test_images, test_labels = write_idx(tmp_path, *draw(20), prefix="test-")
    return {
        "task_source": "idx",
        "train_images": str(train_images),
        "train_labels": str(train_labels),
        "test_images": str(test_images),
        "test_labels": str(test_labels),
        "classes_per_task": "2",
        "hidden": "32, 16",
    }
