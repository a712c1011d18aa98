"""Training context shared by mask learning, pruning and the controller.

A ``TaskTrainer`` holds everything that changes while one task is being
learned: the backbone parameters, the task's head, momentum buffers, the set
of weights the task may still train and the pick mask in force. Weights owned
by committed tasks are never in the trainable set.
"""

from __future__ import annotations

import logging
from collections.abc import Iterable, Sequence
from dataclasses import dataclass
from typing import TypedDict

import numpy as np
import numpy.typing as npt

from .const import (
    DEFAULT_BATCH_SIZE,
    DEFAULT_EPOCHS,
    DEFAULT_GROWTH_NOISE,
    DEFAULT_LR,
    DEFAULT_MASK_LR,
    DEFAULT_MAX_EPOCHS,
    DEFAULT_MOMENTUM,
    DEFAULT_PICK_EPOCHS,
    DEFAULT_SHADOW_INIT,
    DEFAULT_THRESHOLD,
    LAYER_DENSE,
)
from .data import Dataset, TaskData, batch_iter
from .errors import LedgerError
from .ledger import Ledger, compose_view, grow
from .nn import IndexArray, Network, Tensor, forward, loss_and_grad, sgd_step, with_head

_LOGGER = logging.getLogger(__name__)


@dataclass(frozen=True)
class Hyper:
    """Optimisation settings shared by every task of a run."""

    lr: float = DEFAULT_LR
    momentum: float = DEFAULT_MOMENTUM
    mask_lr: float = DEFAULT_MASK_LR
    threshold: float = DEFAULT_THRESHOLD
    shadow_init: float = DEFAULT_SHADOW_INIT
    batch_size: int = DEFAULT_BATCH_SIZE
    epochs: int = DEFAULT_EPOCHS
    max_epochs: int = DEFAULT_MAX_EPOCHS
    pick_epochs: int = DEFAULT_PICK_EPOCHS
    growth_noise: float = DEFAULT_GROWTH_NOISE
    reset_on_grow: bool = False
    reuse_shadow: bool = True
    pick_all: bool = False


class TrainMetrics(TypedDict):
    """Summary of one pass over the training batches."""

    loss: float
    accuracy: float
    steps: int
    picked: int


@dataclass
class TrainerSnapshot:
    """Value copy of a trainer's mutable state."""

    params: Tensor
    head: Tensor
    velocity: Tensor
    head_velocity: Tensor
    trainable: npt.NDArray[np.bool_]


def glorot_head(in_width: int, n_classes: int, rng: np.random.Generator) -> Tensor:
    """Return a flat head vector: Glorot-uniform weights then zero biases."""
    bound = np.sqrt(6.0 / (in_width + n_classes))
    weights = rng.uniform(-bound, bound, size=in_width * n_classes)
    return np.concatenate([weights, np.zeros(n_classes)]).astype(np.float32)


def pad_head(head: Tensor, in_width: int, n_classes: int, width: int) -> Tensor:
    """Zero-extend a flat head to ``width`` inputs."""
    if width == in_width:
        return head
    weights = np.zeros((width, n_classes), dtype=head.dtype)
    weights[:in_width] = head[: in_width * n_classes].reshape(in_width, n_classes)
    return np.concatenate([weights.ravel(), head[in_width * n_classes :]])


def derive_seed(*parts: int) -> int:
    """Mix integers into one 32-bit seed."""
    return int(np.random.SeedSequence(list(parts)).generate_state(1)[0])


def epoch_seed(seed: int, task_id: int, counter: int) -> int:
    """Derive a batch-order seed from the run seed, task and epoch counter."""
    return derive_seed(seed, task_id, counter)


class TaskTrainer:
    """Mutable training state for the task being learned."""

    def __init__(
        self,
        net: Network,
        ledger: Ledger,
        task_id: int,
        task: TaskData,
        hyper: Hyper,
        seed: int,
        pick_bits: npt.ArrayLike | None = None,
    ) -> None:
        """Initialize with a fresh head and every free weight trainable."""
        if task_id != ledger.committed_tasks + 1:
            raise LedgerError(
                f"Task {task_id} cannot train; next task is "
                f"{ledger.committed_tasks + 1}"
            )
        self.net = net.copy()
        self.ledger = ledger
        self.task_id = task_id
        self.task = task
        self.hyper = hyper
        self.seed = seed
        self.n_classes = task.train.n_classes
        self.prior: IndexArray = ledger.prior_owned(task_id)
        self.pick_bits = (
            np.ones(self.prior.size, dtype=np.uint8)
            if pick_bits is None
            else np.asarray(pick_bits, dtype=np.uint8)
        )
        self.trainable = ledger.owners == 0
        self.velocity = np.zeros_like(self.net.params)
        self._rng = np.random.default_rng(
            np.random.SeedSequence([seed, task_id, 0x5EED])
        )
        self.head_in_width = self.net.layers[-1].out_width
        self.head = glorot_head(self.head_in_width, self.n_classes, self._rng)
        self.head_velocity = np.zeros_like(self.head)
        self.growth_events = 0
        self._epochs_run = 0
        self._head_net = with_head(self.net, self.n_classes)

    @property
    def head_net(self) -> Network:
        """Return the backbone extended by this task's head layer."""
        return self._head_net

    def view(self, include_free: bool = True) -> Tensor:
        """Return the task's effective backbone weights."""
        return compose_view(
            self.ledger, self.net.params, self.task_id, self.pick_bits, include_free
        )

    def step(self, samples: Tensor, labels: npt.ArrayLike) -> tuple[float, Tensor]:
        """Run one SGD step on trainable weights and the head.

        Returns the batch loss and the gradient w.r.t. the backbone view.
        """
        n = self.net.n_params
        full = np.concatenate([self.view(), self.head])
        loss, grad = loss_and_grad(self.head_net, full, samples, labels)
        self.net.params, self.velocity = sgd_step(
            self.net.params,
            grad[:n],
            self.trainable,
            self.hyper.lr,
            self.velocity,
            self.hyper.momentum,
        )
        self.head, self.head_velocity = sgd_step(
            self.head,
            grad[n:],
            np.ones(self.head.shape[0], dtype=bool),
            self.hyper.lr,
            self.head_velocity,
            self.hyper.momentum,
        )
        return loss, grad[:n]

    def next_epoch_seed(self) -> int:
        """Return the batch-order seed for the next epoch."""
        self._epochs_run += 1
        return epoch_seed(self.seed, self.task_id, self._epochs_run)

    def batches(self) -> Iterable[tuple[Tensor, npt.NDArray[np.int64]]]:
        """Return the next epoch's training batches."""
        return batch_iter(self.task.train, self.hyper.batch_size, self.next_epoch_seed())

    def train_epoch(self) -> TrainMetrics:
        """Train trainable weights and the head for one epoch, mask fixed."""
        losses: list[float] = []
        for samples, labels in self.batches():
            loss, _ = self.step(samples, labels)
            losses.append(loss)
        metrics = TrainMetrics(
            loss=float(np.mean(losses)),
            accuracy=self.evaluate(self.task.train),
            steps=len(losses),
            picked=int(self.pick_bits.sum()),
        )
        _LOGGER.debug(
            "Task %d epoch %d: loss %.4f, train accuracy %.4f",
            self.task_id,
            self._epochs_run,
            metrics["loss"],
            metrics["accuracy"],
        )
        return metrics

    def logits(self, samples: Tensor) -> Tensor:
        """Return logits with free weights included."""
        return forward(
            self.head_net, np.concatenate([self.view(), self.head]), samples
        )

    def evaluate(self, dataset: Dataset | None = None) -> float:
        """Return accuracy on ``dataset`` (the task's eval split by default)."""
        dataset = self.task.eval if dataset is None else dataset
        predictions = np.argmax(self.logits(dataset.samples), axis=1)
        return float(np.mean(predictions == dataset.labels))

    def snapshot(self) -> TrainerSnapshot:
        """Return a value copy of the mutable state."""
        return TrainerSnapshot(
            self.net.params.copy(),
            self.head.copy(),
            self.velocity.copy(),
            self.head_velocity.copy(),
            self.trainable.copy(),
        )

    def restore(self, snapshot: TrainerSnapshot) -> None:
        """Restore a snapshot taken on the current architecture."""
        self.net.params = snapshot.params.copy()
        self.head = snapshot.head.copy()
        self.velocity = snapshot.velocity.copy()
        self.head_velocity = snapshot.head_velocity.copy()
        self.trainable = snapshot.trainable.copy()

    def prune(self, indices: IndexArray) -> None:
        """Zero weights and exclude them from further updates."""
        if np.any(~self.trainable[indices]):
            raise LedgerError("Only trainable weights can be pruned")
        self.net.params[indices] = 0.0
        self.velocity[indices] = 0.0
        self.trainable[indices] = False

    def reset_free(self) -> None:
        """Re-initialize the trainable weights layer by layer."""
        for position, layer in enumerate(self.net.layers):
            weights = self.net.weight_index[position]
            if weights is None:
                continue
            bound = np.sqrt(6.0 / (layer.in_width + layer.out_width))
            rows = weights.ravel()
            rows = rows[self.trainable[rows]]
            self.net.params[rows] = self._rng.uniform(-bound, bound, size=rows.size)
            biases = self.net.bias_index[position]
            if biases is not None:
                self.net.params[biases[self.trainable[biases]]] = 0.0
        self.velocity[self.trainable] = 0.0
        _LOGGER.debug(
            "Task %d re-initialized %d free weights",
            self.task_id,
            int(self.trainable.sum()),
        )

    def grow(self, added: Sequence[int]) -> None:
        """Widen the backbone; new weights are free, trainable and near zero."""
        old_n = self.net.n_params
        self.ledger, self.net = grow(self.ledger, self.net, added)
        extra = self.net.n_params - old_n
        noise = self._rng.uniform(
            -self.hyper.growth_noise, self.hyper.growth_noise, size=extra
        )
        self.net.params[old_n:] = noise.astype(np.float32)
        self.trainable = np.concatenate([self.trainable, np.ones(extra, dtype=bool)])
        self.velocity = np.concatenate(
            [self.velocity, np.zeros(extra, dtype=self.velocity.dtype)]
        )

        width = self.net.layers[-1].out_width
        if width != self.head_in_width:
            new_rows = (width - self.head_in_width) * self.n_classes
            self.head = pad_head(self.head, self.head_in_width, self.n_classes, width)
            block = slice(
                self.head_in_width * self.n_classes,
                self.head_in_width * self.n_classes + new_rows,
            )
            self.head[block] = self._rng.uniform(
                -self.hyper.growth_noise, self.hyper.growth_noise, size=new_rows
            )
            self.head_velocity = np.zeros_like(self.head)
            self.head_in_width = width
        self._head_net = with_head(self.net, self.n_classes)
        self.growth_events += 1
        _LOGGER.debug(
            "Task %d grew backbone by %d weights (widths %s)",
            self.task_id,
            extra,
            [layer.out_width for layer in self.net.layers if layer.kind == LAYER_DENSE],
        )
