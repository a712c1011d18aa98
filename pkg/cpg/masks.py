"""Learnable binary masks that pick weights of earlier tasks.

Each new task keeps a real-valued shadow value per prior-owned weight. The
forward pass uses the shadow thresholded to ``{0, 1}``; the backward pass
treats the threshold as identity, so the shadow receives the gradient of a
real multiplicative mask at the binarized point.
"""

from __future__ import annotations

import logging
from collections.abc import Iterable
from dataclasses import dataclass

import numpy as np
import numpy.typing as npt

from .const import DEFAULT_SHADOW_INIT, DEFAULT_THRESHOLD
from .errors import LedgerError, MaskError, NonFiniteError
from .nn import Tensor
from .training import TaskTrainer, TrainMetrics

_LOGGER = logging.getLogger(__name__)

MaskBits = npt.NDArray[np.uint8]


@dataclass
class ShadowMask:
    """Real-valued mask over the prior-owned weights of one task."""

    shadow: Tensor
    threshold: float = DEFAULT_THRESHOLD

    @classmethod
    def initial(
        cls,
        size: int,
        init: float = DEFAULT_SHADOW_INIT,
        threshold: float = DEFAULT_THRESHOLD,
    ) -> ShadowMask:
        """Return a shadow with every entry at ``init``."""
        return cls(np.full(size, init, dtype=np.float32), threshold)

    def bits(self) -> MaskBits:
        """Return the current binarization."""
        return binarize(self.shadow, self.threshold)


def binarize(shadow: Tensor, threshold: float) -> MaskBits:
    """Return 1 where ``shadow > threshold`` (ties map to 0)."""
    if not np.isfinite(threshold):
        raise NonFiniteError("Mask threshold must be finite")
    return (np.asarray(shadow) > threshold).astype(np.uint8)


def train_pick_round(
    trainer: TaskTrainer,
    shadow_mask: ShadowMask,
    data_batches: Iterable[tuple[Tensor, npt.ArrayLike]],
    learn_mask: bool = True,
) -> tuple[ShadowMask, Tensor, TrainMetrics]:
    """Train the shadow mask and the free weights over ``data_batches``.

    Each batch runs forward with the current binarized mask. Owned weights
    stay fixed; the shadow moves by ``-mask_lr * dL/dw_eff * w``. With
    ``learn_mask`` false the trainer's mask is used as is.

    Returns:
        The updated shadow, the trainer's backbone parameters and metrics
    """
    if trainer.task_id != trainer.ledger.committed_tasks + 1:
        raise LedgerError(f"Task {trainer.task_id} is already committed")
    if shadow_mask.shadow.shape != trainer.prior.shape:
        raise MaskError(
            f"Shadow covers {shadow_mask.shadow.size} weights, task "
            f"{trainer.task_id} has {trainer.prior.size} prior-owned weights"
        )

    shadow = shadow_mask.shadow.copy()
    mask_lr = np.float32(trainer.hyper.mask_lr)
    losses: list[float] = []
    for samples, labels in data_batches:
        if learn_mask:
            trainer.pick_bits = binarize(shadow, shadow_mask.threshold)
        picked_values = trainer.net.params[trainer.prior]
        loss, grad = trainer.step(samples, labels)
        if learn_mask:
            shadow = shadow - mask_lr * (grad[trainer.prior] * picked_values)
        losses.append(loss)

    if learn_mask:
        trainer.pick_bits = binarize(shadow, shadow_mask.threshold)
    metrics = TrainMetrics(
        loss=float(np.mean(losses)) if losses else 0.0,
        accuracy=trainer.evaluate(trainer.task.train),
        steps=len(losses),
        picked=int(trainer.pick_bits.sum()),
    )
    _LOGGER.debug(
        "Task %d pick round: loss %.4f, %d of %d prior weights picked",
        trainer.task_id,
        metrics["loss"],
        metrics["picked"],
        trainer.prior.size,
    )
    return ShadowMask(shadow, shadow_mask.threshold), trainer.net.params, metrics


def freeze_mask(shadow_mask: ShadowMask) -> MaskBits:
    """Return the binarized mask as a read-only array."""
    frozen = shadow_mask.bits().copy()
    frozen.setflags(write=False)
    return frozen


def force_all_picks(size: int) -> MaskBits:
    """Return an all-ones read-only mask (every prior weight shared)."""
    frozen = np.ones(size, dtype=np.uint8)
    frozen.setflags(write=False)
    return frozen
