"""Per-parameter ownership ledger.

Every flat parameter index carries an owner tag: ``0`` while the weight is
free, ``k`` once task ``k`` has committed it. Tags only ever move from ``0``
to a task id, which is what keeps committed tasks from forgetting.
"""

from __future__ import annotations

import logging
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np
import numpy.typing as npt

from .errors import ForgettingHazardError, LedgerError, MaskError
from .nn import IndexArray, Network, Tensor, grow_network

_LOGGER = logging.getLogger(__name__)

OWNER_DTYPE = np.uint16
MAX_TASKS = int(np.iinfo(OWNER_DTYPE).max)


@dataclass
class Ledger:
    """Owner tag per flat parameter index."""

    owners: npt.NDArray[np.uint16]
    committed_tasks: int = 0

    @property
    def n_params(self) -> int:
        """Return the number of tracked parameters."""
        return int(self.owners.shape[0])

    @property
    def free_count(self) -> int:
        """Return the number of free parameters."""
        return int(np.count_nonzero(self.owners == 0))

    def owned_by(self, task_id: int) -> IndexArray:
        """Return the indices owned by one task, ascending."""
        return np.flatnonzero(self.owners == task_id).astype(np.int64)

    def prior_owned(self, task_id: int) -> IndexArray:
        """Return the indices owned by tasks ``1..task_id-1``, ascending.

        This is the support of task ``task_id``'s pick mask.
        """
        owners = self.owners
        return np.flatnonzero((owners > 0) & (owners < task_id)).astype(np.int64)

    def copy(self) -> Ledger:
        """Return a deep copy."""
        return Ledger(self.owners.copy(), self.committed_tasks)


def init_ledger(n_params: int) -> Ledger:
    """Return a ledger with every index free."""
    if n_params <= 0:
        raise LedgerError("A ledger needs at least one parameter")
    return Ledger(np.zeros(n_params, dtype=OWNER_DTYPE), 0)


def commit_task(
    ledger: Ledger, task_id: int, surviving: npt.ArrayLike
) -> Ledger:
    """Give the surviving free indices to ``task_id``.

    Raises:
        LedgerError: If ``task_id`` is not the next task or an index is out
            of range.
        ForgettingHazardError: If a surviving index is already owned.
    """
    if task_id != ledger.committed_tasks + 1:
        raise LedgerError(
            f"Expected task {ledger.committed_tasks + 1}, got {task_id}"
        )
    if task_id > MAX_TASKS:
        raise LedgerError(f"At most {MAX_TASKS} tasks fit in the ledger")
    indices = np.unique(np.asarray(surviving, dtype=np.int64))
    if indices.size and (indices[0] < 0 or indices[-1] >= ledger.n_params):
        raise LedgerError("Surviving index out of range")

    owned = indices[ledger.owners[indices] != 0]
    if owned.size:
        first = int(owned[0])
        raise ForgettingHazardError(first, int(ledger.owners[first]))

    owners = ledger.owners.copy()
    owners[indices] = task_id
    _LOGGER.debug(
        "Task %d committed %d weights, %d remain free",
        task_id,
        indices.size,
        int(np.count_nonzero(owners == 0)),
    )
    return Ledger(owners, task_id)


def compose_view(
    ledger: Ledger,
    params: Tensor,
    task_id: int,
    pick_mask: npt.ArrayLike,
    include_free: bool,
) -> Tensor:
    """Return the effective weight vector of one task.

    Own weights pass through, prior-owned weights pass through where the pick
    mask is set, free weights pass through only with ``include_free``, and
    everything else (including weights of later tasks) is ``0.0``.
    """
    if params.shape[0] != ledger.n_params:
        raise MaskError(
            f"Ledger tracks {ledger.n_params} parameters, got {params.shape[0]}"
        )
    if task_id < 1 or task_id > ledger.committed_tasks + 1:
        raise LedgerError(f"No view for task {task_id}")
    prior = ledger.prior_owned(task_id)
    bits = np.asarray(pick_mask).astype(bool)
    if bits.shape != prior.shape:
        raise MaskError(
            f"Pick mask has {bits.size} bits, task {task_id} has "
            f"{prior.size} prior-owned weights"
        )

    keep = ledger.owners == task_id
    keep[prior[bits]] = True
    if include_free:
        keep |= ledger.owners == 0
    return np.where(keep, params, np.zeros((), dtype=params.dtype))


def grow(
    ledger: Ledger, net: Network, added: Sequence[int]
) -> tuple[Ledger, Network]:
    """Widen the network and register the new parameters as free."""
    if ledger.n_params != net.n_params:
        raise LedgerError("Ledger and network disagree on the parameter count")
    grown = grow_network(net, added)
    extra = grown.n_params - net.n_params
    owners = np.concatenate([ledger.owners, np.zeros(extra, dtype=OWNER_DTYPE)])
    return Ledger(owners, ledger.committed_tasks), grown


def free_indices(ledger: Ledger) -> IndexArray:
    """Return the free (released) indices, ascending."""
    return np.flatnonzero(ledger.owners == 0).astype(np.int64)
