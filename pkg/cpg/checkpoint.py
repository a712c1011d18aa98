"""Bit-exact binary checkpoints of a run state.

Layout, little-endian throughout::

    b"CPG1"  u32 version
    payload:
        u64 seed  u64 n0  f64 increment_fraction  f64 max_expansion
        u32 max_retries  u32 n_order  u32[n_order] task order
        u32 n_layers, per layer: u8 kind  u32 in  u32 out  u8 has_bias
        per parametrised layer: u32[in*out] weight indices, u32[out] bias indices
        u64 n_params  f32[n_params] params  u16[n_params] owners
        u32 n_tasks, per task:
            u32 task_id  u32 mask_bits  u8[ceil(bits/8)] packed mask
            u32 head_in_width  u32 n_classes  f32[...] head
            f64 goal  u8 goal_source  f64 achieved  u64 owned_count
            u8 best_effort  u32 growth_events  u64 n_params_at_commit
            u32 n_class_ids  u32[n_class_ids] class ids
    u32 CRC32 of the payload
"""

from __future__ import annotations

import logging
import os
import struct
import tempfile
import zlib
from pathlib import Path

import numpy as np
import numpy.typing as npt

from .const import CHECKPOINT_MAGIC, CHECKPOINT_VERSION, GOAL_MODES
from .controller import CpgState, GrowthPolicy, TaskRecord
from .errors import CheckpointError, ChecksumError, CpgError
from .ledger import OWNER_DTYPE, Ledger
from .nn import LAYER_KINDS, IndexArray, LayerSpec, Network, validate_spec
from .pruner import AccuracyGoal

_LOGGER = logging.getLogger(__name__)

_HEADER = struct.Struct("<4sI")
_CRC = struct.Struct("<I")


class _Writer:
    """Accumulates little-endian fields."""

    def __init__(self) -> None:
        self._chunks: list[bytes] = []

    def pack(self, fmt: str, *values: object) -> None:
        self._chunks.append(struct.pack("<" + fmt, *values))

    def array(self, values: npt.ArrayLike, dtype: str) -> None:
        self._chunks.append(np.ascontiguousarray(values, dtype=dtype).tobytes())

    def getvalue(self) -> bytes:
        return b"".join(self._chunks)


class _Reader:
    """Reads little-endian fields, failing cleanly on truncation."""

    def __init__(self, data: bytes) -> None:
        self._data = data
        self._offset = 0

    def _take(self, size: int, what: str) -> bytes:
        end = self._offset + size
        if size < 0 or end > len(self._data):
            raise CheckpointError(f"Checkpoint truncated while reading {what}")
        chunk = self._data[self._offset : end]
        self._offset = end
        return chunk

    def unpack(self, fmt: str, what: str) -> tuple:
        layout = struct.Struct("<" + fmt)
        return layout.unpack(self._take(layout.size, what))

    def scalar(self, fmt: str, what: str) -> int | float:
        return self.unpack(fmt, what)[0]

    def array(self, count: int, dtype: str, what: str) -> np.ndarray:
        size = np.dtype(dtype).itemsize * count
        return np.frombuffer(self._take(size, what), dtype=dtype).copy()

    def done(self) -> None:
        if self._offset != len(self._data):
            raise CheckpointError(
                f"{len(self._data) - self._offset} unexpected trailing bytes"
            )


def _encode_payload(state: CpgState) -> bytes:
    out = _Writer()
    out.pack(
        "QQddI",
        state.seed,
        state.n0,
        state.policy.increment_fraction,
        state.policy.max_expansion,
        state.policy.max_retries,
    )
    out.pack("I", len(state.task_order))
    out.array(state.task_order, "<u4")

    net = state.net
    out.pack("I", len(net.layers))
    for layer in net.layers:
        out.pack(
            "BIIB",
            LAYER_KINDS.index(layer.kind),
            layer.in_width,
            layer.out_width,
            int(layer.has_bias),
        )
    for weights, biases in zip(net.weight_index, net.bias_index):
        if weights is not None:
            out.array(weights.ravel(), "<u4")
        if biases is not None:
            out.array(biases, "<u4")

    out.pack("Q", net.n_params)
    out.array(net.params, "<f4")
    out.array(state.ledger.owners, "<u2")

    out.pack("I", len(state.records))
    for record in state.records:
        out.pack("II", record.task_id, record.mask.size)
        out.array(np.packbits(record.mask.astype(np.uint8), bitorder="little"), "u1")
        out.pack("II", record.head_in_width, record.n_classes)
        out.array(record.head, "<f4")
        out.pack(
            "dBdQBIQ",
            record.goal.value,
            GOAL_MODES.index(record.goal.source),
            record.achieved,
            record.owned_count,
            int(record.best_effort),
            record.growth_events,
            record.n_params_at_commit,
        )
        out.pack("I", len(record.classes))
        out.array(record.classes, "<u4")
    return out.getvalue()


def encode_checkpoint(state: CpgState) -> bytes:
    """Serialize a state to checkpoint bytes."""
    if state.net.params.dtype != np.float32:
        raise CheckpointError("Checkpoints store float32 parameters only")
    try:
        payload = _encode_payload(state)
    except struct.error as err:
        raise CheckpointError(
            f"State does not fit the checkpoint format: {err}"
        ) from err
    return (
        _HEADER.pack(CHECKPOINT_MAGIC, CHECKPOINT_VERSION)
        + payload
        + _CRC.pack(zlib.crc32(payload))
    )


def _decode_network(reader: _Reader) -> Network:
    (n_layers,) = reader.unpack("I", "layer count")
    layers: list[LayerSpec] = []
    for position in range(n_layers):
        kind, in_width, out_width, has_bias = reader.unpack("BIIB", "layer spec")
        if kind >= len(LAYER_KINDS):
            raise CheckpointError(f"Layer {position} has unknown kind {kind}")
        layers.append(LayerSpec(LAYER_KINDS[kind], in_width, out_width, bool(has_bias)))
    try:
        validate_spec(layers)
    except CpgError as err:
        raise CheckpointError(f"Invalid layer specs: {err}") from err

    weight_index: list[IndexArray | None] = []
    bias_index: list[IndexArray | None] = []
    for layer in layers:
        if not layer.has_params:
            weight_index.append(None)
            bias_index.append(None)
            continue
        weights = reader.array(layer.in_width * layer.out_width, "<u4", "weight index")
        weight_index.append(
            weights.astype(np.int64).reshape(layer.in_width, layer.out_width)
        )
        bias_index.append(
            reader.array(layer.out_width, "<u4", "bias index").astype(np.int64)
            if layer.has_bias
            else None
        )

    n_params = int(reader.scalar("Q", "parameter count"))
    params = reader.array(n_params, "<f4", "parameters").astype(np.float32)
    used = np.concatenate(
        [np.zeros(0, dtype=np.int64)]
        + [w.ravel() for w in weight_index if w is not None]
        + [b for b in bias_index if b is not None]
    )
    if np.any(used >= n_params):
        raise CheckpointError("Layer index points past the parameter store")
    return Network(layers, params, weight_index, bias_index)


def _decode_record(reader: _Reader) -> TaskRecord:
    task_id, n_bits = reader.unpack("II", "task header")
    packed = reader.array((n_bits + 7) // 8, "u1", "mask")
    mask = np.unpackbits(packed, count=n_bits, bitorder="little").astype(np.uint8)
    mask.setflags(write=False)
    head_in_width, n_classes = reader.unpack("II", "head shape")
    head = reader.array(
        head_in_width * n_classes + n_classes, "<f4", "head"
    ).astype(np.float32)
    head.setflags(write=False)
    goal, source, achieved, owned, best_effort, growth, n_at_commit = reader.unpack(
        "dBdQBIQ", "task summary"
    )
    if source >= len(GOAL_MODES):
        raise CheckpointError(f"Task {task_id} has unknown goal source {source}")
    (n_ids,) = reader.unpack("I", "class count")
    classes = tuple(int(c) for c in reader.array(n_ids, "<u4", "class ids"))
    try:
        return TaskRecord(
            task_id=task_id,
            mask=mask,
            head=head,
            head_in_width=head_in_width,
            n_classes=n_classes,
            goal=AccuracyGoal(goal, GOAL_MODES[source]),
            achieved=achieved,
            owned_count=owned,
            best_effort=bool(best_effort),
            classes=classes,
            growth_events=growth,
            n_params_at_commit=n_at_commit,
        )
    except CpgError as err:
        raise CheckpointError(f"Invalid record for task {task_id}: {err}") from err


def decode_checkpoint(data: bytes) -> CpgState:
    """Rebuild a state from checkpoint bytes.

    Raises:
        CheckpointError: On bad magic or version, truncation or inconsistency
        ChecksumError: When the trailing CRC32 does not match the payload
    """
    if len(data) < _HEADER.size + _CRC.size:
        raise CheckpointError("Checkpoint truncated")
    magic, version = _HEADER.unpack_from(data)
    if magic != CHECKPOINT_MAGIC:
        raise CheckpointError(f"Bad checkpoint magic {magic!r}")
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(f"Unsupported checkpoint version {version}")
    payload = data[_HEADER.size : -_CRC.size]
    (stored,) = _CRC.unpack(data[-_CRC.size :])
    if zlib.crc32(payload) != stored:
        raise ChecksumError(
            f"Checksum mismatch: stored {stored:#010x}, "
            f"computed {zlib.crc32(payload):#010x}"
        )

    reader = _Reader(payload)
    seed, n0, increment_fraction, max_expansion, max_retries = reader.unpack(
        "QQddI", "run header"
    )
    (n_order,) = reader.unpack("I", "task order length")
    order = tuple(int(i) for i in reader.array(n_order, "<u4", "task order"))
    net = _decode_network(reader)
    owners = reader.array(net.n_params, "<u2", "owners").astype(OWNER_DTYPE)
    (n_tasks,) = reader.unpack("I", "task count")
    records = [_decode_record(reader) for _ in range(n_tasks)]
    reader.done()

    if [r.task_id for r in records] != list(range(1, n_tasks + 1)):
        raise CheckpointError("Task records are not numbered 1..n")
    if owners.size and int(owners.max()) > n_tasks:
        raise CheckpointError("Ledger names a task with no record")
    try:
        policy = GrowthPolicy(increment_fraction, max_expansion, max_retries)
    except CpgError as err:
        raise CheckpointError(f"Invalid growth policy: {err}") from err
    if n0 < 1:
        raise CheckpointError("Initial parameter count must be positive")
    return CpgState(
        net=net,
        ledger=Ledger(owners, n_tasks),
        records=records,
        policy=policy,
        n0=n0,
        seed=seed,
        task_order=order,
    )


def atomic_write(path: str | Path, data: bytes) -> None:
    """Write ``data`` to a temp file beside ``path`` and rename it into place."""
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    fd, temp_path = tempfile.mkstemp(suffix=".tmp", dir=target.parent)
    try:
        with os.fdopen(fd, "wb") as handle:
            handle.write(data)
            handle.flush()
            os.fsync(handle.fileno())
        os.replace(temp_path, target)
    except BaseException:
        if os.path.exists(temp_path):
            os.unlink(temp_path)
        raise


def save_checkpoint(state: CpgState, path: str | Path) -> None:
    """Write a checkpoint of ``state`` to ``path`` atomically."""
    data = encode_checkpoint(state)
    try:
        atomic_write(path, data)
    except OSError as err:
        raise CheckpointError(f"Cannot write checkpoint {path}: {err}") from err
    _LOGGER.info(
        "Saved checkpoint %s (%d tasks, %d bytes)", path, len(state.records), len(data)
    )


def load_checkpoint(path: str | Path) -> CpgState:
    """Read a checkpoint written by ``save_checkpoint``."""
    try:
        data = Path(path).read_bytes()
    except OSError as err:
        raise CheckpointError(f"Cannot read checkpoint {path}: {err}") from err
    state = decode_checkpoint(data)
    _LOGGER.info("Loaded checkpoint %s (%d tasks)", path, len(state.records))
    return state
