"""Deterministic feed-forward network with reverse-mode gradients.

The network never owns the weights it computes with: every entry point takes
an effective weight vector laid out like ``Network.params``. Ownership and
masking happen in the ledger, so this module only needs to be exact.

Each output unit accumulates its bias first and then its inputs in ascending
input index, one float32 addition at a time. Growth appends inputs at the end
of that order, so a zero-valued appended weight adds an exact ``0.0`` and
leaves every output bit-identical.
"""

from __future__ import annotations

import logging
from collections.abc import Sequence
from dataclasses import dataclass, field

import numpy as np
import numpy.typing as npt

from .const import LAYER_DENSE, LAYER_HEAD, LAYER_RELU
from .errors import LabelRangeError, NonFiniteError, ShapeError

_LOGGER = logging.getLogger(__name__)

Tensor = npt.NDArray[np.floating]
IndexArray = npt.NDArray[np.int64]

LAYER_KINDS = (LAYER_DENSE, LAYER_RELU, LAYER_HEAD)

# Rows per block in the ordered affine sum
AFFINE_ROWS = 256


@dataclass(frozen=True)
class LayerSpec:
    """One layer of the network."""

    kind: str
    in_width: int
    out_width: int
    has_bias: bool = True

    @property
    def has_params(self) -> bool:
        """Return whether the layer carries weights."""
        return self.kind in (LAYER_DENSE, LAYER_HEAD)

    @property
    def param_count(self) -> int:
        """Return the number of weights and biases in the layer."""
        if not self.has_params:
            return 0
        return self.in_width * self.out_width + (
            self.out_width if self.has_bias else 0
        )


@dataclass
class Network:
    """Layer specs plus a flat parameter store.

    ``weight_index[l]`` is an ``(in_width, out_width)`` array of flat indices
    and ``bias_index[l]`` an ``(out_width,)`` array; both are ``None`` for
    layers without parameters. Built networks are numbered layer-major then
    row-major, with the bias as the last row. Grown entries are numbered from
    the end of the store, so existing indices never move.
    """

    layers: list[LayerSpec]
    params: Tensor
    weight_index: list[IndexArray | None] = field(default_factory=list)
    bias_index: list[IndexArray | None] = field(default_factory=list)

    @property
    def n_params(self) -> int:
        """Return the size of the flat parameter store."""
        return int(self.params.shape[0])

    def param_index(self, layer: int, row: int, col: int) -> int:
        """Return the flat index of a weight; ``row == in_width`` is the bias."""
        spec = self.layers[layer]
        weights = self.weight_index[layer]
        if weights is None:
            raise ShapeError(f"Layer {layer} ({spec.kind}) has no parameters")
        if row == spec.in_width:
            biases = self.bias_index[layer]
            if biases is None:
                raise ShapeError(f"Layer {layer} has no bias")
            return int(biases[col])
        return int(weights[row, col])

    def layer_of(self) -> npt.NDArray[np.int64]:
        """Return, for each flat index, the layer that uses it (-1 if none)."""
        owners = np.full(self.n_params, -1, dtype=np.int64)
        for layer, (weights, biases) in enumerate(
            zip(self.weight_index, self.bias_index)
        ):
            if weights is not None:
                owners[weights.ravel()] = layer
            if biases is not None:
                owners[biases] = layer
        return owners

    def copy(self) -> Network:
        """Return a deep copy."""
        return Network(
            layers=list(self.layers),
            params=self.params.copy(),
            weight_index=[None if w is None else w.copy() for w in self.weight_index],
            bias_index=[None if b is None else b.copy() for b in self.bias_index],
        )


def validate_spec(spec: Sequence[LayerSpec]) -> None:
    """Check that a layer sequence is non-empty and chains correctly."""
    if not spec:
        raise ShapeError("Network spec is empty")
    for position, layer in enumerate(spec):
        if layer.kind not in LAYER_KINDS:
            raise ShapeError(f"Unknown layer kind {layer.kind!r}")
        if layer.in_width <= 0 or layer.out_width <= 0:
            raise ShapeError(
                f"Layer {position} has non-positive width "
                f"{layer.in_width}->{layer.out_width}"
            )
        if layer.kind == LAYER_RELU and layer.in_width != layer.out_width:
            raise ShapeError(f"ReLU layer {position} must keep its width")
        if layer.kind == LAYER_HEAD and position != len(spec) - 1:
            raise ShapeError("A head layer may only appear last")
        if position and spec[position - 1].out_width != layer.in_width:
            raise ShapeError(
                f"Layer {position} expects width {layer.in_width}, "
                f"previous layer gives {spec[position - 1].out_width}"
            )


def build_network(spec: Sequence[LayerSpec], seed: int) -> Network:
    """Build a network with seeded Glorot-uniform weights and zero biases."""
    validate_spec(spec)
    rng = np.random.default_rng(seed)
    chunks: list[Tensor] = []
    weight_index: list[IndexArray | None] = []
    bias_index: list[IndexArray | None] = []
    offset = 0
    for layer in spec:
        if not layer.has_params:
            weight_index.append(None)
            bias_index.append(None)
            continue
        bound = np.sqrt(6.0 / (layer.in_width + layer.out_width))
        n_weights = layer.in_width * layer.out_width
        chunks.append(
            rng.uniform(-bound, bound, size=n_weights).astype(np.float32)
        )
        weight_index.append(
            np.arange(offset, offset + n_weights, dtype=np.int64).reshape(
                layer.in_width, layer.out_width
            )
        )
        offset += n_weights
        if layer.has_bias:
            chunks.append(np.zeros(layer.out_width, dtype=np.float32))
            bias_index.append(
                np.arange(offset, offset + layer.out_width, dtype=np.int64)
            )
            offset += layer.out_width
        else:
            bias_index.append(None)

    params = np.concatenate(chunks) if chunks else np.zeros(0, dtype=np.float32)
    _LOGGER.debug("Built network with %d layers and %d parameters", len(spec), offset)
    return Network(list(spec), params, weight_index, bias_index)


def with_head(net: Network, n_classes: int, has_bias: bool = True) -> Network:
    """Return ``net`` extended by a head layer whose parameters follow the store.

    The head's parameters are zero; callers concatenate their own head vector
    after the backbone's effective weights.
    """
    head = LayerSpec(LAYER_HEAD, net.layers[-1].out_width, n_classes, has_bias)
    validate_spec([*net.layers, head])
    start = net.n_params
    n_weights = head.in_width * head.out_width
    weights = np.arange(start, start + n_weights, dtype=np.int64).reshape(
        head.in_width, head.out_width
    )
    biases = (
        np.arange(start + n_weights, start + head.param_count, dtype=np.int64)
        if has_bias
        else None
    )
    return Network(
        layers=[*net.layers, head],
        params=np.concatenate(
            [net.params, np.zeros(head.param_count, dtype=net.params.dtype)]
        ),
        weight_index=[*net.weight_index, weights],
        bias_index=[*net.bias_index, biases],
    )


def grow_network(net: Network, added: Sequence[int]) -> Network:
    """Widen dense layers by ``added[l]`` output units each.

    New parameters are appended to the store with value ``0.0``. The next
    parametrised layer gains matching input rows.
    """
    if len(added) != len(net.layers):
        raise ShapeError(
            f"Expected {len(net.layers)} increments, got {len(added)}"
        )
    if any(inc < 0 for inc in added):
        raise ShapeError("Growth increments must be non-negative")

    layers: list[LayerSpec] = []
    weight_index: list[IndexArray | None] = []
    bias_index: list[IndexArray | None] = []
    next_index = net.n_params
    carried = 0  # width added to the current layer's input

    def allocate(count: int) -> IndexArray:
        nonlocal next_index
        block = np.arange(next_index, next_index + count, dtype=np.int64)
        next_index += count
        return block

    for position, layer in enumerate(net.layers):
        inc = added[position]
        if not layer.has_params:
            if inc:
                raise ShapeError(f"Layer {position} ({layer.kind}) cannot grow")
            layers.append(
                LayerSpec(
                    layer.kind,
                    layer.in_width + carried,
                    layer.out_width + carried,
                    layer.has_bias,
                )
            )
            weight_index.append(None)
            bias_index.append(None)
            continue
        if layer.kind == LAYER_HEAD and inc:
            raise ShapeError("Head layers keep their class count")

        old_w = net.weight_index[position]
        new_in = layer.in_width + carried
        new_out = layer.out_width + inc
        weights = np.empty((new_in, new_out), dtype=np.int64)
        weights[: layer.in_width, : layer.out_width] = old_w
        weights[layer.in_width :, : layer.out_width] = allocate(
            carried * layer.out_width
        ).reshape(carried, layer.out_width)
        weights[:, layer.out_width :] = allocate(new_in * inc).reshape(new_in, inc)
        weight_index.append(weights)

        old_b = net.bias_index[position]
        bias_index.append(
            None if old_b is None else np.concatenate([old_b, allocate(inc)])
        )
        layers.append(LayerSpec(layer.kind, new_in, new_out, layer.has_bias))
        carried = inc

    grown = next_index - net.n_params
    params = np.concatenate(
        [net.params, np.zeros(grown, dtype=net.params.dtype)]
    )
    _LOGGER.debug("Grew network by %d parameters to %d", grown, next_index)
    return Network(layers, params, weight_index, bias_index)


def growth_cost(net: Network, added: Sequence[int]) -> int:
    """Return how many parameters ``grow_network(net, added)`` would append."""
    cost = 0
    carried = 0
    for layer, inc in zip(net.layers, added):
        if not layer.has_params:
            continue
        new_in = layer.in_width + carried
        cost += carried * layer.out_width + new_in * inc
        if layer.has_bias:
            cost += inc
        carried = inc
    return cost


def _ordered_affine(x: Tensor, weights: Tensor, bias: Tensor | None) -> Tensor:
    """Compute ``x @ weights + bias`` summing bias first, then inputs in order."""
    if x.shape[0] > AFFINE_ROWS:
        return np.concatenate(
            [
                _ordered_affine(x[start : start + AFFINE_ROWS], weights, bias)
                for start in range(0, x.shape[0], AFFINE_ROWS)
            ]
        )
    terms = x[:, :, None] * weights[None, :, :]
    if bias is not None:
        lead = np.broadcast_to(bias, (x.shape[0], 1, bias.shape[0]))
        terms = np.concatenate([lead, terms], axis=1)
    return np.add.accumulate(terms, axis=1)[:, -1, :]


def _check_weights(net: Network, effective_weights: Tensor) -> Tensor:
    weights = np.asarray(effective_weights)
    if weights.ndim != 1 or weights.shape[0] != net.n_params:
        raise ShapeError(
            f"Effective weights have shape {weights.shape}, "
            f"network has {net.n_params} parameters"
        )
    return weights


def _check_batch(net: Network, batch: Tensor, dtype: np.dtype) -> Tensor:
    x = np.asarray(batch)
    if x.ndim != 2 or x.shape[1] != net.layers[0].in_width:
        raise ShapeError(
            f"Batch has shape {x.shape}, first layer expects "
            f"{net.layers[0].in_width} features"
        )
    if not np.all(np.isfinite(x)):
        raise NonFiniteError("Batch contains non-finite values")
    return x.astype(dtype, copy=False)


def forward_trace(net: Network, effective_weights: Tensor, batch: Tensor) -> list[Tensor]:
    """Return the input of every layer followed by the final output."""
    weights = _check_weights(net, effective_weights)
    x = _check_batch(net, batch, weights.dtype)
    trace = [x]
    for position, layer in enumerate(net.layers):
        if layer.kind == LAYER_RELU:
            x = np.maximum(x, 0)
        else:
            w = weights[net.weight_index[position]]
            b_idx = net.bias_index[position]
            x = _ordered_affine(x, w, None if b_idx is None else weights[b_idx])
        trace.append(x)
    return trace


def forward(net: Network, effective_weights: Tensor, batch: Tensor) -> Tensor:
    """Return the logits of ``batch`` under ``effective_weights``."""
    return forward_trace(net, effective_weights, batch)[-1]


def loss_and_grad(
    net: Network,
    effective_weights: Tensor,
    batch: Tensor,
    labels: npt.ArrayLike,
) -> tuple[float, Tensor]:
    """Return mean softmax cross-entropy and its gradient w.r.t. the weights."""
    if net.layers[-1].kind != LAYER_HEAD:
        raise ShapeError("loss_and_grad needs a network ending in a head layer")
    n_classes = net.layers[-1].out_width
    targets = np.asarray(labels, dtype=np.int64)
    if targets.ndim != 1 or targets.shape[0] != np.shape(batch)[0]:
        raise ShapeError("Labels must give one class per sample")
    if targets.size and (targets.min() < 0 or targets.max() >= n_classes):
        raise LabelRangeError(f"Labels must lie in [0, {n_classes})")

    weights = _check_weights(net, effective_weights)
    trace = forward_trace(net, weights, batch)
    logits = trace[-1]
    rows = np.arange(targets.shape[0])

    shifted = logits - logits.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(shifted).sum(axis=1))
    loss = float(np.mean(log_norm - shifted[rows, targets]))

    delta = np.exp(shifted - log_norm[:, None])
    delta[rows, targets] -= 1
    delta /= targets.shape[0]

    grad = np.zeros_like(weights)
    for position in range(len(net.layers) - 1, -1, -1):
        layer = net.layers[position]
        layer_input = trace[position]
        if layer.kind == LAYER_RELU:
            delta = delta * (layer_input > 0)
            continue
        w_idx = net.weight_index[position]
        grad[w_idx] = layer_input.T @ delta
        b_idx = net.bias_index[position]
        if b_idx is not None:
            grad[b_idx] = delta.sum(axis=0)
        if position:
            delta = delta @ weights[w_idx].T
    return loss, grad


def sgd_step(
    params: Tensor,
    grad: Tensor,
    update_mask: npt.ArrayLike,
    lr: float,
    momentum_state: Tensor,
    momentum_coeff: float = 0.0,
) -> tuple[Tensor, Tensor]:
    """Apply one momentum SGD step to the entries where ``update_mask`` is set.

    Returns the new parameters and the new momentum state. Masked-out entries
    are copied through unchanged, bit for bit.
    """
    mask = np.asarray(update_mask).astype(bool)
    lengths = {params.shape[0], grad.shape[0], mask.shape[0], momentum_state.shape[0]}
    if len(lengths) != 1:
        raise ShapeError("params, grad, update_mask and momentum differ in length")
    if not np.isfinite(lr) or not np.isfinite(momentum_coeff):
        raise NonFiniteError("Learning rate and momentum must be finite")

    velocity = np.where(mask, momentum_coeff * momentum_state + grad, momentum_state)
    velocity = velocity.astype(momentum_state.dtype, copy=False)
    updated = np.where(mask, params - lr * velocity, params)
    return updated.astype(params.dtype, copy=False), velocity
