"""Untrained ReLU networks and the capturing forward pass.

Networks are node graphs (see :mod:`swapnas.cells`) with deterministic
random weights: zero-mean Gaussians scaled by fan-in, zero biases.  The
forward pass records the binarised post-activation bit of every
intermediate value that feeds a ReLU, for every sample, and discards the
raw activations immediately.  An optional per-channel batch
standardisation of pre-activations emulates normalisation layers at
initialisation; it must be switched off when testing the positive-scale
sign invariance of plain convolution chains.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .cells import (
    AssemblyConfig,
    AssemblyError,
    CellMatrix,
    NodeSpec,
    ShapeError,
    assemble_descriptor,
    trace_channels,
    trace_shapes,
)
from .metric import ActivationCapture, pack_bit_rows

TENSOR_MAGIC = "SWAPTENSOR v1"
_STANDARDISE_EPS = 1e-5


class NumericOverflowError(FloatingPointError):
    """A forward pass produced a non-finite intermediate value."""


@dataclass(frozen=True)
class InputBatch:
    """A batch of raw input tensors with axes (sample, channel, width, height)."""

    data: np.ndarray

    def __post_init__(self) -> None:
        arr = np.asarray(self.data, dtype=np.float64)
        if arr.ndim != 4:
            raise ValueError("input batch must have axes (sample, channel, width, height)")
        if min(arr.shape) < 1:
            raise ValueError(f"all batch axes must be positive, got {arr.shape}")
        if not np.isfinite(arr).all():
            raise ValueError("input batch contains non-finite values")
        arr = np.ascontiguousarray(arr)
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)

    @property
    def n_samples(self) -> int:
        return int(self.data.shape[0])

    @property
    def channels(self) -> int:
        return int(self.data.shape[1])

    @property
    def dims(self) -> tuple[int, int, int]:
        return tuple(int(d) for d in self.data.shape[1:])


def gaussian_batch(n_samples: int, dims: tuple[int, int, int], seed) -> InputBatch:
    """Standard-normal synthetic batch with the given (C, W, H) dims."""
    rng = np.random.default_rng(seed)
    c, w, h = dims
    return InputBatch(rng.standard_normal((n_samples, c, w, h)))


def write_tensor_file(path, batch: InputBatch) -> None:
    """Write the raw tensor format: ASCII header line, then little-endian float32."""
    s, c, w, h = batch.data.shape
    with open(path, "wb") as fh:
        fh.write(f"{TENSOR_MAGIC} {s} {c} {w} {h}\n".encode("ascii"))
        fh.write(batch.data.astype("<f4").tobytes())


def read_tensor_file(path) -> InputBatch:
    with open(path, "rb") as fh:
        header = fh.readline().decode("ascii", errors="replace").rstrip("\n")
        parts = header.split()
        if len(parts) != 6 or " ".join(parts[:2]) != TENSOR_MAGIC:
            raise ValueError(f"not a {TENSOR_MAGIC} file: header {header!r}")
        try:
            s, c, w, h = (int(p) for p in parts[2:])
        except ValueError:
            raise ValueError(f"malformed tensor header {header!r}") from None
        payload = fh.read()
    expected = s * c * w * h * 4
    if len(payload) != expected:
        raise ValueError(f"tensor payload has {len(payload)} bytes, expected {expected}")
    data = np.frombuffer(payload, dtype="<f4").reshape(s, c, w, h)
    return InputBatch(data.astype(np.float64))


@dataclass(frozen=True)
class LayerSpec:
    """A fully bound layer: geometry plus the input spatial dims it sees."""

    kind: str  # conv | avg-pool | skip | dense
    channels_out: int = 0
    kernel: int = 0
    stride: int = 1
    padding: int = 0
    in_width: int = 0
    in_height: int = 0
    units: int = 0


@dataclass(frozen=True)
class NetworkInstance:
    """Immutable assembled network: node graph plus seeded random weights."""

    nodes: tuple[NodeSpec, ...]
    weights: tuple[np.ndarray | None, ...]
    seed: int
    in_channels: int

    def __post_init__(self) -> None:
        if len(self.nodes) != len(self.weights):
            raise AssemblyError("one weight slot per node is required")
        frozen = []
        for w in self.weights:
            if w is None:
                frozen.append(None)
                continue
            arr = np.asarray(w, dtype=np.float64)
            arr = np.ascontiguousarray(arr)
            arr.setflags(write=False)
            frozen.append(arr)
        object.__setattr__(self, "weights", tuple(frozen))

    def layers(self, input_dims: tuple[int, int, int]) -> tuple[LayerSpec, ...]:
        """Bound layer views (conv, pooling, skip, dense) for the given input."""
        shapes = trace_shapes(self.nodes, input_dims)
        out = []
        for node in self.nodes:
            if node.kind not in ("conv", "avg-pool", "skip", "dense"):
                continue
            _, w, h = shapes[node.inputs[0]]
            out.append(
                LayerSpec(
                    kind=node.kind,
                    channels_out=node.channels_out,
                    kernel=node.kernel,
                    stride=node.stride,
                    padding=node.padding,
                    in_width=w,
                    in_height=h,
                    units=node.units,
                )
            )
        return tuple(out)


def network_from_nodes(
    nodes: tuple[NodeSpec, ...], seed: int, in_channels: int
) -> NetworkInstance:
    """Attach deterministic weights to a node graph.

    Conv and dense weights are drawn from N(0, 2/fan_in) in node order from
    a generator seeded with ``seed``, so identical (graph, seed) pairs give
    bit-identical weights.  Biases are zero and therefore not stored.
    """
    channels = trace_channels(nodes, in_channels)
    rng = np.random.default_rng(seed)
    weights: list[np.ndarray | None] = []
    for node in nodes:
        if node.kind == "conv":
            c_in = channels[node.inputs[0]]
            fan_in = c_in * node.kernel * node.kernel
            w = rng.standard_normal((node.channels_out, c_in, node.kernel, node.kernel))
            weights.append(w * np.sqrt(2.0 / fan_in))
        elif node.kind == "dense":
            c_in = channels[node.inputs[0]]
            weights.append(rng.standard_normal((node.units, c_in)) * np.sqrt(2.0 / c_in))
        else:
            weights.append(None)
    return NetworkInstance(tuple(nodes), tuple(weights), seed, in_channels)


def build_network(
    cell: CellMatrix,
    assembly: AssemblyConfig,
    seed: int,
    in_channels: int = 3,
) -> NetworkInstance:
    """Assemble a cell stack and give it seeded random weights."""
    return network_from_nodes(assemble_descriptor(cell, assembly, in_channels), seed, in_channels)


def build_mlp(
    in_features: int,
    hidden_units: list[int] | tuple[int, ...],
    seed: int,
    head_units: int = 0,
) -> NetworkInstance:
    """Plain dense chain; inputs are (features, 1, 1) tensors.

    Every hidden layer feeds a ReLU and is captured.  The optional head is
    a linear output layer without an activation.
    """
    if in_features < 1:
        raise ValueError("in_features must be at least 1")
    nodes: list[NodeSpec] = [NodeSpec("input", "input")]
    prev = 0
    for li, units in enumerate(hidden_units):
        if units < 1:
            raise ValueError("hidden layer sizes must be at least 1")
        nodes.append(NodeSpec(f"dense{li}", "dense", (prev,), units=int(units), scored=True))
        prev = len(nodes) - 1
    if head_units:
        nodes.append(NodeSpec("head", "dense", (prev,), units=int(head_units)))
    return network_from_nodes(tuple(nodes), seed, in_features)


def count_intermediate_values(net: NetworkInstance, batch_dims: tuple[int, int, int]) -> int:
    """Number of scalars feeding ReLU layers for the given input dims.

    Scored convolutions contribute channels times output area, scored dense
    layers their unit count; pooling, skips and linear adapters contribute
    nothing.
    """
    shapes = trace_shapes(net.nodes, batch_dims)
    total = 0
    for idx, node in enumerate(net.nodes):
        if not node.scored:
            continue
        if node.kind == "conv":
            c, w, h = shapes[idx]
            total += c * w * h
        elif node.kind == "dense":
            total += node.units
    return total


def _conv2d(x: np.ndarray, w: np.ndarray, stride: int, padding: int) -> np.ndarray:
    if padding:
        x = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    k = w.shape[-1]
    win = sliding_window_view(x, (k, k), axis=(2, 3))[:, :, ::stride, ::stride]
    y = np.tensordot(win, w, axes=[(1, 4, 5), (1, 2, 3)])
    return np.transpose(y, (0, 3, 1, 2))


def _avg_pool(x: np.ndarray, kernel: int, stride: int, padding: int) -> np.ndarray:
    if padding:
        x = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    win = sliding_window_view(x, (kernel, kernel), axis=(2, 3))[:, :, ::stride, ::stride]
    return win.mean(axis=(4, 5))


def _standardise(y: np.ndarray, axes: tuple[int, ...]) -> np.ndarray:
    mean = y.mean(axis=axes, keepdims=True)
    var = y.var(axis=axes, keepdims=True)
    return (y - mean) / np.sqrt(var + _STANDARDISE_EPS)


def forward_capture(
    net: NetworkInstance,
    batch: InputBatch,
    standardise: bool = True,
) -> ActivationCapture:
    """Run the batch through the network, recording only activation bits.

    The capture has exactly ``count_intermediate_values`` rows and one
    column per sample; raw activations are freed as soon as every consumer
    has used them.  With ``standardise`` enabled, each scored layer's
    pre-activations are shifted and scaled per channel to batch mean 0 and
    variance ~1 before the ReLU, which changes the recorded signs.
    """
    if batch.channels != net.in_channels:
        raise ShapeError(
            f"batch has {batch.channels} channels but the network stem expects {net.in_channels}"
        )
    trace_shapes(net.nodes, batch.dims)  # reject bad geometry before any compute
    n_samples = batch.n_samples
    blocks: list[np.ndarray] = []
    consumers = [0] * len(net.nodes)
    for node in net.nodes:
        for i in node.inputs:
            consumers[i] += 1
    values: dict[int, np.ndarray] = {}

    for idx, node in enumerate(net.nodes):
        if node.kind == "input":
            out = batch.data
        else:
            x = values[node.inputs[0]]
            for i in node.inputs[1:]:
                x = x + values[i]
            if node.kind == "conv":
                pre = _conv2d(x, net.weights[idx], node.stride, node.padding)
                if node.scored:
                    if standardise:
                        pre = _standardise(pre, (0, 2, 3))
                    blocks.append(pack_bit_rows((pre > 0).reshape(n_samples, -1).T))
                    out = np.maximum(pre, 0.0)
                else:
                    out = pre
            elif node.kind == "avg-pool":
                out = _avg_pool(x, node.kernel, node.stride, node.padding)
            elif node.kind == "skip":
                out = x
            elif node.kind == "global-pool":
                out = x.mean(axis=(2, 3), keepdims=True)
            elif node.kind == "dense":
                flat = x.reshape(n_samples, -1)
                pre = flat @ net.weights[idx].T
                if node.scored:
                    if standardise:
                        pre = _standardise(pre, (0,))
                    blocks.append(pack_bit_rows((pre > 0).T))
                    pre = np.maximum(pre, 0.0)
                out = pre.reshape(n_samples, node.units, 1, 1)
            else:
                raise AssemblyError(f"unknown node kind {node.kind!r} at {node.name}")
            if not np.isfinite(out).all():
                raise NumericOverflowError(
                    f"non-finite intermediate value produced by layer {node.name}"
                )
        values[idx] = out
        for i in node.inputs:
            consumers[i] -= 1
            if consumers[i] == 0:
                del values[i]

    width = (n_samples + 7) // 8
    if blocks:
        packed = np.concatenate(blocks, axis=0)
    else:
        packed = np.zeros((0, width), dtype=np.uint8)
    return ActivationCapture(packed, n_samples)
