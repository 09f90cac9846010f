"""Cell-based search space: op-code matrices, assembly and size accounting.

A cell is a small DAG over N nodes encoded as a strictly upper-triangular
N x N matrix of operation codes.  Code 0 means no connection; codes 1-4
select the edge operation (3x3 conv, 1x1 conv, 3x3 average pool, skip).
Node 0 is the single input of the cell and node N-1 its single output.
Full networks are assembled by putting a stem convolution in front of a
stack of cell copies, optionally with channel-doubling reductions between
them and a pooling/linear head on top.  Where several edges feed one node
their outputs are summed elementwise.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

OP_NONE = 0
OP_CONV3 = 1
OP_CONV1 = 2
OP_POOL3 = 3
OP_SKIP = 4
OP_CODES = (OP_CONV3, OP_CONV1, OP_POOL3, OP_SKIP)
OP_NAMES = {
    OP_NONE: "none",
    OP_CONV3: "conv3x3",
    OP_CONV1: "conv1x1",
    OP_POOL3: "avgpool3x3",
    OP_SKIP: "skip",
}

CELL_FORMAT_VERSION = 1


class CellValidationError(ValueError):
    """A cell matrix violates the search-space invariants."""

    def __init__(self, violations: list[str]):
        self.violations = list(violations)
        super().__init__("; ".join(violations))


class AssemblyError(ValueError):
    """A network graph cannot be assembled consistently."""


class ShapeError(ValueError):
    """Tensor shapes are incompatible with a layer's geometry."""


class CellMatrix:
    """Upper-triangular op-code matrix describing one cell DAG.

    Construction only enforces that the matrix is square with at least two
    nodes; use :func:`validate_cell` to check the search-space invariants,
    which keeps invalid matrices representable for error reporting.
    """

    __slots__ = ("codes",)

    def __init__(self, codes) -> None:
        arr = np.array(codes, dtype=np.int64)
        if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
            raise ValueError("cell matrix must be square")
        if arr.shape[0] < 2:
            raise ValueError("a cell needs at least two nodes")
        arr.setflags(write=False)
        object.__setattr__(self, "codes", arr)

    def __setattr__(self, name, value):
        raise AttributeError("CellMatrix is immutable")

    @property
    def n_nodes(self) -> int:
        return int(self.codes.shape[0])

    def __eq__(self, other) -> bool:
        if not isinstance(other, CellMatrix):
            return NotImplemented
        return self.codes.shape == other.codes.shape and bool(
            np.array_equal(self.codes, other.codes)
        )

    def __hash__(self) -> int:
        return hash((self.n_nodes, self.codes.tobytes()))

    def __repr__(self) -> str:
        rows = ["[" + " ".join(str(int(c)) for c in row) + "]" for row in self.codes]
        return f"CellMatrix({', '.join(rows)})"

    def replace(self, i: int, j: int, code: int) -> "CellMatrix":
        """Copy with entry (i, j) set to ``code``."""
        codes = self.codes.copy()
        codes[i, j] = code
        return CellMatrix(codes)

    def edges(self) -> list[tuple[int, int, int]]:
        """Nonzero upper-triangular entries as (source, target, code)."""
        out = []
        n = self.n_nodes
        for i in range(n):
            for j in range(i + 1, n):
                code = int(self.codes[i, j])
                if code != OP_NONE:
                    out.append((i, j, code))
        return out

    def stable_hash(self) -> int:
        """Platform-independent 64-bit digest of the encoding."""
        payload = f"{self.n_nodes}:" + " ".join(str(int(c)) for c in self.codes.ravel())
        digest = hashlib.sha256(payload.encode("ascii")).digest()
        return int.from_bytes(digest[:8], "little")

    def encode(self) -> str:
        """Canonical two-line text form (``nodes`` and row-major ``matrix``)."""
        flat = " ".join(str(int(c)) for c in self.codes.ravel())
        return f"nodes = {self.n_nodes}\nmatrix = {flat}\n"

    @classmethod
    def decode(cls, text: str) -> "CellMatrix":
        """Parse the text form; ``;`` is accepted as a line separator."""
        fields: dict[str, str] = {}
        for raw in text.replace(";", "\n").splitlines():
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ValueError(f"malformed cell line: {line!r}")
            key, _, value = line.partition("=")
            fields[key.strip()] = value.strip()
        for key in ("nodes", "matrix"):
            if key not in fields:
                raise ValueError(f"cell document is missing the {key!r} field")
        try:
            n = int(fields["nodes"])
            flat = [int(tok) for tok in fields["matrix"].split()]
        except ValueError as exc:
            raise ValueError(f"cell document has non-integer entries: {exc}") from None
        if n < 2:
            raise ValueError("a cell needs at least two nodes")
        if len(flat) != n * n:
            raise ValueError(f"expected {n * n} matrix entries, got {len(flat)}")
        return cls(np.array(flat, dtype=np.int64).reshape(n, n))


def read_cell_file(path) -> CellMatrix:
    with open(path, "r", encoding="ascii") as fh:
        return CellMatrix.decode(fh.read())


def write_cell_file(path, cell: CellMatrix) -> None:
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write(cell.encode())


def validate_cell(cell: CellMatrix) -> list[str]:
    """Check the search-space invariants; an empty list means the cell is ok.

    Every violation is reported with its coordinates.  Isolated interior
    nodes (no edges at all) are allowed since they take no part in the
    induced DAG.
    """
    violations: list[str] = []
    codes = cell.codes
    n = cell.n_nodes
    for i in range(n):
        for j in range(n):
            code = int(codes[i, j])
            if code == OP_NONE:
                continue
            if j <= i:
                violations.append(f"lower-triangular entry {code} at ({i}, {j})")
            elif code not in OP_CODES:
                violations.append(f"unknown op code {code} at ({i}, {j})")
    upper = np.triu(codes, k=1)
    good = np.isin(upper, OP_CODES) & (upper != OP_NONE)
    in_deg = good.sum(axis=0)
    out_deg = good.sum(axis=1)
    if out_deg[0] == 0:
        violations.append("source node 0 has no outgoing connection")
    if in_deg[n - 1] == 0:
        violations.append(f"sink node {n - 1} has no incoming connection")
    for v in range(1, n - 1):
        if out_deg[v] > 0 and in_deg[v] == 0:
            violations.append(f"node {v} has outgoing connections but no incoming one")
        if in_deg[v] > 0 and out_deg[v] == 0:
            violations.append(f"node {v} has incoming connections but no outgoing one")
    return violations


def assert_valid_cell(cell: CellMatrix) -> None:
    violations = validate_cell(cell)
    if violations:
        raise CellValidationError(violations)


def random_cell(n_nodes: int, rng, edge_prob: float = 0.5) -> CellMatrix:
    """Draw a valid random cell.

    Each upper-triangular slot carries an edge with probability
    ``edge_prob``, with the op code chosen uniformly.  A connectivity
    repair pass then gives every non-source node at least one incoming and
    every non-sink node at least one outgoing edge, so the source reaches
    the sink through every remaining node.
    """
    if n_nodes < 2:
        raise ValueError("a cell needs at least two nodes")
    rng = np.random.default_rng(rng)
    while True:
        codes = np.zeros((n_nodes, n_nodes), dtype=np.int64)
        for i in range(n_nodes):
            for j in range(i + 1, n_nodes):
                if rng.random() < edge_prob:
                    codes[i, j] = rng.integers(1, 5)
        for j in range(1, n_nodes):
            if not codes[:j, j].any():
                codes[rng.integers(0, j), j] = rng.integers(1, 5)
        for i in range(n_nodes - 2, -1, -1):
            if not codes[i, i + 1 :].any():
                codes[i, rng.integers(i + 1, n_nodes)] = rng.integers(1, 5)
        cell = CellMatrix(codes)
        if not validate_cell(cell):
            return cell


@dataclass(frozen=True)
class AssemblyConfig:
    """How cell copies are stacked into a full network.

    ``reductions`` lists cell indices that are preceded by a stride-2
    channel-doubling convolution.  ``cell_channels`` pins the operating
    width of every cell; when unset the width simply follows the incoming
    feature map.  The optional head is a global average pool followed by a
    linear layer.
    """

    depth: int = 3
    stem_channels: int = 16
    reductions: tuple[int, ...] = ()
    cell_channels: int | None = None
    head: bool = False
    head_units: int = 10

    def __post_init__(self) -> None:
        if self.depth < 1:
            raise ValueError("depth must be at least 1")
        if self.stem_channels < 1:
            raise ValueError("stem_channels must be at least 1")
        reductions = tuple(int(r) for r in self.reductions)
        if list(reductions) != sorted(set(reductions)):
            raise ValueError("reductions must be strictly increasing")
        if reductions and not (0 <= reductions[0] and reductions[-1] < self.depth):
            raise ValueError("reduction indices must lie in [0, depth)")
        object.__setattr__(self, "reductions", reductions)
        if self.cell_channels is not None and self.cell_channels < 1:
            raise ValueError("cell_channels must be at least 1")
        if self.head and self.head_units < 1:
            raise ValueError("head_units must be at least 1")


def nb201_like_assembly(depth: int = 5, stem_channels: int = 16) -> AssemblyConfig:
    """Benchmark-style stack: reductions at one and two thirds of the depth."""
    reductions = tuple(sorted({r for r in ((depth + 2) // 3, (2 * depth + 2) // 3) if 0 < r < depth}))
    return AssemblyConfig(depth=depth, stem_channels=stem_channels, reductions=reductions)


@dataclass(frozen=True)
class NodeSpec:
    """One vertex of an assembled computation graph.

    ``inputs`` lists upstream node ids; multiple inputs are summed
    elementwise before the node's own operation is applied.  ``scored``
    marks nodes whose output feeds a ReLU and therefore lands in the
    activation capture.
    """

    name: str
    kind: str  # input | conv | avg-pool | skip | dense | global-pool
    inputs: tuple[int, ...] = ()
    channels_out: int = 0
    kernel: int = 0
    stride: int = 1
    padding: int = 0
    units: int = 0
    scored: bool = False


def _edge_nodes(
    nodes: list[NodeSpec],
    src_ids: tuple[int, ...],
    src_channels: int,
    width: int,
    code: int,
    name: str,
) -> int:
    """Append the node(s) realising one cell edge; return the output id."""
    if code == OP_CONV3:
        nodes.append(NodeSpec(name, "conv", src_ids, channels_out=width, kernel=3, padding=1, scored=True))
        return len(nodes) - 1
    if code == OP_CONV1:
        nodes.append(NodeSpec(name, "conv", src_ids, channels_out=width, kernel=1, scored=True))
        return len(nodes) - 1
    if code == OP_POOL3:
        nodes.append(NodeSpec(name, "avg-pool", src_ids, channels_out=src_channels, kernel=3, padding=1))
        out = len(nodes) - 1
        if src_channels != width:
            # Linear 1x1 adapter; it counts toward model size but is not scored.
            nodes.append(NodeSpec(name + ".proj", "conv", (out,), channels_out=width, kernel=1))
            out = len(nodes) - 1
        return out
    if code == OP_SKIP:
        if src_channels != width:
            nodes.append(NodeSpec(name + ".proj", "conv", src_ids, channels_out=width, kernel=1))
        else:
            nodes.append(NodeSpec(name, "skip", src_ids, channels_out=width))
        return len(nodes) - 1
    raise AssemblyError(f"unsupported op code {code} for edge {name}")


def assemble_descriptor(
    cell: CellMatrix, cfg: AssemblyConfig, in_channels: int = 3
) -> tuple[NodeSpec, ...]:
    """Flatten (cell, config) into the node list consumed by the net engine.

    Layout: input, stem conv, then ``depth`` cell copies with reduction
    convs at the configured indices, then the optional head.  The flattening
    is deterministic: edges are emitted in (target, source) order.
    """
    assert_valid_cell(cell)
    n = cell.n_nodes
    nodes: list[NodeSpec] = [NodeSpec("input", "input")]
    width = cfg.stem_channels
    nodes.append(NodeSpec("stem", "conv", (0,), channels_out=width, kernel=3, padding=1, scored=True))
    current: tuple[int, ...] = (len(nodes) - 1,)

    for k in range(cfg.depth):
        if k in cfg.reductions:
            nodes.append(
                NodeSpec(
                    f"reduce{k}", "conv", current,
                    channels_out=2 * width, kernel=3, stride=2, padding=1, scored=True,
                )
            )
            width = 2 * width
            current = (len(nodes) - 1,)
        entry_channels = width
        cell_width = cfg.cell_channels if cfg.cell_channels is not None else width
        sources: dict[int, tuple[int, ...]] = {0: current}
        for j in range(1, n):
            ids = []
            for i in range(j):
                code = int(cell.codes[i, j])
                if code == OP_NONE:
                    continue
                src_channels = entry_channels if i == 0 else cell_width
                name = f"cell{k}.n{i}-n{j}.{OP_NAMES[code]}"
                ids.append(_edge_nodes(nodes, sources[i], src_channels, cell_width, code, name))
            if ids:
                sources[j] = tuple(ids)
        current = sources[n - 1]
        width = cell_width

    if cfg.head:
        nodes.append(NodeSpec("head.pool", "global-pool", current, channels_out=width))
        nodes.append(NodeSpec("head.linear", "dense", (len(nodes) - 1,), units=cfg.head_units))
    return tuple(nodes)


def trace_channels(nodes: tuple[NodeSpec, ...], in_channels: int) -> list[int]:
    """Channel count of each node's output, independent of spatial dims."""
    channels: list[int] = []
    for node in nodes:
        if node.kind == "input":
            channels.append(in_channels)
            continue
        ins = {channels[i] for i in node.inputs}
        if len(ins) != 1:
            raise AssemblyError(f"node {node.name} sums inputs of differing widths {sorted(ins)}")
        c = ins.pop()
        if node.kind == "conv":
            channels.append(node.channels_out)
        elif node.kind in ("avg-pool", "skip", "global-pool"):
            channels.append(c)
        elif node.kind == "dense":
            channels.append(node.units)
        else:
            raise AssemblyError(f"unknown node kind {node.kind!r} at {node.name}")
    return channels


def trace_shapes(
    nodes: tuple[NodeSpec, ...], input_dims: tuple[int, int, int]
) -> list[tuple[int, int, int]]:
    """Propagate (channels, width, height) through the graph.

    Windowed layers use output size floor((d + 2*padding - kernel)/stride) + 1
    per spatial axis and reject kernels larger than the padded map.
    """
    c0, w0, h0 = (int(d) for d in input_dims)
    if min(c0, w0, h0) < 1:
        raise ShapeError(f"input dims must be positive, got {input_dims}")
    shapes: list[tuple[int, int, int]] = []
    for node in nodes:
        if node.kind == "input":
            shapes.append((c0, w0, h0))
            continue
        ins = {shapes[i] for i in node.inputs}
        if len(ins) != 1:
            raise AssemblyError(f"node {node.name} sums inputs of differing shapes {sorted(ins)}")
        c, w, h = ins.pop()
        if node.kind in ("conv", "avg-pool"):
            k, t, p = node.kernel, node.stride, node.padding
            wp, hp = w + 2 * p, h + 2 * p
            if k > wp or k > hp:
                raise ShapeError(
                    f"kernel {k} exceeds the padded {wp}x{hp} feature map at {node.name}"
                )
            out_w = (wp - k) // t + 1
            out_h = (hp - k) // t + 1
            out_c = node.channels_out if node.kind == "conv" else c
            shapes.append((out_c, out_w, out_h))
        elif node.kind == "skip":
            shapes.append((c, w, h))
        elif node.kind == "global-pool":
            shapes.append((c, 1, 1))
        elif node.kind == "dense":
            if (w, h) != (1, 1):
                raise ShapeError(f"dense layer {node.name} expects 1x1 spatial input, got {w}x{h}")
            shapes.append((node.units, 1, 1))
        else:
            raise AssemblyError(f"unknown node kind {node.kind!r} at {node.name}")
    return shapes


def count_parameters(
    cell: CellMatrix,
    cfg: AssemblyConfig,
    in_channels: int = 3,
    include_bias: bool = False,
) -> int:
    """Total weight count of the assembled network.

    Biases are excluded by default because initialisation zeroes them; the
    toggle changes the total by well under a percent on realistic stacks.
    """
    nodes = assemble_descriptor(cell, cfg, in_channels)
    channels = trace_channels(nodes, in_channels)
    total = 0
    for node in nodes:
        if node.kind == "conv":
            c_in = channels[node.inputs[0]]
            total += node.channels_out * c_in * node.kernel * node.kernel
            if include_bias:
                total += node.channels_out
        elif node.kind == "dense":
            c_in = channels[node.inputs[0]]
            total += node.units * c_in
            if include_bias:
                total += node.units
    return total


def params_to_megabytes(param_count: int, bytes_per_param: float = 4.0) -> float:
    """Model size in MB at the given storage width (float32 by default)."""
    return param_count * bytes_per_param / 2**20


def count_flops(
    cell: CellMatrix,
    cfg: AssemblyConfig,
    input_dims: tuple[int, int, int],
) -> int:
    """Multiply-accumulate count: per weighted layer, params times output area."""
    nodes = assemble_descriptor(cell, cfg, input_dims[0])
    channels = trace_channels(nodes, input_dims[0])
    shapes = trace_shapes(nodes, input_dims)
    total = 0
    for idx, node in enumerate(nodes):
        if node.kind == "conv":
            c_in = channels[node.inputs[0]]
            _, out_w, out_h = shapes[idx]
            total += node.channels_out * c_in * node.kernel * node.kernel * out_w * out_h
        elif node.kind == "dense":
            total += node.units * channels[node.inputs[0]]
    return total


@dataclass(frozen=True)
class BaselineMetrics:
    """Size and compute baselines used alongside the activation metrics."""

    param_count: int
    size_mb: float
    flops: int


def baseline_metrics(
    cell: CellMatrix,
    cfg: AssemblyConfig,
    input_dims: tuple[int, int, int],
    bytes_per_param: float = 4.0,
) -> BaselineMetrics:
    params = count_parameters(cell, cfg, input_dims[0])
    return BaselineMetrics(
        param_count=params,
        size_mb=params_to_megabytes(params, bytes_per_param),
        flops=count_flops(cell, cfg, input_dims),
    )
