"""Turn (cell, batch, seed) triples into score records.

Batch descriptors are short strings: ``gauss:SxCxWxH`` draws a seeded
standard-normal batch, anything else is read as a raw tensor file path.
Per-candidate weight seeds are derived by XOR-ing the global seed with a
stable salt (the cell digest, or an explicit candidate id), so scoring
many candidates in parallel gives the same records in any schedule.
"""

from __future__ import annotations

import re
from concurrent.futures import ThreadPoolExecutor

from .cells import AssemblyConfig, CellMatrix, count_flops, count_parameters, params_to_megabytes
from .metric import RegularisationParams, ScoreRecord, regularised_swap_score, swap_score
from .network import InputBatch, build_network, forward_capture, gaussian_batch, read_tensor_file

_GAUSS_RE = re.compile(r"^gauss:(\d+)x(\d+)x(\d+)x(\d+)$")
_SEED_MASK = (1 << 64) - 1


def derive_seed(global_seed: int, salt: int) -> int:
    """Per-candidate seed: global seed XOR salt, folded to 64 bits."""
    return (int(global_seed) ^ int(salt)) & _SEED_MASK


def parse_batch_spec(spec: str) -> tuple[str, tuple[int, ...] | str]:
    """Split a batch descriptor into ('gauss', (S, C, W, H)) or ('file', path)."""
    m = _GAUSS_RE.match(spec)
    if m:
        s, c, w, h = (int(g) for g in m.groups())
        if min(s, c, w, h) < 1:
            raise ValueError(f"batch spec dims must be positive: {spec!r}")
        return "gauss", (s, c, w, h)
    if spec.startswith("gauss:"):
        raise ValueError(f"malformed synthetic batch spec {spec!r}, expected gauss:SxCxWxH")
    return "file", spec


def make_batch(spec: str, seed: int) -> InputBatch:
    """Materialise a batch descriptor; the seed only matters for synthetic specs."""
    kind, detail = parse_batch_spec(spec)
    if kind == "gauss":
        s, c, w, h = detail
        return gaussian_batch(s, (c, w, h), seed)
    return read_tensor_file(detail)


def score_cell(
    cell: CellMatrix,
    assembly: AssemblyConfig,
    batch: InputBatch,
    weight_seed: int,
    reg: RegularisationParams | None = None,
    *,
    standardise: bool = True,
    arch_id: str = "",
    batch_label: str = "",
) -> ScoreRecord:
    """Score one architecture on one batch.

    Without regularisation parameters the regularised score equals the raw
    one (neutral factor), mirroring the no-regularisation rows of the
    sweep reports.
    """
    net = build_network(cell, assembly, weight_seed, in_channels=batch.channels)
    capture = forward_capture(net, batch, standardise=standardise)
    raw = swap_score(capture)
    params = count_parameters(cell, assembly, in_channels=batch.channels)
    size_mb = params_to_megabytes(params)
    if reg is None:
        reg_swap = float(raw)
    else:
        reg_swap = regularised_swap_score(raw, size_mb, reg)
    return ScoreRecord(
        arch_id=arch_id,
        swap=raw,
        reg_swap=reg_swap,
        size_mb=size_mb,
        flops=count_flops(cell, assembly, batch.dims),
        seed=weight_seed,
        batch=batch_label,
    )


def score_cells(
    cells,
    assembly: AssemblyConfig,
    batch: InputBatch,
    global_seed: int,
    reg: RegularisationParams | None = None,
    *,
    standardise: bool = True,
    arch_ids=None,
    batch_label: str = "",
    n_workers: int = 1,
) -> list[ScoreRecord]:
    """Score many candidates; results do not depend on worker scheduling."""
    cells = list(cells)
    if arch_ids is None:
        arch_ids = [""] * len(cells)
    arch_ids = list(arch_ids)
    if len(arch_ids) != len(cells):
        raise ValueError("need exactly one arch id per cell")

    def job(pair):
        cell, arch_id = pair
        return score_cell(
            cell,
            assembly,
            batch,
            derive_seed(global_seed, cell.stable_hash()),
            reg,
            standardise=standardise,
            arch_id=arch_id,
            batch_label=batch_label,
        )

    work = list(zip(cells, arch_ids))
    if n_workers <= 1 or len(work) <= 1:
        return [job(pair) for pair in work]
    with ThreadPoolExecutor(max_workers=n_workers) as pool:
        return list(pool.map(job, work))
