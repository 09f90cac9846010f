"""Benchmark ingestion, rank correlation and the ablation harnesses.

Ground-truth accuracies arrive as CSV tables mapping architecture ids to
cell encodings and accuracies.  Everything downstream is rank-based:
Spearman correlation with average-rank tie handling, bell-parameter
sweeps, per-seed correlation reports, size histograms and the
input-dimension ablation.
"""

from __future__ import annotations

import csv
import math
import os
import tempfile
from dataclasses import dataclass, replace

import numpy as np

from .cells import AssemblyConfig, CellMatrix, count_parameters, params_to_megabytes
from .metric import (
    RegularisationParams,
    ScoreRecord,
    regularised_swap_score,
    standard_pattern_cardinality,
    swap_score,
)
from .network import build_network, forward_capture, gaussian_batch
from .scoring import derive_seed, make_batch, score_cells

TABLE_COLUMNS = ("arch_id", "cell", "accuracy")
SCORE_COLUMNS = ("arch_id", "seed", "batch", "swap", "reg_swap", "size_mb", "flops")
_BATCH_SALT = 0x5A3C6F1D


class TableError(ValueError):
    """An accuracy table or score file fails schema or value validation."""


class UndefinedCorrelationError(ValueError):
    """Rank correlation is undefined (zero rank variance)."""


class InsufficientDataError(ValueError):
    """Fewer than two matched observations."""


def atomic_write_text(path, text: str) -> None:
    """Write via a sibling temp file and rename, so readers never see partials."""
    directory = os.path.dirname(os.path.abspath(path)) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", text=True)
    try:
        with os.fdopen(fd, "w", encoding="ascii", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


@dataclass(frozen=True)
class BenchmarkEntry:
    arch_id: str
    cell: CellMatrix
    accuracy: float
    size_mb: float | None = None


@dataclass(frozen=True)
class BenchmarkTable:
    """Ground-truth accuracies for a set of architectures, in file order."""

    entries: tuple[BenchmarkEntry, ...]

    def __len__(self) -> int:
        return len(self.entries)

    def accuracy_by_id(self) -> dict[str, float]:
        return {e.arch_id: e.accuracy for e in self.entries}


def load_accuracy_table(path) -> BenchmarkTable:
    """Parse an accuracy CSV: header ``arch_id,cell,accuracy[,size_mb]``.

    The ``cell`` column holds a cell document with its lines joined by
    ``;``.  Duplicate ids, out-of-range accuracies and malformed cells are
    rejected with the offending line number; CRLF and LF files parse
    identically.
    """
    entries: list[BenchmarkEntry] = []
    seen: dict[str, int] = {}
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise TableError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        if tuple(header[:3]) != TABLE_COLUMNS or header[3:] not in ([], ["size_mb"]):
            raise TableError(
                f"{path}: line 1: expected header arch_id,cell,accuracy[,size_mb], got {','.join(header)}"
            )
        has_size = len(header) == 4
        for row in reader:
            line = reader.line_num
            if not row:
                continue
            if len(row) != len(header):
                raise TableError(f"{path}: line {line}: expected {len(header)} columns, got {len(row)}")
            arch_id = row[0].strip()
            if not arch_id:
                raise TableError(f"{path}: line {line}: empty arch_id")
            if arch_id in seen:
                raise TableError(
                    f"{path}: line {line}: duplicate arch_id {arch_id!r} (first seen on line {seen[arch_id]})"
                )
            seen[arch_id] = line
            try:
                cell = CellMatrix.decode(row[1])
            except ValueError as exc:
                raise TableError(f"{path}: line {line}: bad cell encoding: {exc}") from None
            try:
                accuracy = float(row[2])
            except ValueError:
                raise TableError(f"{path}: line {line}: non-numeric accuracy {row[2]!r}") from None
            if not (math.isfinite(accuracy) and 0.0 <= accuracy <= 1.0):
                raise TableError(f"{path}: line {line}: accuracy {accuracy} outside [0, 1]")
            size_mb = None
            if has_size and row[3].strip():
                try:
                    size_mb = float(row[3])
                except ValueError:
                    raise TableError(f"{path}: line {line}: non-numeric size_mb {row[3]!r}") from None
            entries.append(BenchmarkEntry(arch_id, cell, accuracy, size_mb))
    return BenchmarkTable(tuple(entries))


def write_accuracy_table(path, table: BenchmarkTable) -> None:
    lines = [",".join(TABLE_COLUMNS) + (",size_mb" if any(e.size_mb is not None for e in table.entries) else "")]
    has_size = lines[0].endswith("size_mb")
    for e in table.entries:
        cell_text = e.cell.encode().strip().replace("\n", ";")
        row = f"{e.arch_id},{cell_text},{float(e.accuracy)!r}"
        if has_size:
            row += "," + ("" if e.size_mb is None else repr(float(e.size_mb)))
        lines.append(row)
    atomic_write_text(path, "\n".join(lines) + "\n")


def write_score_records(path, records) -> None:
    lines = [",".join(SCORE_COLUMNS)]
    for r in records:
        lines.append(
            f"{r.arch_id},{r.seed},{r.batch},{r.swap},{float(r.reg_swap)!r},"
            f"{float(r.size_mb)!r},{r.flops}"
        )
    atomic_write_text(path, "\n".join(lines) + "\n")


def read_score_records(path) -> list[ScoreRecord]:
    records: list[ScoreRecord] = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise TableError(f"{path}: empty file") from None
        if tuple(h.strip() for h in header) != SCORE_COLUMNS:
            raise TableError(f"{path}: line 1: expected header {','.join(SCORE_COLUMNS)}")
        for row in reader:
            if not row:
                continue
            line = reader.line_num
            if len(row) != len(SCORE_COLUMNS):
                raise TableError(f"{path}: line {line}: expected {len(SCORE_COLUMNS)} columns")
            try:
                records.append(
                    ScoreRecord(
                        arch_id=row[0],
                        seed=int(row[1]),
                        batch=row[2],
                        swap=int(row[3]),
                        reg_swap=float(row[4]),
                        size_mb=float(row[5]),
                        flops=int(row[6]),
                    )
                )
            except ValueError as exc:
                raise TableError(f"{path}: line {line}: {exc}") from None
    return records


def rank_average(values) -> np.ndarray:
    """1-based ranks with ties replaced by the mean rank of the tied block."""
    a = np.asarray(values, dtype=np.float64).ravel()
    order = np.argsort(a, kind="mergesort")
    ranks = np.empty(a.size, dtype=np.float64)
    i = 0
    while i < a.size:
        j = i
        while j + 1 < a.size and a[order[j + 1]] == a[order[i]]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def spearman_rho(x, y) -> float:
    """Rank correlation: Pearson correlation of average-tie ranks.

    Raises :class:`UndefinedCorrelationError` when either argument has no
    rank variance (all values tied), since ranking then carries no signal.
    """
    xa = np.asarray(x, dtype=np.float64).ravel()
    ya = np.asarray(y, dtype=np.float64).ravel()
    if xa.size != ya.size:
        raise ValueError(f"length mismatch: {xa.size} vs {ya.size}")
    if xa.size < 2:
        raise ValueError("need at least two observations")
    if not (np.isfinite(xa).all() and np.isfinite(ya).all()):
        raise ValueError("inputs must be finite")
    rx = rank_average(xa) - (xa.size + 1) / 2.0
    ry = rank_average(ya) - (ya.size + 1) / 2.0
    denom = math.sqrt(float(np.sum(rx * rx)) * float(np.sum(ry * ry)))
    if denom == 0.0:
        raise UndefinedCorrelationError("zero rank variance")
    return float(np.sum(rx * ry) / denom)


def ceil_to_significant(x: float, digits: int = 2) -> float:
    """Round up at the given significant digit (1.23 -> 1.3 at two digits)."""
    if not (math.isfinite(x) and x > 0):
        raise ValueError("value must be positive and finite")
    scale = 10.0 ** (math.floor(math.log10(x)) - digits + 1)
    # The epsilon keeps exactly representable inputs (1.5, 31.0) fixed points.
    return math.ceil(x / scale - 1e-9) * scale


def estimate_mu_sigma(sizes) -> RegularisationParams:
    """Default bell parameters from a size sample: both set to the rounded-up max.

    Placing the bell centre at the top of the observed size range keeps the
    factor monotone over the sample while leaving the largest models
    essentially unpenalised, which is the recommended setting when the goal
    is top accuracy rather than a size budget.
    """
    sizes = [float(s) for s in sizes]
    if len(sizes) == 0:
        raise ValueError("empty size sample")
    if len(sizes) < 2:
        raise ValueError("need at least two sizes to estimate the distribution")
    top = ceil_to_significant(max(sizes), 2)
    return RegularisationParams(mu=top, sigma=top)


@dataclass(frozen=True)
class SweepPoint:
    """One grid entry of the bell-parameter sweep; mu=sigma=None is unregularised."""

    mu: float | None
    sigma: float | None
    rho: float | None
    n_matched: int


def _matched_pairs(records, table: BenchmarkTable):
    accuracy = table.accuracy_by_id()
    pairs = [(r, accuracy[r.arch_id]) for r in records if r.arch_id in accuracy]
    if len(pairs) < 2:
        raise InsufficientDataError(
            f"only {len(pairs)} records match the table; need at least 2"
        )
    return pairs


def _safe_rho(x, y) -> float | None:
    try:
        return spearman_rho(x, y)
    except UndefinedCorrelationError:
        return None


def mu_sigma_sweep(records, table: BenchmarkTable, grid) -> list[SweepPoint]:
    """Correlation of the regularised score with accuracy over a (mu, sigma) grid.

    The first row reports the unregularised score, mirroring the N/A rows
    of the sweep tables this feeds.
    """
    grid = [(float(m), float(s)) for m, s in grid]
    if not grid:
        raise ValueError("empty parameter grid")
    pairs = _matched_pairs(records, table)
    accs = [acc for _, acc in pairs]
    raw = [r.swap for r, _ in pairs]
    points = [SweepPoint(None, None, _safe_rho(raw, accs), len(pairs))]
    for mu, sigma in grid:
        params = RegularisationParams(mu=mu, sigma=sigma)
        scores = [regularised_swap_score(r.swap, r.size_mb, params) for r, _ in pairs]
        points.append(SweepPoint(mu, sigma, _safe_rho(scores, accs), len(pairs)))
    return points


REPORT_METRICS = ("swap", "reg_swap", "size_mb", "flops")


@dataclass(frozen=True)
class CorrelationReport:
    """Spearman correlations per metric: per seed and averaged over seeds."""

    per_seed: tuple[tuple[int, dict[str, float | None]], ...]
    mean: dict[str, float | None]
    n_matched: int


def correlation_report(records, table: BenchmarkTable) -> CorrelationReport:
    """Correlate each scored metric against ground-truth accuracy.

    Records are grouped by their evaluation seed; the headline figure per
    metric is the arithmetic mean over seed groups with at least two
    matched architectures.  Undefined correlations propagate as None.
    """
    pairs = _matched_pairs(records, table)
    by_seed: dict[int, list[tuple[ScoreRecord, float]]] = {}
    for record, acc in pairs:
        by_seed.setdefault(record.seed, []).append((record, acc))
    per_seed: list[tuple[int, dict[str, float | None]]] = []
    for seed in sorted(by_seed):
        group = by_seed[seed]
        if len(group) < 2:
            continue
        accs = [acc for _, acc in group]
        rhos: dict[str, float | None] = {}
        for metric in REPORT_METRICS:
            vals = [getattr(r, metric) for r, _ in group]
            rhos[metric] = _safe_rho(vals, accs)
        per_seed.append((seed, rhos))
    if not per_seed:
        raise InsufficientDataError("no seed group has two or more matched architectures")
    mean: dict[str, float | None] = {}
    for metric in REPORT_METRICS:
        vals = [rhos[metric] for _, rhos in per_seed if rhos[metric] is not None]
        mean[metric] = sum(vals) / len(vals) if vals else None
    return CorrelationReport(tuple(per_seed), mean, len(pairs))


def score_table(
    table: BenchmarkTable,
    assembly: AssemblyConfig,
    batch_spec: str,
    *,
    n_seeds: int = 5,
    reg: RegularisationParams | str | None = "auto",
    standardise: bool = True,
    in_channels: int = 3,
    n_workers: int = 1,
) -> list[ScoreRecord]:
    """Score a table's architectures under the multi-seed protocol.

    The entries are split into ``n_seeds`` disjoint strided groups; group k
    is scored with seed k (fresh batch, fresh weights).  ``reg="auto"``
    estimates the bell parameters once from the whole table's sizes,
    preferring the reported sizes over recomputed ones.
    """
    if n_seeds < 1:
        raise ValueError("need at least one seed")
    if reg == "auto":
        sizes = []
        for e in table.entries:
            if e.size_mb is not None:
                sizes.append(e.size_mb)
            else:
                sizes.append(
                    params_to_megabytes(count_parameters(e.cell, assembly, in_channels))
                )
        reg = estimate_mu_sigma(sizes)
    records: list[ScoreRecord] = []
    for seed in range(n_seeds):
        group = table.entries[seed::n_seeds]
        if not group:
            continue
        batch = make_batch(batch_spec, derive_seed(seed, _BATCH_SALT))
        scored = score_cells(
            [e.cell for e in group],
            assembly,
            batch,
            seed,
            reg,
            standardise=standardise,
            arch_ids=[e.arch_id for e in group],
            batch_label=batch_spec,
            n_workers=n_workers,
        )
        # score_cells stamps the derived weight seed; reports group by protocol seed
        records.extend(
            ScoreRecord(r.arch_id, r.swap, r.reg_swap, r.size_mb, r.flops, seed, r.batch)
            for r in scored
        )
    return records


@dataclass(frozen=True)
class Histogram:
    counts: tuple[int, ...]
    edges: tuple[float, ...]


def size_histogram(sizes, n_bins: int) -> Histogram:
    """Equal-width histogram over [min, max]; counts always sum to len(sizes)."""
    if n_bins < 1:
        raise ValueError("need at least one bin")
    arr = np.asarray(list(sizes), dtype=np.float64)
    if arr.size == 0:
        raise ValueError("empty size sample")
    counts, edges = np.histogram(arr, bins=n_bins)
    return Histogram(tuple(int(c) for c in counts), tuple(float(e) for e in edges))


@dataclass(frozen=True)
class AblationRow:
    """Metric statistics for one input dimensionality."""

    dims: tuple[int, int, int]
    standard_mean: float
    standard_std: float
    swap_mean: float
    swap_std: float
    reg_swap_mean: float
    reg_swap_std: float
    rho_standard: float | None = None
    rho_swap: float | None = None
    rho_reg_swap: float | None = None


def input_dim_ablation(
    cells,
    dims_list,
    batch_size: int,
    *,
    assembly: AssemblyConfig,
    seed: int = 0,
    reg: RegularisationParams | str | None = "auto",
    standardise: bool = True,
    accuracies=None,
) -> list[AblationRow]:
    """Compare pattern cardinalities across input dimensionalities.

    For every (C, W, H) in ``dims_list`` a fresh synthetic Gaussian batch
    of ``batch_size`` samples is scored against every cell; the row
    reports mean and standard deviation of the standard cardinality, the
    sample-wise score and its regularised variant, plus rank correlations
    against ``accuracies`` when given (None where undefined, e.g. under
    full saturation).
    """
    cells = list(cells)
    if not cells:
        raise ValueError("empty cell list")
    dims_list = [tuple(int(d) for d in dims) for dims in dims_list]
    if not dims_list:
        raise ValueError("empty dims list")
    if accuracies is not None:
        accuracies = [float(a) for a in accuracies]
        if len(accuracies) != len(cells):
            raise ValueError("need exactly one accuracy per cell")
    if reg == "auto":
        reg = estimate_mu_sigma(
            [params_to_megabytes(count_parameters(c, assembly, dims_list[0][0])) for c in cells]
        )
    rows: list[AblationRow] = []
    for di, dims in enumerate(dims_list):
        batch = gaussian_batch(batch_size, dims, derive_seed(seed, _BATCH_SALT + di))
        standard_vals: list[float] = []
        swap_vals: list[float] = []
        reg_vals: list[float] = []
        for cell in cells:
            net = build_network(cell, assembly, derive_seed(seed, cell.stable_hash()), dims[0])
            capture = forward_capture(net, batch, standardise=standardise)
            raw = swap_score(capture)
            standard_vals.append(float(standard_pattern_cardinality(capture)))
            swap_vals.append(float(raw))
            size_mb = params_to_megabytes(count_parameters(cell, assembly, dims[0]))
            reg_vals.append(
                regularised_swap_score(raw, size_mb, reg) if reg is not None else float(raw)
            )
        row = AblationRow(
            dims=dims,
            standard_mean=float(np.mean(standard_vals)),
            standard_std=float(np.std(standard_vals)),
            swap_mean=float(np.mean(swap_vals)),
            swap_std=float(np.std(swap_vals)),
            reg_swap_mean=float(np.mean(reg_vals)),
            reg_swap_std=float(np.std(reg_vals)),
        )
        if accuracies is not None:
            row = replace(
                row,
                rho_standard=_safe_rho(standard_vals, accuracies),
                rho_swap=_safe_rho(swap_vals, accuracies),
                rho_reg_swap=_safe_rho(reg_vals, accuracies),
            )
        rows.append(row)
    return rows


def _format_value(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_report_csv(path, rows: list[dict]) -> None:
    """Write homogeneous report rows as CSV; None becomes an empty field."""
    if not rows:
        raise ValueError("no rows to write")
    header = list(rows[0].keys())
    lines = [",".join(header)]
    for row in rows:
        if list(row.keys()) != header:
            raise ValueError("report rows must share one column set")
        lines.append(",".join(_format_value(v) for v in row.values()))
    atomic_write_text(path, "\n".join(lines) + "\n")


def write_plot_data(path, series: dict) -> None:
    """Write (series, x, y) triples for external plotting, one row per point."""
    lines = ["series,x,y"]
    for name, points in series.items():
        for x, y in points:
            lines.append(f"{name},{_format_value(float(x))},{_format_value(float(y))}")
    atomic_write_text(path, "\n".join(lines) + "\n")
