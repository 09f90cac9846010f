"""Command-line front end binding the library into reproducible runs.

Every command takes an explicit seed and never reads wall-clock time or
environment entropy, so reruns with the same arguments produce identical
output files.  Files are written atomically.  Exit codes: 0 success,
1 validation error (bad flags, malformed or missing inputs), 2 runtime
error.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from .cells import (
    AssemblyConfig,
    AssemblyError,
    CellValidationError,
    ShapeError,
    count_flops,
    count_parameters,
    params_to_megabytes,
    random_cell,
    read_cell_file,
)
from .evaluation import (
    InsufficientDataError,
    TableError,
    atomic_write_text,
    correlation_report,
    input_dim_ablation,
    load_accuracy_table,
    mu_sigma_sweep,
    read_score_records,
    score_table,
    size_histogram,
    write_plot_data,
    write_report_csv,
    write_score_records,
)
from .evolution import SearchConfig, resume_search, run_search
from .metric import (
    ContractViolationError,
    RegularisationParams,
    ScoreRecord,
    regularised_swap_score,
    swap_score,
)
from .network import build_network, count_intermediate_values, forward_capture
from .scoring import derive_seed, make_batch

_VALIDATION_ERRORS = (
    TableError,
    CellValidationError,
    AssemblyError,
    ShapeError,
    ContractViolationError,
    InsufficientDataError,
    FileNotFoundError,
    IsADirectoryError,
    ValueError,
)


class UsageError(ValueError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # exit code 1 instead of argparse's default 2
        raise UsageError(message)


def _fmt(value) -> str:
    if value is None:
        return "NA"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _add_assembly_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--depth", type=int, default=3, help="number of stacked cell copies")
    p.add_argument("--stem-channels", type=int, default=16, help="channels after the stem conv")
    p.add_argument("--reductions", default="", help="comma-separated cell indices preceded by a stride-2 reduction")
    p.add_argument("--head", action="store_true", help="append a global-pool + linear head")
    p.add_argument("--head-units", type=int, default=10, help="output units of the head")


def _assembly_from_args(args) -> AssemblyConfig:
    reductions = tuple(int(r) for r in args.reductions.split(",") if r.strip() != "")
    return AssemblyConfig(
        depth=args.depth,
        stem_channels=args.stem_channels,
        reductions=reductions,
        head=args.head,
        head_units=args.head_units,
    )


def _add_scoring_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--batch", default="gauss:32x3x32x32", help="batch spec: gauss:SxCxWxH or a tensor file path")
    p.add_argument("--seed", type=int, default=0, help="global random seed")
    p.add_argument("--mu", type=float, default=None, help="regularisation centre (model size)")
    p.add_argument("--sigma", type=float, default=None, help="regularisation width")
    p.add_argument("--auto-reg", action="store_true", help="estimate mu and sigma from the size distribution")
    p.add_argument("--no-standardise", action="store_true", help="disable per-channel pre-activation standardisation")
    p.add_argument("--threads", type=int, default=1, help="worker cap for per-architecture scoring")


def _reg_from_args(args):
    if args.auto_reg and (args.mu is not None or args.sigma is not None):
        raise UsageError("--auto-reg conflicts with explicit --mu/--sigma")
    if (args.mu is None) != (args.sigma is None):
        raise UsageError("--mu and --sigma must be given together")
    if args.auto_reg:
        return "auto"
    if args.mu is not None:
        return RegularisationParams(mu=args.mu, sigma=args.sigma)
    return None


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="swapnas", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, metavar="command", parser_class=_Parser)

    p = sub.add_parser("score", help="score one cell on one batch")
    p.add_argument("--cell", required=True, help="cell file to score")
    p.add_argument("--out", default=None, help="also write the record as a score CSV")
    _add_scoring_flags(p)
    _add_assembly_flags(p)

    p = sub.add_parser("search", help="run the evolutionary search")
    p.add_argument("--config", required=True, help="key=value search configuration file")

    p = sub.add_parser("correlate", help="correlate scores with ground-truth accuracies")
    p.add_argument("--truth", required=True, help="accuracy table CSV")
    p.add_argument("--scores", default=None, help="precomputed score CSV; omit to score the table's cells")
    p.add_argument("--seeds", type=int, default=5, help="seed groups when scoring the table directly")
    p.add_argument("--save-scores", default=None, help="write freshly computed scores to this CSV")
    p.add_argument("--out", default=None, help="write the per-seed report as CSV")
    p.add_argument("--plot", default=None, help="write (series,x,y) plot data")
    _add_scoring_flags(p)
    _add_assembly_flags(p)

    p = sub.add_parser("sweep", help="sweep regularisation parameters on a grid")
    p.add_argument("--truth", required=True, help="accuracy table CSV")
    p.add_argument("--scores", default=None, help="precomputed score CSV; omit to score the table's cells")
    p.add_argument("--grid", required=True, help="grid points MU:SIGMA[,MU:SIGMA...]")
    p.add_argument("--seeds", type=int, default=1, help="seed groups when scoring the table directly")
    p.add_argument("--out", default=None, help="write the sweep as CSV")
    p.add_argument("--plot", default=None, help="write (series,x,y) plot data")
    _add_scoring_flags(p)
    _add_assembly_flags(p)

    p = sub.add_parser("ablate-dims", help="compare metrics across input dimensionalities")
    p.add_argument("--dims", required=True, help="input dims CxWxH[,CxWxH...]")
    p.add_argument("--cells", type=int, default=100, help="number of random cells when no table is given")
    p.add_argument("--nodes", type=int, default=4, help="cell node count for random cells")
    p.add_argument("--batch-size", type=int, default=32, help="samples per synthetic batch")
    p.add_argument("--truth", default=None, help="accuracy table; its cells replace random ones")
    p.add_argument("--out", default=None, help="write rows as CSV")
    p.add_argument("--plot", default=None, help="write (series,x,y) plot data")
    _add_scoring_flags(p)
    _add_assembly_flags(p)

    p = sub.add_parser("histogram", help="histogram of model sizes")
    p.add_argument("--truth", default=None, help="accuracy table with a size_mb column")
    p.add_argument("--scores", default=None, help="score CSV providing size_mb values")
    p.add_argument("--bins", type=int, default=10, help="number of equal-width bins")
    p.add_argument("--out", default=None, help="write bins as CSV")
    p.add_argument("--plot", default=None, help="write (series,x,y) plot data")
    return parser


def _cmd_score(args) -> int:
    cell = read_cell_file(args.cell)
    assembly = _assembly_from_args(args)
    reg = _reg_from_args(args)
    if reg == "auto":
        raise UsageError("score rates a single cell; give explicit --mu/--sigma or neither")
    batch = make_batch(args.batch, derive_seed(args.seed, 0x5A3C6F1D))
    net = build_network(cell, assembly, derive_seed(args.seed, cell.stable_hash()), batch.channels)
    capture = forward_capture(net, batch, standardise=not args.no_standardise)
    raw = swap_score(capture)
    params = count_parameters(cell, assembly, batch.channels)
    size_mb = params_to_megabytes(params)
    reg_swap = regularised_swap_score(raw, size_mb, reg) if reg is not None else float(raw)
    flops = count_flops(cell, assembly, batch.dims)
    values = count_intermediate_values(net, batch.dims)
    print(f"swap_score={raw}")
    print(f"reg_swap_score={_fmt(reg_swap)}")
    print(f"theta_mb={_fmt(size_mb)}")
    print(f"flops={flops}")
    print(f"n_values={values}")
    if args.out:
        record = ScoreRecord("cell", raw, reg_swap, size_mb, flops, args.seed, args.batch)
        write_score_records(args.out, [record])
    return 0


def _parse_config_file(path) -> dict[str, str]:
    values: dict[str, str] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise UsageError(f"{path}: line {lineno}: expected key = value")
            key, _, value = line.partition("=")
            values[key.strip()] = value.strip()
    return values


_SEARCH_KEYS = {
    "population", "cycles", "tournament", "mutation_times", "crossover_prob",
    "mu", "sigma", "reg", "seed", "batch", "nodes", "depth", "stem_channels",
    "reductions", "head", "head_units", "standardise", "out_cell", "out_trace",
    "out_summary", "checkpoint", "checkpoint_every", "resume",
}


def _search_config(values: dict[str, str]) -> tuple[SearchConfig, dict]:
    unknown = set(values) - _SEARCH_KEYS
    if unknown:
        raise UsageError(f"unknown config keys: {', '.join(sorted(unknown))}")

    def get_bool(key, default):
        v = values.get(key)
        if v is None:
            return default
        if v.lower() in ("true", "yes", "1"):
            return True
        if v.lower() in ("false", "no", "0"):
            return False
        raise UsageError(f"config key {key} must be a boolean, got {v!r}")

    reg_mode = values.get("reg", "auto").lower()
    if "mu" in values or "sigma" in values:
        if not ("mu" in values and "sigma" in values):
            raise UsageError("config must set mu and sigma together")
        reg = RegularisationParams(mu=float(values["mu"]), sigma=float(values["sigma"]))
    elif reg_mode == "auto":
        reg = "auto"
    elif reg_mode in ("none", "off"):
        reg = None
    else:
        raise UsageError(f"config key reg must be auto or none, got {values['reg']!r}")

    reductions = tuple(
        int(r) for r in values.get("reductions", "").split(",") if r.strip() != ""
    )
    cfg = SearchConfig(
        population=int(values.get("population", 16)),
        cycles=int(values.get("cycles", 100)),
        tournament=int(values["tournament"]) if "tournament" in values else None,
        mutation_times=int(values.get("mutation_times", 8)),
        crossover_prob=float(values.get("crossover_prob", 0.5)),
        reg=reg,
        seed=int(values.get("seed", 0)),
        batch=values.get("batch", "gauss:32x3x32x32"),
        nodes=int(values.get("nodes", 4)),
        assembly=AssemblyConfig(
            depth=int(values.get("depth", 3)),
            stem_channels=int(values.get("stem_channels", 16)),
            reductions=reductions,
            head=get_bool("head", False),
            head_units=int(values.get("head_units", 10)),
        ),
        standardise=get_bool("standardise", True),
    )
    outputs = {
        "out_cell": values.get("out_cell"),
        "out_trace": values.get("out_trace"),
        "out_summary": values.get("out_summary"),
        "checkpoint": values.get("checkpoint"),
        "checkpoint_every": int(values.get("checkpoint_every", 1)),
        "resume": get_bool("resume", False),
    }
    return cfg, outputs


def _cmd_search(args) -> int:
    cfg, outputs = _search_config(_parse_config_file(args.config))

    def log_cycle(cycle, population, best):
        print(f"cycle {cycle}: best={_fmt(best.score)} size_mb={_fmt(best.size_mb)}")

    checkpoint = outputs["checkpoint"]
    if outputs["resume"] and checkpoint and os.path.exists(checkpoint):
        result = resume_search(
            checkpoint, checkpoint_every=outputs["checkpoint_every"], on_cycle=log_cycle
        )
    else:
        result = run_search(
            cfg,
            checkpoint_path=checkpoint,
            checkpoint_every=outputs["checkpoint_every"],
            on_cycle=log_cycle,
        )
    print(f"best_score={_fmt(result.best.score)}")
    print(f"best_swap={result.best.swap}")
    print(f"best_size_mb={_fmt(result.best.size_mb)}")
    print(f"evaluations={result.evaluations}")
    if outputs["out_cell"]:
        atomic_write_text(outputs["out_cell"], result.best.cell.encode())
    if outputs["out_trace"]:
        rows = [{"cycle": i, "best_score": s} for i, s in enumerate(result.trace)]
        write_report_csv(outputs["out_trace"], rows)
    if outputs["out_summary"]:
        reg = result.reg
        lines = [
            f"best_score={_fmt(result.best.score)}",
            f"best_swap={result.best.swap}",
            f"best_size_mb={_fmt(result.best.size_mb)}",
            f"best_seed={result.best.seed}",
            f"evaluations={result.evaluations}",
            f"cycles={cfg.cycles}",
            f"mu={_fmt(None if reg is None else reg.mu)}",
            f"sigma={_fmt(None if reg is None else reg.sigma)}",
        ]
        atomic_write_text(outputs["out_summary"], "\n".join(lines) + "\n")
    return 0


def _records_for(args) -> list:
    if args.scores:
        return read_score_records(args.scores)
    table = load_accuracy_table(args.truth)
    records = score_table(
        table,
        _assembly_from_args(args),
        args.batch,
        n_seeds=args.seeds,
        reg=_reg_from_args(args) or "auto",
        standardise=not args.no_standardise,
        n_workers=args.threads,
    )
    if getattr(args, "save_scores", None):
        write_score_records(args.save_scores, records)
    return records


def _cmd_correlate(args) -> int:
    table = load_accuracy_table(args.truth)
    records = _records_for(args)
    report = correlation_report(records, table)
    for metric in ("swap", "reg_swap"):
        print(f"{metric}_rho={_fmt(report.mean[metric])}")
    print(f"theta_rho={_fmt(report.mean['size_mb'])}")
    print(f"flops_rho={_fmt(report.mean['flops'])}")
    print(f"n_matched={report.n_matched}")
    rows = [
        {"seed": seed, **{m: rhos[m] for m in rhos}}
        for seed, rhos in report.per_seed
    ]
    rows.append({"seed": "mean", **report.mean})
    if args.out:
        write_report_csv(args.out, rows)
    if args.plot:
        series = {
            metric: [(float(seed), rhos[metric]) for seed, rhos in report.per_seed if rhos[metric] is not None]
            for metric in report.mean
        }
        write_plot_data(args.plot, series)
    return 0


def _parse_grid(text: str) -> list[tuple[float, float]]:
    grid = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        if ":" not in part:
            raise UsageError(f"grid point {part!r} must be MU:SIGMA")
        mu, _, sigma = part.partition(":")
        grid.append((float(mu), float(sigma)))
    if not grid:
        raise UsageError("empty grid")
    return grid


def _cmd_sweep(args) -> int:
    table = load_accuracy_table(args.truth)
    records = _records_for(args)
    points = mu_sigma_sweep(records, table, _parse_grid(args.grid))
    rows = []
    for pt in points:
        print(f"mu={_fmt(pt.mu)} sigma={_fmt(pt.sigma)} rho={_fmt(pt.rho)}")
        rows.append({"mu": pt.mu, "sigma": pt.sigma, "rho": pt.rho, "n_matched": pt.n_matched})
    if args.out:
        write_report_csv(args.out, rows)
    if args.plot:
        pts = [(pt.mu, pt.rho) for pt in points if pt.mu is not None and pt.rho is not None]
        write_plot_data(args.plot, {"rho_vs_mu": pts})
    return 0


def _parse_dims(text: str) -> list[tuple[int, int, int]]:
    dims = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        bits = part.split("x")
        if len(bits) != 3:
            raise UsageError(f"dims {part!r} must be CxWxH")
        dims.append(tuple(int(b) for b in bits))
    if not dims:
        raise UsageError("empty dims list")
    return dims


def _cmd_ablate_dims(args) -> int:
    dims = _parse_dims(args.dims)
    accuracies = None
    if args.truth:
        table = load_accuracy_table(args.truth)
        cells = [e.cell for e in table.entries]
        accuracies = [e.accuracy for e in table.entries]
    else:
        rng = np.random.default_rng(args.seed)
        cells = [random_cell(args.nodes, rng) for _ in range(args.cells)]
    rows = input_dim_ablation(
        cells,
        dims,
        args.batch_size,
        assembly=_assembly_from_args(args),
        seed=args.seed,
        reg=_reg_from_args(args) or "auto",
        standardise=not args.no_standardise,
        accuracies=accuracies,
    )
    csv_rows = []
    for row in rows:
        label = "x".join(str(d) for d in row.dims)
        print(
            f"dims={label} standard={_fmt(row.standard_mean)}+-{_fmt(row.standard_std)} "
            f"swap={_fmt(row.swap_mean)}+-{_fmt(row.swap_std)} "
            f"reg_swap={_fmt(row.reg_swap_mean)}+-{_fmt(row.reg_swap_std)}"
        )
        csv_rows.append(
            {
                "dims": label,
                "standard_mean": row.standard_mean,
                "standard_std": row.standard_std,
                "swap_mean": row.swap_mean,
                "swap_std": row.swap_std,
                "reg_swap_mean": row.reg_swap_mean,
                "reg_swap_std": row.reg_swap_std,
                "rho_standard": row.rho_standard,
                "rho_swap": row.rho_swap,
                "rho_reg_swap": row.rho_reg_swap,
            }
        )
    if args.out:
        write_report_csv(args.out, csv_rows)
    if args.plot:
        xs = [float(r.dims[1] * r.dims[2]) for r in rows]
        write_plot_data(
            args.plot,
            {
                "standard_mean": list(zip(xs, [r.standard_mean for r in rows])),
                "swap_mean": list(zip(xs, [r.swap_mean for r in rows])),
                "reg_swap_mean": list(zip(xs, [r.reg_swap_mean for r in rows])),
            },
        )
    return 0


def _cmd_histogram(args) -> int:
    if bool(args.truth) == bool(args.scores):
        raise UsageError("give exactly one of --truth or --scores")
    if args.truth:
        table = load_accuracy_table(args.truth)
        sizes = [e.size_mb for e in table.entries]
        if any(s is None for s in sizes):
            raise UsageError(f"{args.truth} lacks size_mb values needed for a histogram")
    else:
        sizes = [r.size_mb for r in read_score_records(args.scores)]
    hist = size_histogram(sizes, args.bins)
    rows = []
    for i, count in enumerate(hist.counts):
        lo, hi = hist.edges[i], hist.edges[i + 1]
        print(f"bin={_fmt(lo)}:{_fmt(hi)} count={count}")
        rows.append({"bin_low": lo, "bin_high": hi, "count": count})
    if args.out:
        write_report_csv(args.out, rows)
    if args.plot:
        centres = [(hist.edges[i] + hist.edges[i + 1]) / 2.0 for i in range(len(hist.counts))]
        write_plot_data(args.plot, {"size_histogram": list(zip(centres, map(float, hist.counts)))})
    return 0


_COMMANDS = {
    "score": _cmd_score,
    "search": _cmd_search,
    "correlate": _cmd_correlate,
    "sweep": _cmd_sweep,
    "ablate-dims": _cmd_ablate_dims,
    "histogram": _cmd_histogram,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return _COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except _VALIDATION_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # runtime failures (overflow, io races, bugs)
        print(f"runtime error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
