"""Evolutionary cell search driven by the regularised activation score.

Each cycle samples a tournament from the population, takes the best
sampled individual (or, with the configured probability, the better child
of a crossover between the best and second best), generates a fixed
number of mutants from it, adds the best-scoring mutant to the population
and removes the worst individual.  Removal is elitist, so the best score
in the population never decreases.  All randomness flows through one
seeded generator and every candidate's weights are seeded from the global
seed XOR its cell digest, which makes whole runs reproducible and
individual scores recomputable.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .cells import (
    AssemblyConfig,
    CellMatrix,
    count_parameters,
    params_to_megabytes,
    random_cell,
    validate_cell,
)
from .evaluation import atomic_write_text, estimate_mu_sigma
from .metric import RegularisationParams
from .scoring import derive_seed, make_batch, score_cell

CHECKPOINT_MAGIC = "SWAPCKPT 1"
_BATCH_SALT = 0x5A3C6F1D


class NoEdgeError(ValueError):
    """The cell has no connection to mutate."""


class SaturationError(ValueError):
    """No legal connectivity change exists for this cell."""


def mutate_operation(cell: CellMatrix, rng) -> CellMatrix:
    """Replace one connection's op code with a different uniformly drawn one."""
    rng = np.random.default_rng(rng)
    edges = cell.edges()
    if not edges:
        raise NoEdgeError("cell has no connection to mutate")
    i, j, code = edges[rng.integers(len(edges))]
    choices = [c for c in (1, 2, 3, 4) if c != code]
    return cell.replace(i, j, int(choices[rng.integers(len(choices))]))


def mutate_connectivity(cell: CellMatrix, rng) -> CellMatrix:
    """Move one connection to an empty slot, keeping its op code.

    Candidate (edge, slot) moves are tried in random order until one yields
    a valid cell, so the connection count is always preserved.  If no move
    is legal the cell's wiring is saturated and an error is raised.
    """
    rng = np.random.default_rng(rng)
    edges = cell.edges()
    if not edges:
        raise NoEdgeError("cell has no connection to mutate")
    n = cell.n_nodes
    holes = [
        (i, j)
        for i in range(n)
        for j in range(i + 1, n)
        if cell.codes[i, j] == 0
    ]
    if not holes:
        raise SaturationError("cell has no empty slot to move a connection into")
    moves = [(e, h) for e in range(len(edges)) for h in range(len(holes))]
    for mi in rng.permutation(len(moves)):
        (ei, hi) = moves[mi]
        i, j, code = edges[ei]
        ti, tj = holes[hi]
        moved = cell.replace(i, j, 0).replace(ti, tj, code)
        if not validate_cell(moved):
            return moved
    raise SaturationError("every connection move breaks the cell invariants")


def crossover(a: CellMatrix, b: CellMatrix, rng) -> tuple[CellMatrix, CellMatrix]:
    """Exchange all incoming connections of one randomly chosen node.

    Target columns are tried in random order until the exchange leaves both
    children valid; identical parents therefore reproduce themselves.  If
    every exchange breaks an invariant the parents are returned unchanged.
    """
    if a.n_nodes != b.n_nodes:
        raise ValueError(f"node-count mismatch: {a.n_nodes} vs {b.n_nodes}")
    rng = np.random.default_rng(rng)
    n = a.n_nodes
    for j in rng.permutation(np.arange(1, n)):
        ca = a.codes.copy()
        cb = b.codes.copy()
        ca[:j, j], cb[:j, j] = b.codes[:j, j].copy(), a.codes[:j, j].copy()
        child_a, child_b = CellMatrix(ca), CellMatrix(cb)
        if not validate_cell(child_a) and not validate_cell(child_b):
            return child_a, child_b
    return a, b


@dataclass(frozen=True)
class SearchConfig:
    """Evolution hyperparameters plus the scoring context shared by all candidates.

    ``tournament`` defaults to half the population (rounded up).  ``reg``
    accepts explicit parameters, "auto" (estimated from the sizes of the
    initial population) or None (raw score, no size bias correction).
    """

    population: int = 16
    cycles: int = 100
    tournament: int | None = None
    mutation_times: int = 8
    crossover_prob: float = 0.5
    reg: RegularisationParams | str | None = "auto"
    seed: int = 0
    batch: str = "gauss:32x3x32x32"
    nodes: int = 4
    assembly: AssemblyConfig = field(default_factory=AssemblyConfig)
    standardise: bool = True

    def __post_init__(self) -> None:
        if self.population < 2:
            raise ValueError("population must be at least 2")
        if self.cycles < 0:
            raise ValueError("cycles must be non-negative")
        if self.mutation_times < 1:
            raise ValueError("mutation_times must be at least 1")
        if not 0.0 <= self.crossover_prob <= 1.0:
            raise ValueError("crossover_prob must lie in [0, 1]")
        if self.tournament is not None and not (1 <= self.tournament <= self.population):
            raise ValueError("tournament size must lie in [1, population]")
        if isinstance(self.reg, str) and self.reg != "auto":
            raise ValueError('reg must be RegularisationParams, "auto" or None')
        if self.nodes < 2:
            raise ValueError("cells need at least two nodes")

    @property
    def tournament_size(self) -> int:
        if self.tournament is not None:
            return self.tournament
        return (self.population + 1) // 2


@dataclass(frozen=True)
class Individual:
    """A scored population member; ``birth`` orders insertions for tie-breaks."""

    cell: CellMatrix
    score: float
    swap: int
    size_mb: float
    seed: int
    birth: int


@dataclass(frozen=True)
class SearchResult:
    best: Individual
    trace: tuple[float, ...]
    evaluations: int
    reg: RegularisationParams | None


def batch_for_config(cfg: SearchConfig):
    """The one input batch shared by every evaluation of a run."""
    return make_batch(cfg.batch, derive_seed(cfg.seed, _BATCH_SALT))


class _SearchState:
    """Mutable run state; checkpointable between cycles."""

    def __init__(self, cfg: SearchConfig):
        self.cfg = cfg
        self.rng = np.random.default_rng(cfg.seed)
        self.population: list[Individual] = []
        self.trace: list[float] = []
        self.cycle = 0
        self.evaluations = 0
        self.next_birth = 0
        self.reg: RegularisationParams | None = None
        self.batch = batch_for_config(cfg)

    def initialise(self) -> None:
        cells = [random_cell(self.cfg.nodes, self.rng) for _ in range(self.cfg.population)]
        if self.cfg.reg == "auto":
            sizes = [
                params_to_megabytes(
                    count_parameters(c, self.cfg.assembly, self.batch.channels)
                )
                for c in cells
            ]
            self.reg = estimate_mu_sigma(sizes)
        elif isinstance(self.cfg.reg, RegularisationParams):
            self.reg = self.cfg.reg
        for cell in cells:
            self.population.append(self.evaluate(cell))
        self.trace.append(self.best().score)

    def evaluate(self, cell: CellMatrix) -> Individual:
        record = score_cell(
            cell,
            self.cfg.assembly,
            self.batch,
            derive_seed(self.cfg.seed, cell.stable_hash()),
            self.reg,
            standardise=self.cfg.standardise,
            batch_label=self.cfg.batch,
        )
        self.evaluations += 1
        birth = self.next_birth
        self.next_birth += 1
        return Individual(cell, record.reg_swap, record.swap, record.size_mb, record.seed, birth)

    def best(self) -> Individual:
        return max(self.population, key=lambda ind: (ind.score, -ind.birth))

    def _mutate(self, parent: CellMatrix) -> CellMatrix:
        # Uniform coin between the two mutation kinds; fall back to the op
        # mutation when no connectivity move is legal.
        if self.rng.random() < 0.5:
            return mutate_operation(parent, self.rng)
        try:
            return mutate_connectivity(parent, self.rng)
        except SaturationError:
            return mutate_operation(parent, self.rng)

    def run_cycle(self) -> None:
        cfg = self.cfg
        sample_size = min(cfg.tournament_size, len(self.population))
        idx = self.rng.choice(len(self.population), size=sample_size, replace=False)
        candidates = sorted(
            (self.population[i] for i in idx),
            key=lambda ind: (-ind.score, ind.cell.encode()),
        )
        parent = candidates[0].cell
        if len(candidates) >= 2 and self.rng.random() < cfg.crossover_prob:
            child_a, child_b = crossover(candidates[0].cell, candidates[1].cell, self.rng)
            ind_a = self.evaluate(child_a)
            ind_b = self.evaluate(child_b)
            winner = min((ind_a, ind_b), key=lambda ind: (-ind.score, ind.cell.encode()))
            parent = winner.cell
        children = [self.evaluate(self._mutate(parent)) for _ in range(cfg.mutation_times)]
        best_child = min(children, key=lambda ind: (-ind.score, ind.cell.encode()))
        self.population.append(best_child)
        worst = min(self.population, key=lambda ind: (ind.score, ind.birth))
        self.population.remove(worst)
        self.cycle += 1
        self.trace.append(self.best().score)

    def result(self) -> SearchResult:
        return SearchResult(self.best(), tuple(self.trace), self.evaluations, self.reg)


def _config_to_dict(cfg: SearchConfig) -> dict:
    if isinstance(cfg.reg, RegularisationParams):
        reg = {"mu": cfg.reg.mu, "sigma": cfg.reg.sigma}
    else:
        reg = cfg.reg
    asm = cfg.assembly
    return {
        "population": cfg.population,
        "cycles": cfg.cycles,
        "tournament": cfg.tournament,
        "mutation_times": cfg.mutation_times,
        "crossover_prob": cfg.crossover_prob,
        "reg": reg,
        "seed": cfg.seed,
        "batch": cfg.batch,
        "nodes": cfg.nodes,
        "assembly": {
            "depth": asm.depth,
            "stem_channels": asm.stem_channels,
            "reductions": list(asm.reductions),
            "cell_channels": asm.cell_channels,
            "head": asm.head,
            "head_units": asm.head_units,
        },
        "standardise": cfg.standardise,
    }


def _config_from_dict(data: dict) -> SearchConfig:
    reg = data["reg"]
    if isinstance(reg, dict):
        reg = RegularisationParams(mu=reg["mu"], sigma=reg["sigma"])
    asm = data["assembly"]
    return SearchConfig(
        population=data["population"],
        cycles=data["cycles"],
        tournament=data["tournament"],
        mutation_times=data["mutation_times"],
        crossover_prob=data["crossover_prob"],
        reg=reg,
        seed=data["seed"],
        batch=data["batch"],
        nodes=data["nodes"],
        assembly=AssemblyConfig(
            depth=asm["depth"],
            stem_channels=asm["stem_channels"],
            reductions=tuple(asm["reductions"]),
            cell_channels=asm["cell_channels"],
            head=asm["head"],
            head_units=asm["head_units"],
        ),
        standardise=data["standardise"],
    )


def save_checkpoint(path, state: _SearchState) -> None:
    """Versioned structured-text snapshot enabling an exact resume."""
    body = {
        "config": _config_to_dict(state.cfg),
        "cycle": state.cycle,
        "evaluations": state.evaluations,
        "next_birth": state.next_birth,
        "trace": state.trace,
        "reg": None if state.reg is None else {"mu": state.reg.mu, "sigma": state.reg.sigma},
        "population": [
            {
                "cell": ind.cell.encode().strip().replace("\n", ";"),
                "score": ind.score,
                "swap": ind.swap,
                "size_mb": ind.size_mb,
                "seed": ind.seed,
                "birth": ind.birth,
            }
            for ind in state.population
        ],
        "rng_state": state.rng.bit_generator.state,
    }
    atomic_write_text(path, CHECKPOINT_MAGIC + "\n" + json.dumps(body, sort_keys=True) + "\n")


def load_checkpoint(path) -> _SearchState:
    with open(path, "r", encoding="ascii") as fh:
        magic = fh.readline().rstrip("\n")
        if magic != CHECKPOINT_MAGIC:
            raise ValueError(f"not a {CHECKPOINT_MAGIC} checkpoint: {magic!r}")
        body = json.loads(fh.read())
    state = _SearchState(_config_from_dict(body["config"]))
    state.cycle = body["cycle"]
    state.evaluations = body["evaluations"]
    state.next_birth = body["next_birth"]
    state.trace = list(body["trace"])
    reg = body["reg"]
    state.reg = None if reg is None else RegularisationParams(mu=reg["mu"], sigma=reg["sigma"])
    state.population = [
        Individual(
            cell=CellMatrix.decode(item["cell"]),
            score=item["score"],
            swap=item["swap"],
            size_mb=item["size_mb"],
            seed=item["seed"],
            birth=item["birth"],
        )
        for item in body["population"]
    ]
    state.rng.bit_generator.state = body["rng_state"]
    return state


def _drive(state: _SearchState, checkpoint_path, checkpoint_every, on_cycle) -> SearchResult:
    while state.cycle < state.cfg.cycles:
        state.run_cycle()
        if checkpoint_path and (
            state.cycle % max(checkpoint_every, 1) == 0 or state.cycle == state.cfg.cycles
        ):
            save_checkpoint(checkpoint_path, state)
        if on_cycle is not None:
            on_cycle(state.cycle, tuple(state.population), state.best())
    return state.result()


def run_search(
    cfg: SearchConfig,
    *,
    checkpoint_path=None,
    checkpoint_every: int = 1,
    on_cycle=None,
) -> SearchResult:
    """Run the full search loop; identical config and seed give identical results."""
    state = _SearchState(cfg)
    state.initialise()
    if checkpoint_path:
        save_checkpoint(checkpoint_path, state)
    return _drive(state, checkpoint_path, checkpoint_every, on_cycle)


def resume_search(
    checkpoint_path,
    *,
    checkpoint_every: int = 1,
    on_cycle=None,
) -> SearchResult:
    """Continue a checkpointed run to its configured cycle count.

    A run interrupted and resumed produces exactly the result of the
    uninterrupted run because the generator state travels with the
    checkpoint.
    """
    state = load_checkpoint(checkpoint_path)
    return _drive(state, checkpoint_path, checkpoint_every, on_cycle)
