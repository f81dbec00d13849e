"""Aging evolution over the cell space.

The population is a FIFO queue of fixed capacity: every cycle one child
(mutated from a tournament-selected parent) joins on the right and the
oldest individual falls off the left, regardless of fitness. The final
answer is the best individual ever seen in the history, not the best
survivor.
"""

from __future__ import annotations

import random
from collections import deque
from dataclasses import dataclass, field

from . import cellspace
from .cellspace import ModelSpec, SpaceLimits
from .errors import ConfigError, ExhaustedError
from .oracle import SimClock
from .traces import SearchTrace


@dataclass(frozen=True)
class Individual:
    spec: ModelSpec
    fitness: float
    eval_mode: str  # ORACLE or PREDICTOR
    birth_index: int
    clock_s: float  # simulated clock reading right after evaluation

    def key(self) -> tuple:
        # Ties in fitness go to the younger individual, biasing search
        # toward recent genomes.
        return (self.fitness, self.birth_index)


@dataclass(frozen=True)
class EvolutionConfig:
    limits: SpaceLimits = field(default_factory=SpaceLimits)
    population_size: int = 50
    sample_size: int = 10
    cycles: int = 2000
    seed: int = 0

    def __post_init__(self):
        if not 1 <= self.sample_size <= self.population_size:
            raise ConfigError(
                f"sample_size {self.sample_size} must be in [1, population_size]"
            )
        if self.cycles < self.population_size:
            raise ConfigError("cycles must be at least population_size")


def _evaluate(spec: ModelSpec, fitness, clock: SimClock, birth_index: int) -> Individual:
    value = fitness.evaluate(spec, clock)
    return Individual(spec, value, fitness.mode, birth_index, clock.elapsed_s)


def init_population(cfg: EvolutionConfig, fitness, clock: SimClock, rng: random.Random):
    """Fill the queue with random architectures, evaluating each."""
    population: deque[Individual] = deque()
    history: list[Individual] = []
    while len(population) < cfg.population_size:
        spec = cellspace.random_spec(rng, cfg.limits)
        ind = _evaluate(spec, fitness, clock, birth_index=len(history))
        population.append(ind)
        history.append(ind)
    return population, history


def tournament_select(population, sample_size: int, rng: random.Random) -> Individual:
    """Best of `sample_size` members drawn uniformly with replacement."""
    members = list(population)
    best = None
    for _ in range(sample_size):
        candidate = members[rng.randrange(len(members))]
        if best is None or candidate.key() > best.key():
            best = candidate
    return best


def evolve_cycle(population, history, cfg: EvolutionConfig, fitness, clock, rng) -> None:
    """One aging-evolution step: select, mutate, evaluate, age out."""
    parent = tournament_select(population, cfg.sample_size, rng)
    try:
        child_spec = cellspace.mutate(parent.spec, rng, cfg.limits)
    except ExhaustedError as exc:
        parent_hash = cellspace.canonical_hash(cellspace.prune(parent.spec))
        raise ExhaustedError(
            f"mutation stuck at cycle {len(history)} (parent {parent_hash}): {exc}"
        ) from exc
    child = _evaluate(child_spec, fitness, clock, birth_index=len(history))
    population.append(child)
    history.append(child)
    population.popleft()


def run_evolution(cfg: EvolutionConfig, fitness, clock: SimClock):
    """Initialize, evolve until the history holds `cycles` individuals, and
    return (best-ever individual, trace, history).

    The trace gets one row after initialization (index 0) and one per cycle;
    the true-accuracy column is filled in oracle mode, where fitness IS the
    measured accuracy, and left unknown in predictor mode.
    """
    rng = random.Random(cfg.seed)
    population, history = init_population(cfg, fitness, clock, rng)
    best = max(history, key=Individual.key)
    trace = SearchTrace()
    true_known = fitness.mode == "ORACLE"

    def record(index: int) -> None:
        trace.append(
            index,
            clock.elapsed_s,
            best.fitness if true_known else None,
            best.fitness,
        )

    record(0)
    for cycle in range(1, cfg.cycles - cfg.population_size + 1):
        evolve_cycle(population, history, cfg, fitness, clock, rng)
        if history[-1].key() > best.key():
            best = history[-1]
        record(cycle)
    return best, trace, history


def history_lines(history) -> list[str]:
    """Line-delimited export of a run's full evaluation history."""
    import json

    return [
        json.dumps(
            {
                "cycle": ind.birth_index,
                "spec": ind.spec.to_json_obj(),
                "fitness": ind.fitness,
                "eval_mode": ind.eval_mode,
                "clock_s": ind.clock_s,
            },
            sort_keys=True,
        )
        for ind in history
    ]
