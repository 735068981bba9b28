"""NSGA-II (fast nondominated sorting, crowding distance, elitist selection)."""

from __future__ import annotations

import functools
import json
import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Iterable, Protocol, Sequence

import numpy as np

from .genome import Genome, Individual
from .operators import mutate as default_mutate
from .operators import single_point_crossover

log = logging.getLogger(__name__)

INF = math.inf


@dataclass
class EvolutionConfig:
    generations: int = 250
    population_size: int = 100
    crossover_rate: float = 0.9
    mutation_rate: float | None = None  # None: 1 / chromosome length
    tournament_size: int = 2
    max_wraps: int = 3
    seed: int = 0
    sdt_policy: str = "both"  # "none" | "packing" | "judgment" | "both"
    rog_policy: str = "1-RO"  # "none" | "1-RO" | "2-RO"
    packing_share: float = 0.5
    judgment_patience: int = 25

    def __post_init__(self):
        if self.generations <= 0 or self.population_size <= 0:
            raise ValueError("generations and population_size must be positive")
        if not 0.0 <= self.crossover_rate <= 1.0:
            raise ValueError("crossover_rate must lie in [0, 1]")
        if self.mutation_rate is not None and not 0.0 <= self.mutation_rate <= 1.0:
            raise ValueError("mutation_rate must lie in [0, 1]")
        if self.max_wraps < 0 or self.tournament_size < 1:
            raise ValueError("max_wraps must be >= 0 and tournament_size >= 1")

    def updated(self, **overrides) -> "EvolutionConfig":
        data = asdict(self)
        data.update({k: v for k, v in overrides.items() if v is not None})
        return EvolutionConfig(**data)


class Problem(Protocol):
    def random_genome(self, rng: np.random.Generator) -> Genome: ...

    def evaluate(self, genome: Genome) -> Sequence[float]: ...


# --------------------------------------------------------------------------
# dominance, sorting, crowding


def dominates(a: Sequence[float], b: Sequence[float]) -> bool:
    """Strict Pareto dominance for minimization."""
    better = False
    for x, y in zip(a, b):
        if x > y:
            return False
        if x < y:
            better = True
    return better


def _dominance_matrix(objs: np.ndarray) -> np.ndarray:
    le = (objs[:, None, :] <= objs[None, :, :]).all(axis=2)
    lt = (objs[:, None, :] < objs[None, :, :]).any(axis=2)
    return le & lt  # [p, q]: p dominates q


def fast_non_dominated_sort(objectives: Sequence[Sequence[float]]) -> list[list[int]]:
    """Deb's fast nondominated sort; fronts are lists of indices, ascending."""
    objs = np.asarray(objectives, dtype=float)
    n = len(objs)
    if n == 0:
        return []
    dom = _dominance_matrix(objs.reshape(n, -1))
    dominated_by_count = dom.sum(axis=0)
    dominated_sets = [np.flatnonzero(row) for row in dom]
    fronts = []
    current = [int(i) for i in np.flatnonzero(dominated_by_count == 0)]
    while current:
        fronts.append(current)
        nxt = []
        for p in current:
            for q in dominated_sets[p]:
                dominated_by_count[q] -= 1
                if dominated_by_count[q] == 0:
                    nxt.append(int(q))
        current = sorted(nxt)
    return fronts


def crowding_distance(objectives: Sequence[Sequence[float]]) -> np.ndarray:
    """Crowding distance of every member of one front.

    Identical objective vectors share one distance, which makes the result
    independent of the input order.  An objective whose values are all equal
    contributes nothing (and marks no boundary).
    """
    objs = np.asarray(objectives, dtype=float)
    n = len(objs)
    if n == 0:
        raise ValueError("crowding distance of an empty front")
    objs = objs.reshape(n, -1)
    uniq, inverse = np.unique(objs, axis=0, return_inverse=True)
    inverse = np.asarray(inverse).reshape(-1)
    m = len(uniq)
    dist = np.zeros(m)
    for k in range(uniq.shape[1]):
        col = uniq[:, k]
        lo, hi = col.min(), col.max()
        with np.errstate(invalid="ignore"):  # inf - inf on invalid members
            span = hi - lo
        if span == 0 or not np.isfinite(span):
            continue
        # lexicographic tie-break on the full vector keeps the order canonical
        order = np.lexsort(tuple(uniq[:, j] for j in reversed(range(uniq.shape[1]))) + (col,))
        dist[order[0]] = INF
        dist[order[-1]] = INF
        for pos in range(1, m - 1):
            i = order[pos]
            if dist[i] != INF:
                dist[i] += (col[order[pos + 1]] - col[order[pos - 1]]) / span
    if m <= 2 and uniq.shape[1] > 0:
        dist[:] = INF
    return dist[inverse]


def _assign_rank_and_crowding(pop: list[Individual]) -> None:
    fronts = fast_non_dominated_sort([ind.objectives for ind in pop])
    for r, front in enumerate(fronts):
        cd = crowding_distance([pop[i].objectives for i in front])
        for i, d in zip(front, cd):
            pop[i].rank = r
            pop[i].crowding = float(d)


def _environmental_selection(combined: list[Individual], n: int) -> list[Individual]:
    # individuals repeating an objective vector already present are only
    # used to fill slots left over once all distinct vectors are placed
    seen: set[tuple] = set()
    unique, duplicates = [], []
    for ind in combined:
        key = tuple(ind.objectives)
        if key in seen:
            duplicates.append(ind)
        else:
            seen.add(key)
            unique.append(ind)

    chosen: list[Individual] = []
    fronts = fast_non_dominated_sort([ind.objectives for ind in unique])
    for front in fronts:
        if len(chosen) + len(front) <= n:
            chosen.extend(unique[i] for i in front)
            continue
        cd = crowding_distance([unique[i].objectives for i in front])
        order = sorted(range(len(front)), key=lambda j: (-cd[j], front[j]))
        chosen.extend(unique[front[j]] for j in order[: n - len(chosen)])
        break
    if len(chosen) < n:
        chosen.extend(duplicates[: n - len(chosen)])
    return chosen


# --------------------------------------------------------------------------
# evaluation plumbing


def _safe_evaluate(problem, genome: Genome):
    try:
        objs = tuple(float(v) for v in problem.evaluate(genome))
        if any(math.isnan(v) for v in objs):
            raise ValueError("NaN objective")
        return objs, True
    except Exception as exc:  # noqa: BLE001 - evaluation failures mark the individual invalid
        log.debug("evaluation failed for %s: %s", genome.values, exc)
        return None, False


def evaluate_population(problem, individuals: list[Individual], n_objectives: int | None,
                        map_fn: Callable = map) -> int:
    todo = [ind for ind in individuals if ind.objectives is None]
    results = list(map_fn(functools.partial(_safe_evaluate, problem), [ind.genome for ind in todo]))
    for ind, (objs, ok) in zip(todo, results):
        if ok:
            ind.objectives, ind.valid = objs, True
        else:
            ind.valid = False
            ind.objectives = None
    width = n_objectives or next((len(i.objectives) for i in individuals if i.objectives), 1)
    for ind in todo:
        if not ind.valid:
            ind.objectives = (INF,) * width
    return len(todo)


# --------------------------------------------------------------------------
# snapshots


@dataclass
class Snapshot:
    generation: int
    seed: int
    rng_state: dict
    population: list[dict] = field(default_factory=list)
    extra: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "Snapshot":
        return cls(**json.loads(text))

    @classmethod
    def capture(cls, generation: int, seed: int, rng: np.random.Generator,
                pop: Iterable[Individual]) -> "Snapshot":
        members = []
        for ind in pop:
            members.append({
                "genome": ind.genome.to_json(),
                "objectives": [v if math.isfinite(v) else None for v in ind.objectives],
                "valid": ind.valid,
            })
        return cls(generation, seed, rng.bit_generator.state, members)

    def restore(self) -> tuple[np.random.Generator, list[Individual]]:
        rng = np.random.default_rng(self.seed)
        rng.bit_generator.state = self.rng_state
        pop = []
        for m in self.population:
            objs = tuple(INF if v is None else float(v) for v in m["objectives"])
            pop.append(Individual(Genome.from_json(m["genome"]), objs, valid=m["valid"]))
        return rng, pop


# --------------------------------------------------------------------------
# main loop


@dataclass
class ParetoFront:
    members: list[Individual]
    evaluations: int = 0
    generations: int = 0
    snapshot: Snapshot | None = None

    def __len__(self) -> int:
        return len(self.members)

    def __iter__(self):
        return iter(self.members)

    def objectives(self) -> list[tuple[float, ...]]:
        return [m.objectives for m in self.members]


def _crowded_tournament(pop: list[Individual], rng: np.random.Generator) -> Individual:
    i, j = (int(x) for x in rng.integers(0, len(pop), size=2))
    a, b = pop[i], pop[j]
    if a.rank != b.rank:
        return a if a.rank < b.rank else b
    if a.crowding != b.crowding:
        return a if a.crowding > b.crowding else b
    return a


def _front_zero(pop: list[Individual]) -> list[Individual]:
    fronts = fast_non_dominated_sort([ind.objectives for ind in pop])
    members, seen = [], set()
    for i in fronts[0] if fronts else []:
        key = tuple(pop[i].objectives)
        if key not in seen and pop[i].valid:
            seen.add(key)
            members.append(pop[i])
    return members


def nsga2_run(problem, config: EvolutionConfig, *, map_fn: Callable = map,
              resume: Snapshot | None = None, stop_after: int | None = None,
              on_generation: Callable[[int, list[Individual], Snapshot | None], None] | None = None,
              snapshot_every: int = 0) -> ParetoFront:
    """Run NSGA-II and return the nondominated members of the final population.

    ``problem`` provides ``random_genome(rng)`` and ``evaluate(genome)``;
    optional ``crossover(a, b, rng)`` and ``mutate(genome, rate, rng)``
    methods override the default operators.  Evaluation never touches the
    evolution RNG, so results do not depend on ``map_fn``.

    ``stop_after`` halts after that many generations (counting from the
    start of the run) so a snapshot can be resumed later.
    """
    crossover = getattr(problem, "crossover", single_point_crossover)
    mutate = getattr(problem, "mutate", default_mutate)
    n = config.population_size
    evaluations = 0

    if resume is None:
        rng = np.random.default_rng(config.seed)
        pop = [Individual(problem.random_genome(rng)) for _ in range(n)]
        evaluations += evaluate_population(problem, pop, None, map_fn)
        start = 0
    else:
        rng, pop = resume.restore()
        start = resume.generation
    n_obj = len(pop[0].objectives)
    _assign_rank_and_crowding(pop)
    rate = config.mutation_rate
    if rate is None:
        rate = 1.0 / max(1, len(pop[0].genome))

    last = config.generations if stop_after is None else min(stop_after, config.generations)
    gen = start
    for gen in range(start + 1, last + 1):
        offspring: list[Individual] = []
        while len(offspring) < n:
            pa = _crowded_tournament(pop, rng).genome
            pb = _crowded_tournament(pop, rng).genome
            if rng.random() < config.crossover_rate:
                ca, cb = crossover(pa, pb, rng)
            else:
                ca, cb = pa, pb
            offspring.append(Individual(mutate(ca, rate, rng)))
            offspring.append(Individual(mutate(cb, rate, rng)))
        offspring = offspring[:n]
        evaluations += evaluate_population(problem, offspring, n_obj, map_fn)
        pop = _environmental_selection(pop + offspring, n)
        _assign_rank_and_crowding(pop)
        snap = None
        if snapshot_every and gen % snapshot_every == 0 or gen == last:
            snap = Snapshot.capture(gen, config.seed, rng, pop)
        if on_generation is not None:
            on_generation(gen, pop, snap)

    return ParetoFront(_front_zero(pop), evaluations, gen,
                       Snapshot.capture(gen, config.seed, rng, pop))
