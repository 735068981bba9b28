"""Grammatical evolution with social-disaster and random-offspring countermeasures."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import partial
from typing import Callable

import numpy as np

from .genome import Genome, Individual, random_like
from .grammar import Grammar, ge_decode
from .nsga2 import EvolutionConfig, Snapshot
from .operators import (
    JUDGMENT_DAY,
    PACKING,
    apply_rog,
    apply_sdt,
    largest_fitness_share,
    mutate,
    single_point_crossover,
)

INF = math.inf


@dataclass
class GenerationRecord:
    generation: int
    best: float
    mean_valid: float
    valid: int
    sdt: str  # "", "packing" or "judgment"


@dataclass
class GeResult:
    best: Individual
    history: list[GenerationRecord] = field(default_factory=list)
    evaluations: int = 0
    snapshot: Snapshot | None = None

    @property
    def phenotype(self) -> str | None:
        return self.best.phenotype

    @property
    def fitness(self) -> float:
        return self.best.fitness


def _safe_fitness(fitness_fn: Callable[[str], float], phenotype: str) -> float:
    try:
        value = float(fitness_fn(phenotype))
    except Exception:  # noqa: BLE001 - a failing phenotype is just infeasible
        return INF
    return INF if math.isnan(value) else value


class _Evaluator:
    def __init__(self, grammar: Grammar, fitness_fn, max_wraps: int, map_fn):
        self.grammar = grammar
        self.fitness_fn = fitness_fn
        self.max_wraps = max_wraps
        self.map_fn = map_fn
        self.count = 0

    def __call__(self, individuals: list[Individual]) -> None:
        todo = [ind for ind in individuals if ind.objectives is None]
        phenos = []
        for ind in todo:
            d = ge_decode(ind.genome.values, self.grammar, self.max_wraps)
            ind.valid = d.valid
            ind.phenotype = d.phenotype
            if d.valid:
                phenos.append(d.phenotype)
        values = iter(list(self.map_fn(partial(_safe_fitness, self.fitness_fn), phenos)))
        for ind in todo:
            f = next(values) if ind.valid else INF
            if not math.isfinite(f):
                ind.valid = False
            ind.objectives = (f,)
        self.count += len(todo)


def _tournament(pop: list[Individual], k: int, rng: np.random.Generator) -> Individual:
    picks = rng.integers(0, len(pop), size=k)
    best = pop[int(picks[0])]
    for i in picks[1:]:
        cand = pop[int(i)]
        if cand.fitness < best.fitness:
            best = cand
    return best


def ge_run(fitness_fn: Callable[[str], float], grammar: Grammar, config: EvolutionConfig, *,
           codon_length: int = 200, codon_max: int = 256, map_fn: Callable = map,
           resume: Snapshot | None = None, stop_after: int | None = None,
           on_generation: Callable[[int, list[Individual]], None] | None = None) -> GeResult:
    """Minimize ``fitness_fn(phenotype)`` over sentences of ``grammar``.

    Generational replacement with one elite; binary (``tournament_size``)
    tournament; single-point crossover guarded by ROG; per-codon mutation.
    SDT fires Judgment day after ``judgment_patience`` generations without
    improvement, otherwise Packing whenever more than ``packing_share`` of
    the population shares one fitness value.
    """
    evaluate = _Evaluator(grammar, fitness_fn, config.max_wraps, map_fn)
    template = Genome.codons([0] * codon_length, codon_max)
    n = config.population_size
    rate = 0.02 if config.mutation_rate is None else config.mutation_rate
    use_packing = config.sdt_policy in ("packing", "both")
    use_judgment = config.sdt_policy in ("judgment", "both")

    if resume is None:
        rng = np.random.default_rng(config.seed)
        pop = [Individual(random_like(template, rng)) for _ in range(n)]
        start, stagnant = 0, 0
    else:
        rng, pop = resume.restore()
        for ind in pop:
            ind.objectives = None
        start, stagnant = resume.generation, int(resume.extra.get("stagnant", 0))
    evaluate(pop)
    best = min(pop, key=lambda ind: ind.fitness)
    history: list[GenerationRecord] = []
    if resume is None:
        history.append(_record(0, best, pop, ""))

    last = config.generations if stop_after is None else min(stop_after, config.generations)
    gen = start
    for gen in range(start + 1, last + 1):
        children: list[Individual] = []
        while len(children) < n - 1:
            pa = _tournament(pop, config.tournament_size, rng).genome
            pb = _tournament(pop, config.tournament_size, rng).genome
            if rng.random() < config.crossover_rate:
                if config.rog_policy == "none":
                    ca, cb = single_point_crossover(pa, pb, rng)
                else:
                    ca, cb = apply_rog(pa, pb, rng, config.rog_policy)
            else:
                ca, cb = pa, pb
            children.append(Individual(mutate(ca, rate, rng)))
            children.append(Individual(mutate(cb, rate, rng)))
        pop = [best] + children[: n - 1]
        evaluate(pop)

        gen_best = min(pop, key=lambda ind: ind.fitness)
        if gen_best.fitness < best.fitness:
            best, stagnant = gen_best, 0
        else:
            stagnant += 1

        fired = ""
        if use_judgment and stagnant >= config.judgment_patience:
            fired, stagnant = JUDGMENT_DAY, 0
        elif use_packing and largest_fitness_share(pop) > config.packing_share:
            fired = PACKING
        if fired:
            # the incumbent sits at index 0 and survives both operators
            pop, _ = apply_sdt(pop, fired, rng)
            evaluate(pop)
            gen_best = min(pop, key=lambda ind: ind.fitness)
            if gen_best.fitness < best.fitness:
                best = gen_best
        history.append(_record(gen, best, pop, fired))
        if on_generation is not None:
            on_generation(gen, pop)

    snap = Snapshot.capture(gen, config.seed, rng, pop)
    snap.extra["stagnant"] = stagnant
    return GeResult(best, history, evaluate.count, snap)


def _record(gen: int, best: Individual, pop: list[Individual], fired: str) -> GenerationRecord:
    valid = [ind.fitness for ind in pop if ind.valid]
    mean = float(np.mean(valid)) if valid else INF
    return GenerationRecord(gen, best.fitness, mean, len(valid), fired)
