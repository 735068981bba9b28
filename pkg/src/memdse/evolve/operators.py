"""Variation operators: single-point crossover, mutation, ROG and SDT."""

from __future__ import annotations

from collections import defaultdict
from typing import Callable, Sequence

import numpy as np

from .genome import CODONS, INTEGER, PERMUTATION, Genome, Individual, random_like

ONE_RO = "1-RO"
TWO_RO = "2-RO"

PACKING = "packing"
JUDGMENT_DAY = "judgment"


def _repair_permutation(child: list[int], other: Sequence[int]) -> list[int]:
    # keep the first occurrence of every gene; later duplicates take the
    # missing genes in the order they appear in `other`
    present = set()
    dup_positions = []
    for i, g in enumerate(child):
        if g in present:
            dup_positions.append(i)
        else:
            present.add(g)
    missing = [g for g in other if g not in present]
    for pos, g in zip(dup_positions, missing):
        child[pos] = g
    return child


def single_point_crossover(a: Genome, b: Genome, rng: np.random.Generator,
                           cut: int | None = None) -> tuple[Genome, Genome]:
    """Swap suffixes after a cut drawn uniformly from ``[1, len-1]``.

    Permutation children are repaired so they stay bijections.
    """
    if a.kind != b.kind or len(a) != len(b):
        raise ValueError("crossover needs parents of the same variant and length")
    n = len(a)
    if n < 2:
        return a, b
    k = int(rng.integers(1, n)) if cut is None else cut
    ca = list(a.values[:k]) + list(b.values[k:])
    cb = list(b.values[:k]) + list(a.values[k:])
    if a.kind == PERMUTATION:
        ca = _repair_permutation(ca, b.values)
        cb = _repair_permutation(cb, a.values)
    return a.with_values(ca), b.with_values(cb)


def mutate(genome: Genome, rate: float, rng: np.random.Generator) -> Genome:
    if not 0.0 <= rate <= 1.0:
        raise ValueError("mutation rate must lie in [0, 1]")
    n = len(genome)
    hits = np.flatnonzero(rng.random(n) < rate)
    if hits.size == 0:
        return genome
    values = list(genome.values)
    if genome.kind == INTEGER:
        for i in hits:
            values[i] = int(rng.integers(0, genome.bounds[i]))
    elif genome.kind == PERMUTATION:
        for i in hits:
            j = int(rng.integers(0, n))
            values[i], values[j] = values[j], values[i]
    elif genome.kind == CODONS:
        for i in hits:
            values[i] = int(rng.integers(0, genome.bounds))
    return genome.with_values(values)


def apply_rog(a: Genome, b: Genome, rng: np.random.Generator, mode: str = ONE_RO,
              crossover: Callable = single_point_crossover) -> tuple[Genome, Genome]:
    """Random offspring generation guarding crossover of identical parents."""
    if a.values != b.values:
        return crossover(a, b, rng)
    if mode == ONE_RO:
        return random_like(a, rng), b
    if mode == TWO_RO:
        return random_like(a, rng), random_like(b, rng)
    raise ValueError(f"unknown ROG mode {mode!r}")


def apply_sdt(population: list[Individual], trigger: str,
              rng: np.random.Generator) -> tuple[list[Individual], list[int]]:
    """Social disaster: randomize part of an evaluated population.

    ``packing`` keeps the first member of every group of equal fitness and
    randomizes the rest; ``judgment`` keeps the single fittest individual.
    Invalid individuals are never kept.  Returns the new population and the
    indices that were randomized (they need re-evaluation).
    """
    keep: set[int] = set()
    if trigger == PACKING:
        seen: dict[float, int] = {}
        for i, ind in enumerate(population):
            if ind.valid and ind.fitness not in seen:
                seen[ind.fitness] = i
        keep = set(seen.values())
    elif trigger == JUDGMENT_DAY:
        valid = [i for i, ind in enumerate(population) if ind.valid]
        if valid:
            keep = {min(valid, key=lambda i: population[i].fitness)}
    else:
        raise ValueError(f"unknown SDT trigger {trigger!r}")

    out = []
    randomized = []
    for i, ind in enumerate(population):
        if i in keep:
            out.append(ind)
        else:
            out.append(Individual(random_like(ind.genome, rng)))
            randomized.append(i)
    return out, randomized


def largest_fitness_share(population: Sequence[Individual]) -> float:
    counts: dict[float, int] = defaultdict(int)
    for ind in population:
        counts[ind.fitness] += 1
    return max(counts.values()) / len(population) if population else 0.0
