import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from memdse.evolve import (
    JUDGMENT_DAY,
    ONE_RO,
    PACKING,
    TWO_RO,
    EvolutionConfig,
    Genome,
    Grammar,
    GrammarError,
    Individual,
    Snapshot,
    apply_rog,
    apply_sdt,
    crowding_distance,
    dominates,
    enumerate_sentences,
    fast_non_dominated_sort,
    ge_decode,
    ge_run,
    mutate,
    nsga2_run,
    single_point_crossover,
)


def brute_fronts(objs):
    """O(n^3) peeling: repeatedly remove the members nobody left dominates."""
    remaining = list(range(len(objs)))
    fronts = []
    while remaining:
        front = [p for p in remaining
                 if not any(dominates(objs[q], objs[p]) for q in remaining)]
        fronts.append(sorted(front))
        remaining = [p for p in remaining if p not in front]
    return fronts


# --------------------------------------------------------------------------
# sorting and crowding


def test_sort_examples():
    assert fast_non_dominated_sort([(1, 1)]) == [[0]]
    assert fast_non_dominated_sort([(0, 1), (1, 0), (1, 1)]) == [[0, 1], [2]]


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 120), st.integers(1, 3), st.integers(0, 2**32 - 1))
def test_sort_matches_peeling_oracle(n, m, seed):
    rng = np.random.default_rng(seed)
    objs = rng.integers(0, 6, size=(n, m)).astype(float).tolist()
    assert fast_non_dominated_sort(objs) == brute_fronts(objs)


@settings(max_examples=50)
@given(st.lists(st.tuples(st.integers(0, 4), st.integers(0, 4)), min_size=1, max_size=12))
def test_dominance_is_strict_partial_order(pts):
    for a in pts:
        assert not dominates(a, a)
    for a, b, c in itertools.product(pts, repeat=3):
        if dominates(a, b) and dominates(b, c):
            assert dominates(a, c)


def test_crowding_examples():
    assert np.isinf(crowding_distance([(0, 1), (1, 0)])).all()
    d = crowding_distance([(0, 2), (1, 1), (2, 0)])
    assert np.isinf(d[0]) and np.isinf(d[2]) and d[1] == pytest.approx(2.0)
    flat = crowding_distance([(0, 5), (1, 5), (2, 5), (3, 5)])
    assert flat[1] == pytest.approx(2 / 3) and flat[2] == pytest.approx(2 / 3)


@settings(max_examples=50)
@given(st.lists(st.tuples(st.integers(0, 9), st.integers(0, 9)), min_size=1, max_size=15),
       st.randoms(use_true_random=False))
def test_crowding_order_independent(pts, rnd):
    d = crowding_distance(pts)
    perm = list(range(len(pts)))
    rnd.shuffle(perm)
    dp = crowding_distance([pts[i] for i in perm])
    assert np.array_equal(dp, d[perm])


# --------------------------------------------------------------------------
# operators


def test_crossover_examples():
    rng = np.random.default_rng(0)
    a = Genome.integer([1, 2, 3, 4], [9] * 4)
    b = Genome.integer([5, 6, 7, 8], [9] * 4)
    ca, cb = single_point_crossover(a, b, rng, cut=2)
    assert ca.values == (1, 2, 7, 8) and cb.values == (5, 6, 3, 4)
    pa, pb = Genome.permutation([0, 1, 2, 3]), Genome.permutation([3, 2, 1, 0])
    ca, cb = single_point_crossover(pa, pb, rng, cut=2)
    assert ca.values == (0, 1, 3, 2) and cb.values == (3, 2, 0, 1)
    same = single_point_crossover(a, a, rng)
    assert same[0] == a and same[1] == a


@settings(max_examples=50)
@given(st.integers(2, 12), st.integers(0, 2**32 - 1))
def test_permutation_operators_keep_bijection(n, seed):
    rng = np.random.default_rng(seed)
    a = Genome.permutation(rng.permutation(n))
    b = Genome.permutation(rng.permutation(n))
    for child in single_point_crossover(a, b, rng):
        assert sorted(child.values) == list(range(n))
    assert sorted(mutate(a, 0.5, rng).values) == list(range(n))


def test_mutation_boundaries():
    rng = np.random.default_rng(1)
    g = Genome.integer([0] * 50, [1000] * 50)
    assert mutate(g, 0.0, rng) == g
    assert sum(v != 0 for v in mutate(g, 1.0, rng).values) >= 45
    c = Genome.codons([7] * 30)
    assert all(0 <= v < 256 for v in mutate(c, 1.0, rng).values)


def test_rog_contracts():
    a = Genome.codons(list(range(20)))
    b = Genome.codons(list(range(20, 40)))
    r1, r2 = np.random.default_rng(3), np.random.default_rng(3)
    assert apply_rog(a, b, r1, ONE_RO) == single_point_crossover(a, b, r2)
    rng = np.random.default_rng(4)
    c1, c2 = apply_rog(a, a, rng, ONE_RO)
    assert [c1 == a, c2 == a].count(True) == 1
    c1, c2 = apply_rog(a, a, rng, TWO_RO)
    assert c1 != a and c2 != a


def _pop(fitnesses):
    rng = np.random.default_rng(0)
    return [Individual(Genome.codons(rng.integers(0, 256, 10)), (f,)) for f in fitnesses]


def test_sdt_packing():
    rng = np.random.default_rng(0)
    distinct = _pop([1.0, 2.0, 3.0])
    out, randomized = apply_sdt(distinct, PACKING, rng)
    assert randomized == [] and out == distinct
    pop = _pop([4.0, 1.0, 4.0, 2.0, 4.0])
    out, randomized = apply_sdt(pop, PACKING, rng)
    assert randomized == [2, 4]
    assert out[0] is pop[0] and out[1] is pop[1] and out[3] is pop[3]


def test_sdt_judgment_day():
    rng = np.random.default_rng(0)
    pop = _pop([3.0, 0.5, 2.0, 0.5, 9.0])
    out, randomized = apply_sdt(pop, JUDGMENT_DAY, rng)
    assert len(randomized) == len(pop) - 1
    assert out[1] is pop[1]


# --------------------------------------------------------------------------
# grammars and decoding


def test_decode_examples():
    g = Grammar.from_bnf("<S> ::= 'a' | 'b'")
    assert ge_decode([5], g, 0).phenotype == "b"
    unit = Grammar.from_bnf("<S> ::= 'a'")
    d = ge_decode([], unit, 0)
    assert d.valid and d.phenotype == "a" and d.codons_used == 0
    rec = Grammar.from_bnf("<S> ::= <S> <S> | 'a'")
    d = ge_decode([0, 0], rec, 3)
    assert not d.valid and d.wraps == 3


def test_decode_wraps_reuse_codons():
    g = Grammar.from_bnf("<S> ::= <A> <A> <A>\n<A> ::= 'x' | 'y'")
    d = ge_decode([1], g, 2)
    assert d.valid and d.phenotype == "yyy" and d.wraps == 2
    assert not ge_decode([1], g, 1).valid
    assert not ge_decode([], g, 5).valid


@given(st.lists(st.integers(0, 255), max_size=30), st.integers(0, 4))
def test_decode_deterministic(codons, wraps):
    g = Grammar.from_bnf("<e> ::= <e> '+' <e> | <v>\n<v> ::= 'x' | 'y' | '1'")
    assert ge_decode(codons, g, wraps) == ge_decode(codons, g, wraps)


def test_grammar_round_trip_and_errors():
    text = "<a> ::= <b> 'x' | \"y'z\"\n<b> ::= 'p'\n   | 'q'\n"
    g = Grammar.from_bnf(text)
    assert g.rules["b"] == (((False, "p"),), ((False, "q"),))
    assert Grammar.from_bnf(g.to_bnf()) == g
    assert sorted(enumerate_sentences(g)) == ["px", "qx", "y'z"]
    with pytest.raises(GrammarError):
        Grammar.from_bnf("<a> ::= <missing>")


# --------------------------------------------------------------------------
# NSGA-II


class LineProblem:
    """minimize (x, 1 - x) for x in {0, 0.5, 1}."""

    def random_genome(self, rng):
        return Genome.integer([int(rng.integers(0, 3))], [3])

    def evaluate(self, genome):
        x = genome.values[0] / 2
        return x, 1 - x


class Zdt1Problem:
    bounds = [32] * 6

    def random_genome(self, rng):
        return Genome.integer([int(rng.integers(0, b)) for b in self.bounds], self.bounds)

    def evaluate(self, genome):
        x = [v / 31 for v in genome.values]
        g = 1 + 9 * sum(x[1:]) / (len(x) - 1)
        return x[0], g * (1 - math.sqrt(x[0] / g))


class Flaky(Zdt1Problem):
    def evaluate(self, genome):
        if genome.values[0] == 0:
            raise RuntimeError("boom")
        return super().evaluate(genome)


def test_nsga2_small_space_full_front():
    cfg = EvolutionConfig(generations=5, population_size=6, seed=1)
    front = nsga2_run(LineProblem(), cfg)
    assert sorted(front.objectives()) == [(0.0, 1.0), (0.5, 0.5), (1.0, 0.0)]
    assert front.evaluations == 6 * 6


def test_nsga2_deterministic_and_map_independent():
    cfg = EvolutionConfig(generations=8, population_size=12, seed=9)
    a = nsga2_run(Zdt1Problem(), cfg)
    b = nsga2_run(Zdt1Problem(), cfg, map_fn=lambda f, xs: [f(x) for x in reversed(list(xs))][::-1])
    assert [m.genome for m in a.members] == [m.genome for m in b.members]
    one = nsga2_run(LineProblem(), EvolutionConfig(generations=1, population_size=4, seed=2))
    assert one.objectives() == nsga2_run(LineProblem(), EvolutionConfig(generations=1, population_size=4,
                                                                         seed=2)).objectives()


def test_nsga2_elitism_and_internal_nondominance():
    fronts = []

    def record(gen, pop, snap):
        f0 = [ind.objectives for ind in pop if ind.rank == 0]
        assert not any(dominates(a, b) for a in f0 for b in f0)
        fronts.append(f0)

    nsga2_run(Zdt1Problem(), EvolutionConfig(generations=15, population_size=20, seed=4),
              on_generation=record)
    for prev, cur in zip(fronts, fronts[1:]):
        for p in prev:
            assert not any(dominates(p, c) for c in cur) or any(dominates(c, p) or c == p for c in cur)
            assert any(c == p or dominates(c, p) for c in cur)


def test_nsga2_failures_marked_invalid():
    front = nsga2_run(Flaky(), EvolutionConfig(generations=5, population_size=16, seed=0))
    assert all(m.valid and m.genome.values[0] != 0 for m in front.members)


def test_nsga2_resume_matches_uninterrupted():
    cfg = EvolutionConfig(generations=10, population_size=10, seed=5)
    full = nsga2_run(Zdt1Problem(), cfg)
    half = nsga2_run(Zdt1Problem(), cfg, stop_after=4)
    snap = Snapshot.from_json(half.snapshot.to_json())
    resumed = nsga2_run(Zdt1Problem(), cfg, resume=snap)
    assert [m.genome for m in resumed.members] == [m.genome for m in full.members]


def test_config_validation():
    with pytest.raises(ValueError):
        EvolutionConfig(crossover_rate=1.5)
    with pytest.raises(ValueError):
        EvolutionConfig(population_size=0)
    with pytest.raises(ValueError):
        EvolutionConfig(max_wraps=-1)


# --------------------------------------------------------------------------
# GE


TARGET_GRAMMAR = Grammar.from_bnf("<n> ::= <d> <d> <d>\n<d> ::= '0' | '1' | '2' | '3' | '4' | '5' | '6' | '7'")


def test_ge_finds_target_and_is_elitist():
    target = 357

    def fitness(p):
        return abs(int(p) - target)

    cfg = EvolutionConfig(generations=60, population_size=30, crossover_rate=0.8, mutation_rate=0.05, seed=3)
    res = ge_run(fitness, TARGET_GRAMMAR, cfg, codon_length=12)
    bests = [h.best for h in res.history]
    assert all(b2 <= b1 for b1, b2 in zip(bests, bests[1:]))
    assert res.fitness == 0 and res.phenotype == "357"
    again = ge_run(fitness, TARGET_GRAMMAR, cfg, codon_length=12)
    assert again.phenotype == res.phenotype and again.history == res.history


def test_ge_sdt_fires_and_keeps_incumbent():
    cfg = EvolutionConfig(generations=40, population_size=20, seed=1, judgment_patience=5)
    res = ge_run(lambda p: 1.0, TARGET_GRAMMAR, cfg, codon_length=6)
    fired = {h.sdt for h in res.history}
    assert PACKING in fired
    assert all(h.best == 1.0 for h in res.history)


def test_ge_invalid_phenotypes_are_infinite():
    g = Grammar.from_bnf("<S> ::= <S> <S> | 'a'")
    res = ge_run(lambda p: float(len(p)), g, EvolutionConfig(generations=3, population_size=10, seed=0),
                 codon_length=4)
    assert res.fitness >= 1 or res.fitness == math.inf


def test_ge_resume():
    cfg = EvolutionConfig(generations=12, population_size=10, seed=8)
    f = lambda p: abs(int(p) - 123)  # noqa: E731
    full = ge_run(f, TARGET_GRAMMAR, cfg, codon_length=9)
    part = ge_run(f, TARGET_GRAMMAR, cfg, codon_length=9, stop_after=5)
    rest = ge_run(f, TARGET_GRAMMAR, cfg, codon_length=9, resume=Snapshot.from_json(part.snapshot.to_json()))
    assert rest.best.genome == full.best.genome
    assert full.history[-1] == rest.history[-1]
