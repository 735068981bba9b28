"""Evolutionary engines: NSGA-II and grammatical evolution."""

from .ge import GeResult, GenerationRecord, ge_run
from .genome import CODONS, INTEGER, PERMUTATION, Genome, Individual, random_like
from .grammar import Derivation, Grammar, GrammarError, enumerate_sentences, ge_decode
from .nsga2 import (
    EvolutionConfig,
    ParetoFront,
    Snapshot,
    crowding_distance,
    dominates,
    evaluate_population,
    fast_non_dominated_sort,
    nsga2_run,
)
from .operators import (
    JUDGMENT_DAY,
    ONE_RO,
    PACKING,
    TWO_RO,
    apply_rog,
    apply_sdt,
    mutate,
    single_point_crossover,
)

__all__ = [
    "CODONS", "INTEGER", "PERMUTATION", "JUDGMENT_DAY", "PACKING", "ONE_RO", "TWO_RO",
    "Derivation", "EvolutionConfig", "GeResult", "GenerationRecord", "Genome", "Grammar",
    "GrammarError", "Individual", "ParetoFront", "Snapshot",
    "apply_rog", "apply_sdt", "crowding_distance", "dominates", "enumerate_sentences",
    "evaluate_population", "fast_non_dominated_sort", "ge_decode", "ge_run", "mutate",
    "nsga2_run", "random_like", "single_point_crossover",
]
