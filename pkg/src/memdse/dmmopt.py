"""Allocation profiling, trace-specific DMM grammar and GE-driven DMM synthesis."""

from __future__ import annotations

import csv
import io
import json
import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .dmm import REFERENCE_KINDS, DmmError, DmmMetrics, DmmSpec, Replayer, build_reference
from .evolve import EvolutionConfig, GenerationRecord, Grammar, enumerate_sentences, ge_run
from .traces import AllocEvent, check_alloc_trace

TOP_SIZES = 8
QUANTILES = {"p50": 50, "p90": 90, "p99": 99}


@dataclass
class AllocProfile:
    size_histogram: dict[int, int]
    top_sizes: list[int]
    quantiles: dict[str, int]
    max_live: int
    event_count: int

    def to_json(self) -> str:
        return json.dumps({
            "size_histogram": {str(k): v for k, v in self.size_histogram.items()},
            "top_sizes": self.top_sizes, "quantiles": self.quantiles,
            "max_live": self.max_live, "event_count": self.event_count,
        }, sort_keys=True)


def profile_trace(trace: Sequence[AllocEvent], top: int = TOP_SIZES) -> AllocProfile:
    """Exact size histogram, most frequent sizes, size quantiles and peak live bytes."""
    trace = list(trace)
    check_alloc_trace(trace)
    sizes = [ev.size for ev in trace if ev.op == "alloc"]
    hist = Counter(sizes)
    ranked = sorted(hist, key=lambda s: (-hist[s], s))
    quantiles = {}
    if sizes:
        arr = np.asarray(sizes)
        quantiles = {name: int(np.percentile(arr, q, method="inverted_cdf"))
                     for name, q in QUANTILES.items()}
    live = peak = 0
    held: dict = {}
    for ev in trace:
        if ev.op == "alloc":
            held[ev.id] = ev.size
            live += ev.size
            peak = max(peak, live)
        else:
            live -= held.pop(ev.id)
    return AllocProfile(dict(sorted(hist.items())), ranked[:top], quantiles, peak, len(trace))


# --------------------------------------------------------------------------
# grammar

_HEAD = '{"header_bytes":%d,"growth_quantum":%d,"regions":['

POLICY_RULES = """\
<policy> ::= '{"kind":"SEGREGATED_EXACT","granularity":' <gran> '}'
           | '{"kind":"SEGREGATED_POW2"}'
           | '{"kind":"' <buddy> '","coalesce":' <bool> ',"split":' <bool> '}'
           | '{"kind":"FREE_LIST","fit":"' <fit> '","order":"' <order> '","coalesce":' <bool> ',"split":' <bool> '}'
<gran> ::= '1' | '8'
<buddy> ::= 'BUDDY_BINARY' | 'BUDDY_FIB'
<fit> ::= 'FIRST' | 'BEST'
<order> ::= 'FIFO' | 'LIFO' | 'ADDR'
<bool> ::= 'true' | 'false'
"""


def boundary_pool(profile: AllocProfile) -> list[int]:
    """Region boundaries: one past each top size and each quantile, deduplicated."""
    pool = {s + 1 for s in profile.top_sizes} | {q + 1 for q in profile.quantiles.values()}
    return sorted(b for b in pool if b > 1)


def generate_grammar(profile: AllocProfile, max_regions: int = 5, header_bytes: int = 8,
                     growth_quantum: int = 4096) -> Grammar:
    """BNF whose sentences are DmmSpec JSON documents.

    ``<from_i_d>`` derives the regions covering sizes from boundary ``i``
    onward when ``d`` regions are already open: either one open-ended
    region, or (while ``d < max_regions``) a bounded region up to a later
    boundary followed by the rest.  Boundaries are taken in increasing
    order, so every sentence is contiguous, disjoint and covering.
    """
    if not profile.size_histogram:
        raise DmmError("cannot build a grammar from an empty profile")
    if max_regions < 1:
        raise DmmError("max_regions must be >= 1")
    bounds = [1] + boundary_pool(profile)
    head = _HEAD % (header_bytes, growth_quantum)
    lines = [f"<dmm> ::= '{head}' <from_0_1> ']}}'"]
    for d in range(1, max_regions + 1):
        for i, lo in enumerate(bounds):
            alts = [f"""'{{"lo":{lo},"hi":null,"policy":' <policy> '}}'"""]
            if d < max_regions:
                for j in range(i + 1, len(bounds)):
                    alts.append(f"""'{{"lo":{lo},"hi":{bounds[j]},"policy":' <policy> '}},' <from_{j}_{d + 1}>""")
            lines.append(f"<from_{i}_{d}> ::= " + " | ".join(alts))
    text = "\n".join(lines) + "\n" + POLICY_RULES
    grammar = Grammar.from_bnf(text)
    return _prune(grammar)


def _prune(grammar: Grammar) -> Grammar:
    """Drop rules unreachable from the start symbol."""
    seen, stack = set(), [grammar.start]
    while stack:
        sym = stack.pop()
        if sym in seen:
            continue
        seen.add(sym)
        for alt in grammar.rules[sym]:
            stack.extend(t for nt, t in alt if nt)
    return Grammar({k: v for k, v in grammar.rules.items() if k in seen}, grammar.start)


def decode_phenotype(phenotype: str) -> DmmSpec:
    return DmmSpec.from_json(phenotype)


# --------------------------------------------------------------------------
# fitness


@dataclass(frozen=True)
class DmmFitness:
    F: float
    T: float
    M: float
    t_kng: float
    m_lea: float
    valid: bool = True


def fitness_value(T: float, M: float, t_kng: float, m_lea: float) -> float:
    if not (t_kng > 0 and m_lea > 0):
        raise DmmError("normalizers must be positive")
    return 0.5 * T / t_kng + 0.5 * M / m_lea


def dmm_fitness(spec: DmmSpec, trace, kng: DmmMetrics, lea: DmmMetrics) -> DmmFitness:
    """Equal-weight time and memory, normalized by the KNG time and LEA memory."""
    replayer = trace if isinstance(trace, Replayer) else Replayer(trace)
    t_kng, m_lea = kng.sim_time, lea.peak_memory
    try:
        m = replayer.metrics(spec)
    except DmmError:
        return DmmFitness(math.inf, math.inf, math.inf, t_kng, m_lea, False)
    return DmmFitness(fitness_value(m.sim_time, m.peak_memory, t_kng, m_lea),
                      m.sim_time, m.peak_memory, t_kng, m_lea)


class PhenotypeFitness:
    """Picklable phenotype -> F callable with a phenotype memo."""

    def __init__(self, replayer: Replayer, t_kng: float, m_lea: float):
        self.replayer = replayer
        self.t_kng = t_kng
        self.m_lea = m_lea
        self._memo: dict = {}

    def __call__(self, phenotype: str) -> float:
        f = self._memo.get(phenotype)
        if f is None:
            m = self.replayer.metrics(decode_phenotype(phenotype))
            f = self._memo[phenotype] = fitness_value(m.sim_time, m.peak_memory, self.t_kng, self.m_lea)
        return f


def default_dmm_config(**overrides) -> EvolutionConfig:
    return EvolutionConfig(generations=250, population_size=100, crossover_rate=0.8,
                           mutation_rate=0.02, tournament_size=2, max_wraps=3).updated(**overrides)


@dataclass
class ComparisonRow:
    reference: str
    F: float
    T: int
    M: int
    objective_pct: float
    performance_pct: float
    memory_pct: float


@dataclass
class DmmResult:
    spec: DmmSpec
    fitness: DmmFitness
    metrics: DmmMetrics
    comparison: list[ComparisonRow]
    history: list[GenerationRecord] = field(default_factory=list)
    evaluations: int = 0

    def comparison_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["reference", "F_ref", "T_ref", "M_ref", "objective_pct", "performance_pct", "memory_pct"])
        for r in self.comparison:
            w.writerow([r.reference, repr(r.F), r.T, r.M, repr(r.objective_pct),
                        repr(r.performance_pct), repr(r.memory_pct)])
        return buf.getvalue()

    def history_csv(self) -> str:
        return history_csv(self.history)


def history_csv(history: Sequence[GenerationRecord]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["generation", "best_fitness", "mean_valid_fitness", "valid", "sdt"])
    for h in history:
        w.writerow([h.generation, repr(h.best), repr(h.mean_valid), h.valid, h.sdt])
    return buf.getvalue()


def _pct(ref: float, value: float) -> float:
    return 100.0 * (ref - value) / ref if ref else 0.0


def reference_metrics(replayer: Replayer) -> dict[str, DmmMetrics]:
    return {k: replayer.metrics(build_reference(k)) for k in REFERENCE_KINDS}


def compare(metrics: DmmMetrics, refs: dict[str, DmmMetrics]) -> list[ComparisonRow]:
    t_kng, m_lea = refs["KNG"].sim_time, refs["LEA"].peak_memory
    f = fitness_value(metrics.sim_time, metrics.peak_memory, t_kng, m_lea)
    rows = []
    for name, m in refs.items():
        fr = fitness_value(m.sim_time, m.peak_memory, t_kng, m_lea)
        rows.append(ComparisonRow(name, fr, m.sim_time, m.peak_memory, _pct(fr, f),
                                  _pct(m.sim_time, metrics.sim_time), _pct(m.peak_memory, metrics.peak_memory)))
    return rows


def exhaustive_best(grammar: Grammar, fitness: PhenotypeFitness, limit: int = 100_000
                    ) -> tuple[float, str]:
    """Minimum fitness over every sentence of a finite grammar."""
    best = (math.inf, "")
    for sentence in enumerate_sentences(grammar, limit=limit):
        best = min(best, (fitness(sentence), sentence))
    return best


def optimize_dmm(trace: Sequence[AllocEvent], config: EvolutionConfig | None = None, *,
                 max_regions: int = 5, codon_length: int = 200, map_fn=map,
                 header_bytes: int = 8, growth_quantum: int = 4096) -> DmmResult:
    """Profile, build the grammar, then evolve a DMM minimizing the normalized cost."""
    trace = list(trace)
    config = config or default_dmm_config()
    profile = profile_trace(trace)
    if not profile.size_histogram:
        raise DmmError("trace has no allocations")
    grammar = generate_grammar(profile, max_regions, header_bytes, growth_quantum)
    replayer = Replayer(trace)
    refs = {k: replayer.metrics(build_reference(k, header_bytes, growth_quantum)) for k in REFERENCE_KINDS}
    t_kng, m_lea = refs["KNG"].sim_time, refs["LEA"].peak_memory
    fitness = PhenotypeFitness(replayer, t_kng, m_lea)
    result = ge_run(fitness, grammar, config, codon_length=codon_length, map_fn=map_fn)
    if not result.best.valid or result.phenotype is None:
        raise DmmError("grammar produced no feasible DMM")
    spec = decode_phenotype(result.phenotype)
    metrics = replayer.metrics(spec)
    fit = DmmFitness(fitness_value(metrics.sim_time, metrics.peak_memory, t_kng, m_lea),
                     metrics.sim_time, metrics.peak_memory, t_kng, m_lea)
    return DmmResult(spec, fit, metrics, compare(metrics, refs), result.history, result.evaluations)
