"""Cache design-space exploration: 11-gene genome, NSGA-II binding, improvement report."""

from __future__ import annotations

import csv
import io
import itertools
import json
import random
import threading
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .cache import (
    CacheConfig,
    CacheError,
    CacheParams,
    CacheStats,
    DramParams,
    PreparedTrace,
    Prefetch,
    Replacement,
    SideStats,
    TechnologyTable,
    WritePolicy,
    combine_sides,
    energy,
    exec_time,
    simulate_side,
)
from .evolve import EvolutionConfig, Genome, dominates, nsga2_run

KB = 1024

GENE_NAMES = ("i_size", "i_block", "i_assoc", "i_repl", "i_prefetch",
              "d_size", "d_block", "d_assoc", "d_repl", "d_prefetch", "d_write_policy")


def _pow2_ascending(values: Sequence[int]) -> bool:
    return all(v > 0 and v & (v - 1) == 0 for v in values) and list(values) == sorted(set(values))


@dataclass(frozen=True)
class DesignSpace:
    i_size: tuple = tuple(KB << k for k in range(8))
    i_block: tuple = (8, 16, 32, 64)
    i_assoc: tuple = (1, 2, 4, 8, 16)
    i_repl: tuple = (Replacement.LRU, Replacement.FIFO, Replacement.RANDOM)
    i_prefetch: tuple = (Prefetch.ON_DEMAND, Prefetch.ALWAYS)
    d_size: tuple = tuple(KB << k for k in range(8))
    d_block: tuple = (8, 16, 32, 64)
    d_assoc: tuple = (1, 2, 4, 8, 16)
    d_repl: tuple = (Replacement.LRU, Replacement.FIFO, Replacement.RANDOM)
    d_prefetch: tuple = (Prefetch.ON_DEMAND, Prefetch.ALWAYS)
    d_write_policy: tuple = (WritePolicy.COPY_BACK, WritePolicy.WRITE_THROUGH)

    def __post_init__(self):
        coerce = {"i_repl": Replacement, "d_repl": Replacement, "i_prefetch": Prefetch,
                  "d_prefetch": Prefetch, "d_write_policy": WritePolicy}
        for name in GENE_NAMES:
            vals = getattr(self, name)
            if len(vals) == 0:
                raise CacheError(f"design space list {name} is empty")
            if name in coerce:
                vals = tuple(coerce[name](v) for v in vals)
            else:
                vals = tuple(int(v) for v in vals)
                if name.endswith(("size", "block")) and not _pow2_ascending(vals):
                    raise CacheError(f"{name} must be ascending powers of two")
                if name.endswith("assoc") and (vals != tuple(sorted(set(vals))) or vals[0] < 1):
                    raise CacheError(f"{name} must be ascending and >= 1")
            object.__setattr__(self, name, vals)
        for side in ("i", "d"):
            size, block, assoc = (getattr(self, f"{side}_{k}")[0] for k in ("size", "block", "assoc"))
            if size < block * assoc:
                raise CacheError(f"smallest {side}-cache choices do not form a valid cache")

    @property
    def bounds(self) -> tuple[int, ...]:
        return tuple(len(getattr(self, n)) for n in GENE_NAMES)

    @property
    def cardinality(self) -> int:
        return int(np.prod(self.bounds))

    def genomes(self):
        """Every genome of the space, in lexicographic order."""
        for vals in itertools.product(*(range(b) for b in self.bounds)):
            yield Genome.integer(vals, self.bounds)

    def to_json(self) -> dict:
        return {n: [v.value if hasattr(v, "value") else v for v in getattr(self, n)] for n in GENE_NAMES}

    @classmethod
    def from_json(cls, d: dict) -> "DesignSpace":
        unknown = set(d) - set(GENE_NAMES)
        if unknown:
            raise CacheError(f"unknown design-space keys: {sorted(unknown)}")
        return cls(**{k: tuple(v) for k, v in d.items()})


def _repair(size: int, blocks: Sequence[int], assocs: Sequence[int], block: int, assoc: int):
    if size >= block * assoc:
        return block, assoc
    fitting = [a for a in assocs if size >= block * a]
    if fitting:
        return block, max(fitting)
    assoc = assocs[0]
    return max(b for b in blocks if size >= b * assoc), assoc


def decode_genome(genome: Genome | Sequence[int], space: DesignSpace) -> CacheConfig:
    """Map gene indices to a configuration, repairing infeasible geometry.

    When ``size < block * assoc`` the associativity drops to the largest
    listed value that fits; if none fits, the smallest associativity is
    kept and the block shrinks to the largest listed value that fits.
    """
    g = genome.values if isinstance(genome, Genome) else tuple(genome)
    if len(g) != len(GENE_NAMES):
        raise CacheError(f"cache genome needs {len(GENE_NAMES)} genes")
    for name, v, b in zip(GENE_NAMES, g, space.bounds):
        if not 0 <= v < b:
            raise CacheError(f"gene {name}={v} outside [0, {b})")
    v = [getattr(space, n)[i] for n, i in zip(GENE_NAMES, g)]
    ib, ia = _repair(v[0], space.i_block, space.i_assoc, v[1], v[2])
    db, da = _repair(v[5], space.d_block, space.d_assoc, v[6], v[7])
    return CacheConfig(CacheParams(v[0], ib, ia, v[3], v[4]),
                       CacheParams(v[5], db, da, v[8], v[9], v[10]))


def encode_config(config: CacheConfig, space: DesignSpace) -> Genome:
    i, d = config.icache, config.dcache
    values = (i.size_bytes, i.block_bytes, i.associativity, i.replacement, i.prefetch,
              d.size_bytes, d.block_bytes, d.associativity, d.replacement, d.prefetch, d.write_policy)
    try:
        idx = tuple(getattr(space, n).index(v) for n, v in zip(GENE_NAMES, values))
    except ValueError:
        raise CacheError("configuration is not in the design space") from None
    return Genome.integer(idx, space.bounds)


def _cp(size_kb, block, assoc, repl, pf, wp=None) -> CacheParams:
    return CacheParams(size_kb * KB, block, assoc, repl, pf, wp)


BASELINES: dict[str, CacheConfig] = {
    "baseline1": CacheConfig(_cp(16, 32, 4, "LRU", "ON_DEMAND"), _cp(16, 32, 4, "LRU", "ON_DEMAND", "COPY_BACK")),
    "baseline2": CacheConfig(_cp(32, 64, 4, "RANDOM", "ALWAYS"), _cp(32, 64, 4, "RANDOM", "ALWAYS", "COPY_BACK")),
    "baseline3": CacheConfig(_cp(32, 64, 2, "LRU", "ALWAYS"), _cp(32, 64, 2, "LRU", "ALWAYS", "COPY_BACK")),
}


class CacheEvaluator:
    """Pure (time, energy) evaluation with a per-side simulation memo.

    The I and D caches are simulated independently, so results are cached
    by the parameters of each side.  The memo is lock-protected and never
    changes results.
    """

    def __init__(self, trace: PreparedTrace, tech: TechnologyTable, dram: DramParams,
                 seed: int = 0, include_writebacks: bool = False):
        self.trace = trace
        self.tech = tech
        self.dram = dram
        self.seed = seed
        self.include_writebacks = include_writebacks
        self._memo: dict = {}
        self._lock = threading.Lock()

    def __getstate__(self):
        state = self.__dict__.copy()
        del state["_lock"]
        return state

    def __setstate__(self, state):
        self.__dict__.update(state)
        self._lock = threading.Lock()

    def _side(self, side: str, params: CacheParams) -> SideStats:
        key = (side, params)
        with self._lock:
            hit = self._memo.get(key)
        if hit is not None:
            return hit
        if side == "i":
            stats = simulate_side(self.trace.i_addrs, None, params, random.Random(2 * self.seed))
        else:
            stats = simulate_side(self.trace.d_addrs, self.trace.d_writes, params,
                                  random.Random(2 * self.seed + 1))
        with self._lock:
            self._memo[key] = stats
        return stats

    def stats(self, config: CacheConfig) -> CacheStats:
        return combine_sides(self._side("i", config.icache), self._side("d", config.dcache))

    def objectives(self, config: CacheConfig) -> tuple[float, float]:
        # fail before simulating if the table lacks a geometry
        self.tech.lookup(config.icache), self.tech.lookup(config.dcache)
        s = self.stats(config)
        return (exec_time(s, config, self.tech, self.dram),
                energy(s, config, self.tech, self.dram, self.include_writebacks))


def evaluate(genome, trace, tech: TechnologyTable, dram: DramParams, space: DesignSpace,
             seed: int = 0) -> tuple[float, float]:
    if not isinstance(trace, PreparedTrace):
        trace = PreparedTrace.from_refs(trace)
    return CacheEvaluator(trace, tech, dram, seed).objectives(decode_genome(genome, space))


class CacheProblem:
    def __init__(self, space: DesignSpace, evaluator: CacheEvaluator):
        self.space = space
        self.evaluator = evaluator

    def random_genome(self, rng: np.random.Generator) -> Genome:
        return Genome.integer([int(rng.integers(0, b)) for b in self.space.bounds], self.space.bounds)

    def evaluate(self, genome: Genome) -> tuple[float, float]:
        return self.evaluator.objectives(decode_genome(genome, self.space))


@dataclass
class CacheSolution:
    genome: tuple[int, ...]
    config: CacheConfig
    time_s: float
    energy_j: float

    @property
    def objectives(self) -> tuple[float, float]:
        return (self.time_s, self.energy_j)


def default_cache_config(**overrides) -> EvolutionConfig:
    return EvolutionConfig(generations=250, population_size=100, crossover_rate=0.9,
                           mutation_rate=1.0 / len(GENE_NAMES)).updated(**overrides)


def _unique_front(solutions: list[CacheSolution]) -> list[CacheSolution]:
    """Nondominated solutions, one per distinct configuration, sorted by time."""
    seen: dict = {}
    for s in sorted(solutions, key=lambda s: (s.objectives, s.genome)):
        seen.setdefault(s.config, s)
    cand = list(seen.values())
    front = [s for s in cand if not any(dominates(o.objectives, s.objectives) for o in cand)]
    return sorted(front, key=lambda s: (s.objectives, s.genome))


def optimize(trace, space: DesignSpace, tech: TechnologyTable, dram: DramParams,
             config: EvolutionConfig | None = None, *, map_fn=map,
             evaluator: CacheEvaluator | None = None) -> list[CacheSolution]:
    """NSGA-II over (execution time, energy); returns the decoded front."""
    if not isinstance(trace, PreparedTrace):
        trace = PreparedTrace.from_refs(trace)
    config = config or default_cache_config()
    evaluator = evaluator or CacheEvaluator(trace, tech, dram, config.seed)
    front = nsga2_run(CacheProblem(space, evaluator), config, map_fn=map_fn)
    sols = [CacheSolution(m.genome.values, decode_genome(m.genome, space), *m.objectives)
            for m in front.members]
    return _unique_front(sols)


def exhaustive_front(trace, space: DesignSpace, tech: TechnologyTable, dram: DramParams,
                     seed: int = 0) -> list[CacheSolution]:
    """True Pareto front by enumerating the whole space."""
    if not isinstance(trace, PreparedTrace):
        trace = PreparedTrace.from_refs(trace)
    ev = CacheEvaluator(trace, tech, dram, seed)
    sols = []
    for g in space.genomes():
        cfg = decode_genome(g, space)
        sols.append(CacheSolution(g.values, cfg, *ev.objectives(cfg)))
    return _unique_front(sols)


@dataclass
class Improvement:
    member: int
    baseline: str
    time_pct: float
    energy_pct: float


@dataclass
class ImprovementReport:
    rows: list[Improvement] = field(default_factory=list)
    averages: dict = field(default_factory=dict)  # baseline -> (time_pct, energy_pct)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["member", "baseline", "time_improvement_pct", "energy_improvement_pct"])
        for r in self.rows:
            w.writerow([r.member, r.baseline, repr(r.time_pct), repr(r.energy_pct)])
        for name, (t, e) in self.averages.items():
            w.writerow(["average", name, repr(t), repr(e)])
        return buf.getvalue()


def percent_improvement(baseline: float, value: float) -> float:
    if baseline == 0:
        raise CacheError("baseline objective is zero; improvement is undefined")
    return 100.0 * (baseline - value) / baseline


def improvement_report(front: Sequence[CacheSolution], baselines: dict[str, CacheConfig], trace,
                       tech: TechnologyTable, dram: DramParams, seed: int = 0,
                       evaluator: CacheEvaluator | None = None) -> ImprovementReport:
    """Per-member and average improvements; negative values are kept."""
    if not isinstance(trace, PreparedTrace):
        trace = PreparedTrace.from_refs(trace)
    ev = evaluator or CacheEvaluator(trace, tech, dram, seed)
    report = ImprovementReport()
    for name, cfg in baselines.items():
        bt, be = ev.objectives(cfg)
        ts, es = [], []
        for k, m in enumerate(front):
            t, e = percent_improvement(bt, m.time_s), percent_improvement(be, m.energy_j)
            report.rows.append(Improvement(k, name, t, e))
            ts.append(t)
            es.append(e)
        if ts:
            report.averages[name] = (float(np.mean(ts)), float(np.mean(es)))
    return report


def config_fields(config: CacheConfig) -> dict:
    i, d = config.icache, config.dcache
    return {
        "i_size": i.size_bytes, "i_block": i.block_bytes, "i_assoc": i.associativity,
        "i_repl": i.replacement.value, "i_prefetch": i.prefetch.value,
        "d_size": d.size_bytes, "d_block": d.block_bytes, "d_assoc": d.associativity,
        "d_repl": d.replacement.value, "d_prefetch": d.prefetch.value,
        "d_write_policy": d.write_policy.value,
    }


def load_space_config(d: dict) -> tuple[DesignSpace, dict[str, CacheConfig]]:
    """Design space and baselines from a JSON object; both keys optional."""
    space = DesignSpace.from_json(d["space"]) if "space" in d else DesignSpace()
    if "baselines" in d:
        baselines = {name: CacheConfig.from_json(c) for name, c in d["baselines"].items()}
    else:
        baselines = dict(BASELINES)
    return space, baselines


def front_json(front: Sequence[CacheSolution]) -> str:
    return json.dumps([{**config_fields(s.config), "time_s": s.time_s, "energy_j": s.energy_j}
                       for s in front], sort_keys=True)


__all__ = [
    "BASELINES", "CacheEvaluator", "CacheProblem", "CacheSolution", "DesignSpace", "GENE_NAMES",
    "Improvement", "ImprovementReport", "config_fields", "decode_genome", "default_cache_config",
    "encode_config", "evaluate", "exhaustive_front", "front_json", "improvement_report",
    "load_space_config", "optimize", "percent_improvement",
]
