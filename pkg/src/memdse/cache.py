"""Trace-driven split instruction/data cache simulator and its time/energy models."""

from __future__ import annotations

import csv
import enum
import io
import itertools
import json
import random
from collections import OrderedDict
from dataclasses import asdict, dataclass
from typing import Iterable, Sequence

from .traces import AccessKind, MemRef


class CacheError(ValueError):
    pass


class Replacement(str, enum.Enum):
    LRU = "LRU"
    FIFO = "FIFO"
    RANDOM = "RANDOM"


class Prefetch(str, enum.Enum):
    ON_DEMAND = "ON_DEMAND"
    ALWAYS = "ALWAYS"


class WritePolicy(str, enum.Enum):
    COPY_BACK = "COPY_BACK"
    WRITE_THROUGH = "WRITE_THROUGH"


def _is_pow2(v: int) -> bool:
    return v > 0 and v & (v - 1) == 0


@dataclass(frozen=True)
class CacheParams:
    size_bytes: int
    block_bytes: int
    associativity: int
    replacement: Replacement = Replacement.LRU
    prefetch: Prefetch = Prefetch.ON_DEMAND
    write_policy: WritePolicy | None = None  # data side only

    def __post_init__(self):
        object.__setattr__(self, "replacement", Replacement(self.replacement))
        object.__setattr__(self, "prefetch", Prefetch(self.prefetch))
        if self.write_policy is not None:
            object.__setattr__(self, "write_policy", WritePolicy(self.write_policy))
        if not (_is_pow2(self.size_bytes) and _is_pow2(self.block_bytes)):
            raise CacheError("cache and block sizes must be powers of two")
        if self.associativity < 1:
            raise CacheError("associativity must be >= 1")
        if self.size_bytes < self.block_bytes * self.associativity:
            raise CacheError(
                f"{self.size_bytes} B cannot hold one set of {self.associativity} x {self.block_bytes} B blocks")

    @property
    def num_sets(self) -> int:
        return self.size_bytes // (self.block_bytes * self.associativity)

    @property
    def tech_key(self) -> tuple[int, int, int]:
        return (self.size_bytes, self.associativity, self.block_bytes)

    def to_json(self) -> dict:
        d = {"size": self.size_bytes, "block": self.block_bytes, "assoc": self.associativity,
             "replacement": self.replacement.value, "prefetch": self.prefetch.value}
        if self.write_policy is not None:
            d["write_policy"] = self.write_policy.value
        return d

    @classmethod
    def from_json(cls, d: dict) -> "CacheParams":
        return cls(int(d["size"]), int(d["block"]), int(d["assoc"]),
                   d.get("replacement", "LRU"), d.get("prefetch", "ON_DEMAND"),
                   d.get("write_policy"))


@dataclass(frozen=True)
class CacheConfig:
    icache: CacheParams
    dcache: CacheParams

    def __post_init__(self):
        if self.dcache.write_policy is None:
            object.__setattr__(self, "dcache",
                               CacheParams(**{**asdict(self.dcache), "write_policy": WritePolicy.COPY_BACK}))

    def to_json(self) -> dict:
        return {"icache": self.icache.to_json(), "dcache": self.dcache.to_json()}

    @classmethod
    def from_json(cls, d: dict) -> "CacheConfig":
        return cls(CacheParams.from_json(d["icache"]), CacheParams.from_json(d["dcache"]))


@dataclass
class CacheStats:
    i_access: int = 0
    i_miss: int = 0
    d_access: int = 0
    d_miss: int = 0
    prefetch_fetches: int = 0
    writebacks: int = 0
    writethroughs: int = 0

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    def scaled(self, k: int) -> "CacheStats":
        return CacheStats(**{f: v * k for f, v in asdict(self).items()})


@dataclass(frozen=True)
class SideStats:
    access: int
    miss: int
    prefetch_fetches: int
    writebacks: int
    writethroughs: int


@dataclass(frozen=True)
class PreparedTrace:
    """A memory trace split into instruction and data streams."""

    i_addrs: tuple[int, ...]
    d_addrs: tuple[int, ...]
    d_writes: tuple[bool, ...]

    @classmethod
    def from_refs(cls, refs: Iterable[MemRef]) -> "PreparedTrace":
        ia, da, dw = [], [], []
        for r in refs:
            if r.kind == AccessKind.INSTR_FETCH:
                ia.append(r.address)
            else:
                da.append(r.address)
                dw.append(r.kind == AccessKind.DATA_WRITE)
        return cls(tuple(ia), tuple(da), tuple(dw))


def simulate_side(addrs: Sequence[int], writes: Sequence[bool] | None, params: CacheParams,
                  rng: random.Random) -> SideStats:
    """Simulate one cache over an address stream.

    Misses allocate (write misses included).  Copy-back marks written
    blocks dirty and counts a writeback when a dirty block is evicted;
    write-through counts one writethrough per write.  With ``ALWAYS``
    prefetch every demand access also brings in the next sequential block
    if it is absent; that traffic is not counted as demand access or miss.
    """
    nsets = params.num_sets
    assoc = params.associativity
    shift = params.block_bytes.bit_length() - 1
    lru = params.replacement == Replacement.LRU
    randomized = params.replacement == Replacement.RANDOM
    prefetch = params.prefetch == Prefetch.ALWAYS
    copy_back = params.write_policy != WritePolicy.WRITE_THROUGH

    # LRU/FIFO: OrderedDict block -> dirty, oldest first.
    # RANDOM: per-set way list plus block -> dirty map.
    sets: list = [None] * nsets
    ways: list = [None] * nsets
    misses = pf = wb = wt = 0
    if writes is None:
        writes = itertools.repeat(False)

    def insert(block: int, dirty: bool) -> int:
        s = block % nsets
        lines = sets[s]
        if lines is None:
            lines = sets[s] = {} if randomized else OrderedDict()
            if randomized:
                ways[s] = []
        evicted_dirty = 0
        if len(lines) >= assoc:
            if randomized:
                v = rng.randrange(assoc)
                victim = ways[s][v]
                ways[s][v] = block
            else:
                victim = next(iter(lines))
            if lines.pop(victim) and copy_back:
                evicted_dirty = 1
        elif randomized:
            ways[s].append(block)
        lines[block] = dirty
        return evicted_dirty

    n = 0
    for addr, is_write in zip(addrs, writes):
        n += 1
        block = addr >> shift
        lines = sets[block % nsets]
        if is_write and not copy_back:
            wt += 1
        if lines is not None and block in lines:
            if lru:
                lines.move_to_end(block)
            if is_write and copy_back:
                lines[block] = True
        else:
            misses += 1
            wb += insert(block, bool(is_write and copy_back))
        if prefetch:
            nb = block + 1
            nl = sets[nb % nsets]
            if nl is None or nb not in nl:
                pf += 1
                wb += insert(nb, False)
    return SideStats(n, misses, pf, wb, wt)


def simulate(trace: Sequence[MemRef] | PreparedTrace, config: CacheConfig, seed: int = 0) -> CacheStats:
    """Split I/D simulation; RANDOM replacement draws from per-side seeded RNGs."""
    if not isinstance(trace, PreparedTrace):
        trace = PreparedTrace.from_refs(trace)
    i = simulate_side(trace.i_addrs, None, config.icache, random.Random(2 * seed))
    d = simulate_side(trace.d_addrs, trace.d_writes, config.dcache, random.Random(2 * seed + 1))
    return combine_sides(i, d)


def combine_sides(i: SideStats, d: SideStats) -> CacheStats:
    return CacheStats(i.access, i.miss, d.access, d.miss, i.prefetch_fetches + d.prefetch_fetches,
                      i.writebacks + d.writebacks, d.writethroughs)


# --------------------------------------------------------------------------
# technology parameters and models


@dataclass(frozen=True)
class TechEntry:
    access_time: float  # s
    access_energy: float  # J


@dataclass(frozen=True)
class DramParams:
    access_time: float = 1e-7  # s
    access_power: float = 0.5  # W
    bandwidth: float = 1e9  # B/s

    def __post_init__(self):
        if not (self.access_time > 0 and self.access_power > 0 and self.bandwidth > 0):
            raise CacheError("DRAM parameters must be positive")


TECH_HEADER = ["size", "assoc", "block", "access_time_s", "access_energy_j"]


class TechnologyTable:
    """Access time and energy per (size, associativity, block) cache geometry."""

    def __init__(self, entries: dict[tuple[int, int, int], TechEntry]):
        self.entries = dict(entries)
        self._check_monotone()

    def __contains__(self, key) -> bool:
        return key in self.entries

    def __len__(self) -> int:
        return len(self.entries)

    def __getitem__(self, key: tuple[int, int, int]) -> TechEntry:
        try:
            return self.entries[key]
        except KeyError:
            size, assoc, block = key
            raise CacheError(
                f"technology table has no entry for size={size} assoc={assoc} block={block}") from None

    def lookup(self, params: CacheParams) -> TechEntry:
        return self[params.tech_key]

    def _check_monotone(self) -> None:
        def check(group_key, vary):
            groups: dict = {}
            for key, e in self.entries.items():
                groups.setdefault(group_key(key), []).append((vary(key), key, e))
            for members in groups.values():
                members.sort()
                for (_, ka, a), (_, kb, b) in zip(members, members[1:]):
                    if not (b.access_time > a.access_time and b.access_energy > a.access_energy):
                        raise CacheError(f"technology table not monotone between {ka} and {kb}")

        check(lambda k: (k[1], k[2]), lambda k: k[0])  # size at fixed (assoc, block)
        check(lambda k: (k[0], k[2]), lambda k: k[1])  # assoc at fixed (size, block)

    @classmethod
    def from_csv(cls, stream) -> "TechnologyTable":
        if isinstance(stream, (bytes, bytearray)):
            stream = stream.decode("utf-8")
        if isinstance(stream, str):
            stream = io.StringIO(stream)
        reader = csv.DictReader(stream)
        if reader.fieldnames is None or [f.strip() for f in reader.fieldnames] != TECH_HEADER:
            raise CacheError(f"technology CSV header must be {','.join(TECH_HEADER)}")
        entries: dict = {}
        for lineno, row in enumerate(reader, start=2):
            try:
                key = (int(row["size"]), int(row["assoc"]), int(row["block"]))
                entry = TechEntry(float(row["access_time_s"]), float(row["access_energy_j"]))
            except (TypeError, ValueError):
                raise CacheError(f"line {lineno}: malformed technology row") from None
            if key in entries:
                raise CacheError(f"line {lineno}: duplicate technology key {key}")
            if not (entry.access_time > 0 and entry.access_energy > 0):
                raise CacheError(f"line {lineno}: access time and energy must be positive")
            entries[key] = entry
        return cls(entries)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(TECH_HEADER)
        for key in sorted(self.entries):
            e = self.entries[key]
            w.writerow([*key, repr(e.access_time), repr(e.access_energy)])
        return buf.getvalue()


DEFAULT_SIZES = tuple(1024 << k for k in range(8))  # 1 KB .. 128 KB
DEFAULT_BLOCKS = (8, 16, 32, 64)
DEFAULT_ASSOCS = (1, 2, 4, 8, 16)


def default_technology_csv(sizes=DEFAULT_SIZES, assocs=DEFAULT_ASSOCS, blocks=DEFAULT_BLOCKS) -> str:
    """Synthetic, monotone stand-in for a characterization tool's output."""
    from math import log2

    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TECH_HEADER)
    for size in sizes:
        for assoc in assocs:
            for block in blocks:
                kb = size / 1024
                t = 0.5e-9 * kb ** 0.25 * (1 + 0.08 * log2(assoc)) * (1 + 0.02 * log2(block / 8))
                e = 0.02e-9 * kb ** 0.5 * (1 + 0.25 * log2(assoc)) * (1 + 0.05 * log2(block / 8))
                w.writerow([size, assoc, block, repr(t), repr(e)])
    return buf.getvalue()


def default_technology_table() -> TechnologyTable:
    return TechnologyTable.from_csv(default_technology_csv())


def exec_time(stats: CacheStats, config: CacheConfig, tech: TechnologyTable, dram: DramParams) -> float:
    """Demand-access time plus DRAM latency and line-fill transfer per miss (s)."""
    it = tech.lookup(config.icache).access_time
    dt = tech.lookup(config.dcache).access_time
    ib, db = config.icache.block_bytes, config.dcache.block_bytes
    return (stats.i_access * it + stats.i_miss * dram.access_time + stats.i_miss * ib / dram.bandwidth
            + stats.d_access * dt + stats.d_miss * dram.access_time + stats.d_miss * db / dram.bandwidth)


def energy(stats: CacheStats, config: CacheConfig, tech: TechnologyTable, dram: DramParams,
           include_writebacks: bool = False) -> float:
    """Memory-subsystem energy (J), CPU term excluded.

    ``include_writebacks`` adds one DRAM access (power x latency) per
    writeback and writethrough; off by default.
    """
    ie = tech.lookup(config.icache).access_energy
    de = tech.lookup(config.dcache).access_energy
    ib, db = config.icache.block_bytes, config.dcache.block_bytes
    p = dram.access_power
    e = (stats.i_access * ie + stats.d_access * de
         + stats.i_miss * ie * ib + stats.d_miss * de * db
         + stats.i_miss * p * (dram.access_time + ib / dram.bandwidth)
         + stats.d_miss * p * (dram.access_time + db / dram.bandwidth))
    if include_writebacks:
        e += (stats.writebacks + stats.writethroughs) * p * dram.access_time
    return e
