"""Heap simulator replaying allocation traces through a parameterized DMM.

Every region owns its own address space starting at zero; the heap extent
``brk`` is the sum of the region extents, so a region's behaviour depends
only on the requests it serves.  That makes region replays independently
cacheable (see :class:`Replayer`).
"""

from __future__ import annotations

import bisect
import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .traces import AllocEvent

INF = math.inf

SEGREGATED_EXACT = "SEGREGATED_EXACT"
SEGREGATED_POW2 = "SEGREGATED_POW2"
BUDDY_BINARY = "BUDDY_BINARY"
BUDDY_FIB = "BUDDY_FIB"
FREE_LIST = "FREE_LIST"
POLICY_KINDS = (SEGREGATED_EXACT, SEGREGATED_POW2, BUDDY_BINARY, BUDDY_FIB, FREE_LIST)
FITS = ("FIRST", "BEST")
ORDERS = ("FIFO", "LIFO", "ADDR")

MIN_CLASS = 16
ALIGN = 8
REFERENCE_KINDS = ("KNG", "LEA", "FIB", "S10", "EXA")


class DmmError(ValueError):
    pass


class ReplayError(DmmError):
    def __init__(self, index: int, message: str):
        super().__init__(f"event {index}: {message}")
        self.index = index


@dataclass(frozen=True)
class Policy:
    kind: str
    fit: str | None = None
    order: str | None = None
    coalesce: bool = False
    split: bool = False
    granularity: int = 1  # SEGREGATED_EXACT only

    def __post_init__(self):
        if self.kind not in POLICY_KINDS:
            raise DmmError(f"unknown policy kind {self.kind!r}")
        if self.kind == FREE_LIST:
            if self.fit not in FITS or self.order not in ORDERS:
                raise DmmError("FREE_LIST needs fit in FIRST/BEST and order in FIFO/LIFO/ADDR")
        elif self.fit is not None or self.order is not None:
            raise DmmError(f"{self.kind} takes no fit/order")
        if self.kind in (SEGREGATED_EXACT, SEGREGATED_POW2) and (self.coalesce or self.split):
            raise DmmError("segregated policies neither split nor coalesce")
        if int(self.granularity) != self.granularity or self.granularity < 1:
            raise DmmError("granularity must be a positive integer")
        if self.kind != SEGREGATED_EXACT and self.granularity != 1:
            raise DmmError("granularity applies to SEGREGATED_EXACT only")

    def to_json(self) -> dict:
        d: dict = {"kind": self.kind}
        if self.kind == FREE_LIST:
            d.update(fit=self.fit, order=self.order)
        if self.kind in (FREE_LIST, BUDDY_BINARY, BUDDY_FIB):
            d.update(coalesce=self.coalesce, split=self.split)
        if self.kind == SEGREGATED_EXACT:
            d["granularity"] = self.granularity
        return d

    @classmethod
    def from_json(cls, d: dict) -> "Policy":
        if not isinstance(d, dict) or "kind" not in d:
            raise DmmError("policy must be an object with a kind")
        unknown = set(d) - {"kind", "fit", "order", "coalesce", "split", "granularity"}
        if unknown:
            raise DmmError(f"unknown policy keys {sorted(unknown)}")
        for flag in ("coalesce", "split"):
            if not isinstance(d.get(flag, False), bool):
                raise DmmError(f"{flag} must be a boolean")
        return cls(d["kind"], d.get("fit"), d.get("order"), d.get("coalesce", False),
                   d.get("split", False), d.get("granularity", 1))


@dataclass(frozen=True)
class Region:
    lo: int
    hi: float  # exclusive; math.inf for the open-ended last region
    policy: Policy

    def to_json(self) -> dict:
        return {"lo": self.lo, "hi": None if self.hi == INF else int(self.hi),
                "policy": self.policy.to_json()}


@dataclass(frozen=True)
class DmmSpec:
    regions: tuple[Region, ...]
    header_bytes: int = 8
    growth_quantum: int = 4096

    def __post_init__(self):
        object.__setattr__(self, "regions", tuple(self.regions))
        if self.header_bytes < 0 or self.growth_quantum <= 0:
            raise DmmError("header bytes must be >= 0 and growth quantum > 0")
        if not self.regions:
            raise DmmError("a DMM needs at least one region")
        if self.regions[0].lo != 1:
            raise DmmError("regions must start at size 1")
        for a, b in zip(self.regions, self.regions[1:]):
            if a.hi != b.lo:
                raise DmmError(f"regions [{a.lo},{a.hi}) and [{b.lo},{b.hi}) are not contiguous")
        for r in self.regions:
            if not r.lo < r.hi:
                raise DmmError(f"empty region [{r.lo},{r.hi})")
        if self.regions[-1].hi != INF:
            raise DmmError("the last region must be open-ended")

    def region_index(self, size: int) -> int:
        return bisect.bisect_right([r.lo for r in self.regions], size) - 1

    def to_json(self) -> dict:
        return {"header_bytes": self.header_bytes, "growth_quantum": self.growth_quantum,
                "regions": [r.to_json() for r in self.regions]}

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True)

    @classmethod
    def from_json(cls, d) -> "DmmSpec":
        if isinstance(d, (str, bytes)):
            try:
                d = json.loads(d)
            except json.JSONDecodeError as exc:
                raise DmmError(f"malformed DMM JSON: {exc}") from None
        if not isinstance(d, dict) or not isinstance(d.get("regions"), list):
            raise DmmError("DMM JSON must be an object with a regions list")
        regions = []
        for r in d["regions"]:
            hi = r.get("hi")
            regions.append(Region(int(r["lo"]), INF if hi is None else int(hi),
                                  Policy.from_json(r["policy"])))
        return cls(tuple(regions), int(d.get("header_bytes", 8)), int(d.get("growth_quantum", 4096)))


def _single(policy: Policy, **kw) -> DmmSpec:
    return DmmSpec((Region(1, INF, policy),), **kw)


def build_reference(kind: str, header_bytes: int = 8, growth_quantum: int = 4096) -> DmmSpec:
    """The five reference allocators: KNG, LEA, FIB, S10 and EXA."""
    kw = dict(header_bytes=header_bytes, growth_quantum=growth_quantum)
    kind = kind.upper()
    if kind == "KNG":
        return _single(Policy(SEGREGATED_POW2), **kw)
    if kind == "LEA":
        return DmmSpec((Region(1, 512, Policy(SEGREGATED_EXACT, granularity=8)),
                        Region(512, INF, Policy(FREE_LIST, "BEST", "ADDR", True, True))), **kw)
    if kind == "FIB":
        return _single(Policy(BUDDY_FIB, coalesce=True, split=True), **kw)
    if kind == "S10":
        bounds = [1] + [16 << k for k in range(9)] + [INF]
        pol = Policy(FREE_LIST, "FIRST", "FIFO")
        return DmmSpec(tuple(Region(lo, hi, pol) for lo, hi in zip(bounds, bounds[1:])), **kw)
    if kind == "EXA":
        return _single(Policy(SEGREGATED_EXACT), **kw)
    raise DmmError(f"unknown reference DMM {kind!r}; choose from {', '.join(REFERENCE_KINDS)}")


# --------------------------------------------------------------------------
# region allocators


def round_up(v: int, q: int) -> int:
    return -(-v // q) * q


def pow2_class(need: int) -> int:
    return max(MIN_CLASS, 1 << (need - 1).bit_length())


def buddy_sizes(fib: bool, upto: int) -> list[int]:
    """Class sizes up to the first one >= ``upto``."""
    sizes = [MIN_CLASS, 2 * MIN_CLASS] if fib else [MIN_CLASS]
    while sizes[-1] < upto:
        sizes.append(sizes[-1] + sizes[-2] if fib else 2 * sizes[-1])
    return sizes


class _Counters:
    __slots__ = ("accesses", "splits", "coalesces")

    def __init__(self):
        self.accesses = self.splits = self.coalesces = 0


class _Segregated(_Counters):
    """One LIFO free list per size class; grows by exactly one class block."""

    __slots__ = ("extent", "header", "pow2", "gran", "lists", "all", "free_addrs")

    def __init__(self, policy: Policy, header: int, quantum: int):
        super().__init__()
        self.extent = 0
        self.header = header
        self.pow2 = policy.kind == SEGREGATED_POW2
        self.gran = policy.granularity
        self.lists: dict[int, list[int]] = {}
        self.all: list[tuple[int, int]] = []
        self.free_addrs: set[int] = set()

    def block_size(self, size: int) -> int:
        if self.pow2:
            return pow2_class(size + self.header)
        return round_up(size, self.gran) + self.header

    def alloc(self, size: int):
        bs = self.block_size(size)
        lst = self.lists.get(bs)
        if lst:
            self.accesses += 1
            addr = lst.pop()
            self.free_addrs.discard(addr)
        else:
            addr = self.extent
            self.extent += bs
            self.all.append((addr, bs))
        return (addr, bs)

    def free(self, handle) -> None:
        addr, bs = handle
        self.lists.setdefault(bs, []).append(addr)
        self.free_addrs.add(addr)

    def handle_span(self, handle) -> tuple[int, int]:
        return handle

    def blocks(self):
        for addr, bs in self.all:
            yield addr, bs, addr not in self.free_addrs


class _BuddyNode:
    __slots__ = ("addr", "k", "parent", "left", "right", "free")

    def __init__(self, addr, k, parent):
        self.addr = addr
        self.k = k
        self.parent = parent
        self.left = self.right = None
        self.free = False


class _Buddy(_Counters):
    """Binary or Fibonacci buddy system over per-class LIFO lists.

    Splitting class ``k`` gives a left child of class ``k-1`` at the parent
    address and a right child of class ``k-1`` (binary) or ``k-2``
    (Fibonacci).  Allocation probes the lists from the target class
    upwards at one access each.
    """

    __slots__ = ("extent", "header", "quantum", "fib", "split_on", "coalesce_on", "sizes",
                 "lists", "roots")

    def __init__(self, policy: Policy, header: int, quantum: int):
        super().__init__()
        self.extent = 0
        self.header = header
        self.quantum = quantum
        self.fib = policy.kind == BUDDY_FIB
        self.split_on = policy.split
        self.coalesce_on = policy.coalesce
        self.sizes = buddy_sizes(self.fib, quantum)
        self.lists: list[dict] = []  # class -> insertion-ordered set of free nodes
        self.roots: list[_BuddyNode] = []

    def _class_of(self, need: int) -> int:
        while self.sizes[-1] < need:
            s = self.sizes
            s.append(s[-1] + s[-2] if self.fib else 2 * s[-1])
        return bisect.bisect_left(self.sizes, need)

    def _push(self, node: _BuddyNode) -> None:
        while len(self.lists) <= node.k:
            self.lists.append({})
        node.free = True
        self.lists[node.k][node] = None

    def _unlink(self, node: _BuddyNode) -> None:
        node.free = False
        del self.lists[node.k][node]

    def _split(self, node: _BuddyNode, k0: int) -> _BuddyNode:
        while node.k > k0 and (node.k >= 2 or not self.fib):
            k = node.k
            lk, rk = (k - 1, k - 2) if self.fib else (k - 1, k - 1)
            node.left = _BuddyNode(node.addr, lk, node)
            node.right = _BuddyNode(node.addr + self.sizes[lk], rk, node)
            self.splits += 1
            if rk >= k0 and rk < lk:
                keep, spare = node.right, node.left
            else:
                keep, spare = node.left, node.right
            self._push(spare)
            node = keep
        return node

    def alloc(self, size: int):
        need = size + self.header
        k0 = self._class_of(need)
        found = None
        for k in range(k0, len(self.lists)):
            self.accesses += 1
            if self.lists[k]:
                found = next(reversed(self.lists[k]))
                self._unlink(found)
                break
        if found is None:
            k = self._class_of(max(need, self.quantum)) if self.split_on else k0
            found = _BuddyNode(self.extent, k, None)
            self.roots.append(found)
            self.extent += self.sizes[k]
        if self.split_on:
            found = self._split(found, k0)
        return found

    def free(self, node: _BuddyNode) -> None:
        if self.coalesce_on:
            while node.parent is not None:
                parent = node.parent
                buddy = parent.right if parent.left is node else parent.left
                self.accesses += 1
                if not (buddy.free and buddy.left is None):
                    break
                self._unlink(buddy)
                parent.left = parent.right = None
                self.coalesces += 1
                node = parent
        self._push(node)

    def handle_span(self, node) -> tuple[int, int]:
        return node.addr, self.sizes[node.k]

    def blocks(self):
        stack = list(reversed(self.roots))
        while stack:
            n = stack.pop()
            if n.left is None:
                yield n.addr, self.sizes[n.k], not n.free
            else:
                stack.append(n.right)
                stack.append(n.left)


class _Block:
    __slots__ = ("addr", "size", "free", "prev", "next")

    def __init__(self, addr, size, prev=None, next_=None):
        self.addr = addr
        self.size = size
        self.free = False
        self.prev = prev
        self.next = next_


class _FreeList(_Counters):
    """Single free list walked first- or best-fit, kept FIFO, LIFO or by address."""

    __slots__ = ("extent", "header", "quantum", "best", "order", "split_on", "coalesce_on",
                 "fl", "keys", "head", "tail")

    def __init__(self, policy: Policy, header: int, quantum: int):
        super().__init__()
        self.extent = 0
        self.header = header
        self.quantum = quantum
        self.best = policy.fit == "BEST"
        self.order = policy.order
        self.split_on = policy.split
        self.coalesce_on = policy.coalesce
        self.fl: list[_Block] = []
        self.keys: list[int] = []  # addresses, ADDR order only
        self.head = self.tail = None

    def _insert(self, b: _Block) -> None:
        b.free = True
        if self.order == "FIFO":
            self.fl.append(b)
        elif self.order == "LIFO":
            self.fl.insert(0, b)
        else:
            i = bisect.bisect_left(self.keys, b.addr)
            self.keys.insert(i, b.addr)
            self.fl.insert(i, b)

    def _remove_at(self, i: int) -> None:
        self.fl[i].free = False
        del self.fl[i]
        if self.order == "ADDR":
            del self.keys[i]

    def _remove(self, b: _Block) -> None:
        if self.order == "ADDR":
            i = bisect.bisect_left(self.keys, b.addr)
        else:
            i = next(j for j, x in enumerate(self.fl) if x is b)
        self._remove_at(i)

    def alloc(self, size: int):
        need = round_up(size, ALIGN) + self.header
        pick = -1
        if self.best:
            best_size = None
            for i, b in enumerate(self.fl):
                self.accesses += 1
                if b.size >= need and (best_size is None or b.size < best_size):
                    pick, best_size = i, b.size
        else:
            for i, b in enumerate(self.fl):
                self.accesses += 1
                if b.size >= need:
                    pick = i
                    break
        if pick >= 0:
            blk = self.fl[pick]
            self._remove_at(pick)
        else:
            grow = round_up(need, self.quantum) if self.split_on else need
            blk = _Block(self.extent, grow, self.tail)
            if self.tail is None:
                self.head = blk
            else:
                self.tail.next = blk
            self.tail = blk
            self.extent += grow
        if self.split_on and blk.size - need >= self.header + ALIGN:
            rest = _Block(blk.addr + need, blk.size - need, blk, blk.next)
            if blk.next is None:
                self.tail = rest
            else:
                blk.next.prev = rest
            blk.next = rest
            blk.size = need
            self.splits += 1
            self._insert(rest)
        return blk

    def _absorb(self, left: _Block, right: _Block) -> None:
        left.size += right.size
        left.next = right.next
        if right.next is None:
            self.tail = left
        else:
            right.next.prev = left
        self.coalesces += 1

    def free(self, b: _Block) -> None:
        if self.coalesce_on:
            p = b.prev
            if p is not None and p.free:
                self._remove(p)
                self._absorb(p, b)
                b = p
            n = b.next
            if n is not None and n.free:
                self._remove(n)
                self._absorb(b, n)
        self._insert(b)

    def handle_span(self, b) -> tuple[int, int]:
        return b.addr, b.size

    def blocks(self):
        b = self.head
        while b is not None:
            yield b.addr, b.size, not b.free
            b = b.next


_ALLOCATORS = {SEGREGATED_EXACT: _Segregated, SEGREGATED_POW2: _Segregated,
               BUDDY_BINARY: _Buddy, BUDDY_FIB: _Buddy, FREE_LIST: _FreeList}


def make_region_allocator(policy: Policy, header: int, quantum: int):
    return _ALLOCATORS[policy.kind](policy, header, quantum)


# --------------------------------------------------------------------------
# replay


@dataclass(frozen=True)
class CostWeights:
    inspect: int = 1
    base: int = 1
    split: int = 2
    coalesce: int = 3


@dataclass
class DmmMetrics:
    sim_time: int = 0
    peak_memory: int = 0
    accesses: int = 0
    allocs: int = 0
    frees: int = 0
    splits: int = 0
    coalesces: int = 0

    def to_dict(self) -> dict:
        return dict(self.__dict__)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


@dataclass
class Fragmentation:
    internal_bytes: int
    external_bytes: int
    peak: int
    peak_event: int  # index of the event that first reached the peak; -1 if none

    def to_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass
class _RegionRun:
    accesses: int
    splits: int
    coalesces: int
    allocs: int
    frees: int
    changes: list = field(default_factory=list)  # (event index, extent after it)


def _validate_events(trace: Sequence[AllocEvent]) -> None:
    live = set()
    for i, ev in enumerate(trace):
        if ev.op == "alloc":
            if ev.size is None or ev.size <= 0:
                raise ReplayError(i, f"allocation {ev.id} has nonpositive size")
            if ev.id in live:
                raise ReplayError(i, f"id {ev.id} allocated while still live")
            live.add(ev.id)
        elif ev.op == "free":
            if ev.id not in live:
                raise ReplayError(i, f"free of unknown or already freed id {ev.id}")
            live.remove(ev.id)
        else:
            raise ReplayError(i, f"unknown operation {ev.op!r}")


def _run_region(events: Iterable[tuple[int, AllocEvent]], policy: Policy, header: int,
                quantum: int) -> _RegionRun:
    ra = make_region_allocator(policy, header, quantum)
    handles: dict = {}
    changes = []
    allocs = frees = 0
    extent = 0
    for i, ev in events:
        if ev.op == "alloc":
            handles[ev.id] = ra.alloc(ev.size)
            allocs += 1
            if ra.extent != extent:
                extent = ra.extent
                changes.append((i, extent))
        else:
            ra.free(handles.pop(ev.id))
            frees += 1
    return _RegionRun(ra.accesses, ra.splits, ra.coalesces, allocs, frees, changes)


def _peak(changes_per_region: list[list]) -> tuple[int, int]:
    """Maximum of the summed extents and the first event index reaching it."""
    merged = sorted((i, r, ext) for r, ch in enumerate(changes_per_region) for i, ext in ch)
    current = [0] * len(changes_per_region)
    total = peak = 0
    at = -1
    for i, r, ext in merged:
        total += ext - current[r]
        current[r] = ext
        if total > peak:
            peak, at = total, i
    return peak, at


def _metrics(runs: list[_RegionRun], weights: CostWeights) -> DmmMetrics:
    acc = sum(r.accesses for r in runs)
    sp = sum(r.splits for r in runs)
    co = sum(r.coalesces for r in runs)
    al = sum(r.allocs for r in runs)
    fr = sum(r.frees for r in runs)
    peak, _ = _peak([r.changes for r in runs])
    t = weights.base * (al + fr) + weights.inspect * acc + weights.split * sp + weights.coalesce * co
    return DmmMetrics(t, peak, acc, al, fr, sp, co)


class Replayer:
    """Replays one trace under many specs, caching per-region results.

    A region's replay depends only on its size range, policy, header and
    growth quantum, so regions shared between specs are simulated once.
    """

    def __init__(self, trace: Sequence[AllocEvent], weights: CostWeights | None = None):
        self.trace = list(trace)
        _validate_events(self.trace)
        self.weights = weights or CostWeights()
        self._memo: dict = {}

    def _events(self, lo: int, hi: float):
        mine: set = set()
        for i, ev in enumerate(self.trace):
            if ev.op == "alloc":
                if lo <= ev.size < hi:
                    mine.add(ev.id)
                    yield i, ev
            elif ev.id in mine:
                mine.remove(ev.id)
                yield i, ev

    def region_run(self, region: Region, header: int, quantum: int) -> _RegionRun:
        key = (region.lo, region.hi, region.policy, header, quantum)
        run = self._memo.get(key)
        if run is None:
            run = _run_region(self._events(region.lo, region.hi), region.policy, header, quantum)
            self._memo[key] = run
        return run

    def metrics(self, spec: DmmSpec) -> DmmMetrics:
        runs = [self.region_run(r, spec.header_bytes, spec.growth_quantum) for r in spec.regions]
        return _metrics(runs, self.weights)


def replay(spec: DmmSpec, trace: Sequence[AllocEvent], weights: CostWeights | None = None) -> DmmMetrics:
    return Replayer(trace, weights).metrics(spec)


class Heap:
    """Full joint heap state, used for debug replays and fragmentation."""

    def __init__(self, spec: DmmSpec):
        self.spec = spec
        self.regions = [make_region_allocator(r.policy, spec.header_bytes, spec.growth_quantum)
                        for r in spec.regions]
        self.live: dict = {}  # id -> (region index, handle, requested size)

    @property
    def brk(self) -> int:
        return sum(ra.extent for ra in self.regions)

    def apply(self, index: int, ev: AllocEvent):
        if ev.op == "alloc":
            if ev.size is None or ev.size <= 0:
                raise ReplayError(index, f"allocation {ev.id} has nonpositive size")
            if ev.id in self.live:
                raise ReplayError(index, f"id {ev.id} allocated while still live")
            r = self.spec.region_index(ev.size)
            h = self.regions[r].alloc(ev.size)
            self.live[ev.id] = (r, h, ev.size)
            return r, h
        if ev.id not in self.live:
            raise ReplayError(index, f"free of unknown or already freed id {ev.id}")
        r, h, _ = self.live.pop(ev.id)
        span = self.regions[r].handle_span(h)
        self.regions[r].free(h)
        return r, span

    def layout(self):
        """(global addr, size, live, region) for every block, address-ordered."""
        base = 0
        for r, ra in enumerate(self.regions):
            for addr, size, live in ra.blocks():
                yield base + addr, size, live, r
            base += ra.extent

    def check(self, index: int, expected_live_bytes: int) -> None:
        pos = 0
        live_blocks = 0
        for addr, size, live, _ in self.layout():
            if addr != pos or size <= 0:
                raise DmmError(f"event {index}: heap does not tile at address {pos}")
            pos += size
            live_blocks += live
        if pos != self.brk:
            raise DmmError(f"event {index}: blocks cover {pos} bytes but brk is {self.brk}")
        if live_blocks != len(self.live):
            raise DmmError(f"event {index}: {live_blocks} live blocks for {len(self.live)} live ids")
        payload = sum(req for _, _, req in self.live.values())
        if payload != expected_live_bytes:
            raise DmmError(f"event {index}: live payload {payload} != {expected_live_bytes}")
        for r, h, req in self.live.values():
            if self.regions[r].handle_span(h)[1] < req + self.spec.header_bytes:
                raise DmmError(f"event {index}: block smaller than its request")

    def fragmentation(self) -> tuple[int, int]:
        header = self.spec.header_bytes
        internal = sum(self.regions[r].handle_span(h)[1] - req - header
                       for r, h, req in self.live.values())
        free = [size for _, size, live, _ in self.layout() if not live]
        external = sum(free) - max(free, default=0)
        return internal, external


EVENT_LOG_HEADER = ["event", "op", "id", "size", "region", "addr", "block_size", "brk"]


def debug_replay(spec: DmmSpec, trace: Sequence[AllocEvent], log=None) -> DmmMetrics:
    """Joint replay checking tiling and payload conservation after every event.

    ``log`` (a text stream) receives one CSV row per event.
    """
    heap = Heap(spec)
    writer = None
    if log is not None:
        writer = csv.writer(log, lineterminator="\n")
        writer.writerow(EVENT_LOG_HEADER)
    requested: dict = {}
    live_bytes = 0
    for i, ev in enumerate(trace):
        r, h = heap.apply(i, ev)
        if ev.op == "alloc":
            requested[ev.id] = ev.size
            live_bytes += ev.size
            addr, size = heap.regions[r].handle_span(h)
        else:
            live_bytes -= requested.pop(ev.id)
            addr, size = h
        heap.check(i, live_bytes)
        if writer is not None:
            base = sum(ra.extent for ra in heap.regions[:r])
            writer.writerow([i, ev.op, ev.id, ev.size if ev.op == "alloc" else "", r, base + addr, size,
                             heap.brk])
    return replay(spec, trace)


def fragmentation_report(spec: DmmSpec, trace: Sequence[AllocEvent]) -> Fragmentation:
    """Internal and external fragmentation at the first moment the heap peaks.

    Internal: bytes inside live blocks beyond request plus header.
    External: total free bytes minus the largest free block.
    """
    trace = list(trace)
    _validate_events(trace)
    heap = Heap(spec)
    peak, at = 0, -1
    snapshot = (0, 0)
    for i, ev in enumerate(trace):
        heap.apply(i, ev)
        if heap.brk > peak:
            peak, at = heap.brk, i
            snapshot = heap.fragmentation()
    return Fragmentation(snapshot[0], snapshot[1], peak, at)


def metrics_csv_row(name: str, m: DmmMetrics) -> list:
    return [name, m.sim_time, m.peak_memory, m.accesses, m.allocs, m.frees, m.splits, m.coalesces]


def event_log(spec: DmmSpec, trace: Sequence[AllocEvent]) -> str:
    buf = io.StringIO()
    debug_replay(spec, trace, buf)
    return buf.getvalue()
