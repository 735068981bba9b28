"""Trace formats shared by the simulators.

Three line-oriented text formats are supported:

* memory references (Dinero ``din`` style): ``<label> <hex-address>`` where
  label 0 is a data read, 1 a data write and 2 an instruction fetch;
* allocation traces: ``A <id> <size>`` / ``F <id>``;
* register profiles: a ``registers <N> window <seconds>`` header followed by
  ``<reg-index> <reads> <writes>`` lines.

Blank lines and ``#`` comments are ignored everywhere.  Files ending in
``.gz`` are transparently decompressed.
"""

from __future__ import annotations

import enum
import gzip
import heapq
import io
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO, Iterable, Iterator

import numpy as np

__all__ = [
    "AccessKind",
    "AllocEvent",
    "AllocTraceSpec",
    "MemRef",
    "MemTraceSpec",
    "RegisterProfile",
    "TraceError",
    "TraceParseError",
    "check_alloc_trace",
    "format_alloc_trace",
    "format_mem_trace",
    "format_register_profile",
    "gen_synthetic_alloc_trace",
    "gen_synthetic_mem_trace",
    "iter_alloc_trace",
    "iter_mem_trace",
    "open_text",
    "parse_alloc_trace",
    "parse_mem_trace",
    "parse_register_profile",
    "read_alloc_trace",
    "read_mem_trace",
    "read_register_profile",
]

_ADDR_MAX = (1 << 64) - 1


class TraceError(ValueError):
    """Raised for semantically invalid traces (double free, unknown id...)."""


class TraceParseError(TraceError):
    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


class AccessKind(enum.IntEnum):
    DATA_READ = 0
    DATA_WRITE = 1
    INSTR_FETCH = 2


@dataclass(frozen=True, slots=True)
class MemRef:
    kind: AccessKind
    address: int

    def __post_init__(self):
        if not 0 <= self.address <= _ADDR_MAX:
            raise ValueError(f"address {self.address:#x} does not fit in 64 bits")


@dataclass(frozen=True, slots=True)
class AllocEvent:
    op: str  # "alloc" | "free"
    id: int
    size: int | None = None

    def __post_init__(self):
        if self.op == "alloc":
            if self.size is None or self.size <= 0:
                raise ValueError("alloc events need a positive size")
        elif self.op == "free":
            if self.size is not None:
                raise ValueError("free events carry no size")
        else:
            raise ValueError(f"unknown op {self.op!r}")

    @classmethod
    def alloc(cls, id: int, size: int) -> "AllocEvent":
        return cls("alloc", id, size)

    @classmethod
    def free(cls, id: int) -> "AllocEvent":
        return cls("free", id)


@dataclass
class RegisterProfile:
    num_registers: int
    reads: np.ndarray
    writes: np.ndarray
    window_seconds: float = 1.0

    def __post_init__(self):
        self.reads = np.asarray(self.reads, dtype=np.int64)
        self.writes = np.asarray(self.writes, dtype=np.int64)
        if self.reads.shape != (self.num_registers,) or self.writes.shape != (self.num_registers,):
            raise ValueError("reads/writes must have one entry per register")
        if (self.reads < 0).any() or (self.writes < 0).any():
            raise ValueError("access counts must be nonnegative")
        if not self.window_seconds > 0:
            raise ValueError("window_seconds must be positive")


# --------------------------------------------------------------------------
# I/O helpers


def open_text(path: str | Path, mode: str = "r") -> IO[str]:
    """Open a trace file as UTF-8 text, gunzipping ``*.gz`` paths."""
    path = Path(path)
    if path.suffix == ".gz":
        return gzip.open(path, mode + "t", encoding="utf-8")
    return open(path, mode, encoding="utf-8")


def _lines(stream) -> Iterator[tuple[int, str]]:
    if isinstance(stream, (bytes, bytearray)):
        stream = io.StringIO(stream.decode("utf-8"))
    elif isinstance(stream, str):
        stream = io.StringIO(stream)
    for lineno, raw in enumerate(stream, start=1):
        if isinstance(raw, (bytes, bytearray)):
            raw = raw.decode("utf-8")
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        yield lineno, line


def _parse_int(token: str, lineno: int, what: str) -> int:
    try:
        return int(token)
    except ValueError:
        raise TraceParseError(f"bad {what} {token!r}", lineno) from None


# --------------------------------------------------------------------------
# memory reference traces


def iter_mem_trace(stream) -> Iterator[MemRef]:
    """Stream :class:`MemRef` records from text, bytes or a file object."""
    for lineno, line in _lines(stream):
        parts = line.split()
        if len(parts) < 2:
            raise TraceParseError("expected '<label> <address>'", lineno)
        try:
            label = int(parts[0])
        except ValueError:
            raise TraceParseError(f"bad label {parts[0]!r}", lineno) from None
        if label not in (0, 1, 2):
            raise TraceParseError(f"unknown label {label}", lineno)
        try:
            addr = int(parts[1], 16)
        except ValueError:
            raise TraceParseError(f"bad address {parts[1]!r}", lineno) from None
        if not 0 <= addr <= _ADDR_MAX:
            raise TraceParseError("address does not fit in 64 bits", lineno)
        yield MemRef(AccessKind(label), addr)


def parse_mem_trace(stream) -> list[MemRef]:
    return list(iter_mem_trace(stream))


def format_mem_trace(refs: Iterable[MemRef]) -> str:
    return "".join(f"{int(r.kind)} {r.address:#x}\n" for r in refs)


def read_mem_trace(path: str | Path) -> list[MemRef]:
    with open_text(path) as fh:
        return parse_mem_trace(fh)


# --------------------------------------------------------------------------
# allocation traces


def iter_alloc_trace(stream) -> Iterator[AllocEvent]:
    for lineno, line in _lines(stream):
        parts = line.split()
        op = parts[0]
        if op == "A":
            if len(parts) != 3:
                raise TraceParseError("expected 'A <id> <size>' (missing size?)", lineno)
            size = _parse_int(parts[2], lineno, "size")
            if size <= 0:
                raise TraceParseError("allocation size must be positive", lineno)
            yield AllocEvent("alloc", _parse_int(parts[1], lineno, "id"), size)
        elif op == "F":
            if len(parts) != 2:
                raise TraceParseError("expected 'F <id>'", lineno)
            yield AllocEvent("free", _parse_int(parts[1], lineno, "id"))
        else:
            raise TraceParseError(f"unknown record type {op!r}", lineno)


def parse_alloc_trace(stream) -> list[AllocEvent]:
    return list(iter_alloc_trace(stream))


def format_alloc_trace(events: Iterable[AllocEvent]) -> str:
    out = []
    for ev in events:
        if ev.op == "alloc":
            out.append(f"A {ev.id} {ev.size}\n")
        else:
            out.append(f"F {ev.id}\n")
    return "".join(out)


def read_alloc_trace(path: str | Path) -> list[AllocEvent]:
    with open_text(path) as fh:
        return parse_alloc_trace(fh)


def check_alloc_trace(events: Iterable[AllocEvent]) -> None:
    """Raise :class:`TraceError` naming the first causally invalid event."""
    live: set[int] = set()
    for index, ev in enumerate(events):
        if ev.op == "alloc":
            if ev.id in live:
                raise TraceError(f"event {index}: id {ev.id} allocated twice while live")
            live.add(ev.id)
        elif ev.id in live:
            live.remove(ev.id)
        else:
            raise TraceError(f"event {index}: free of unknown or already freed id {ev.id}")


# --------------------------------------------------------------------------
# register profiles


def parse_register_profile(stream) -> RegisterProfile:
    lines = _lines(stream)
    try:
        lineno, header = next(lines)
    except StopIteration:
        raise TraceParseError("empty register profile", 1) from None
    parts = header.split()
    if len(parts) != 4 or parts[0] != "registers" or parts[2] != "window":
        raise TraceParseError("expected header 'registers <N> window <seconds>'", lineno)
    n = _parse_int(parts[1], lineno, "register count")
    try:
        window = float(parts[3])
    except ValueError:
        raise TraceParseError(f"bad window {parts[3]!r}", lineno) from None
    if n <= 0 or not window > 0:
        raise TraceParseError("register count and window must be positive", lineno)
    reads = np.zeros(n, dtype=np.int64)
    writes = np.zeros(n, dtype=np.int64)
    seen: set[int] = set()
    for lineno, line in lines:
        fields = line.split()
        if len(fields) != 3:
            raise TraceParseError("expected '<reg-index> <reads> <writes>'", lineno)
        idx, r, w = (_parse_int(f, lineno, "count") for f in fields)
        if not 0 <= idx < n:
            raise TraceParseError(f"register index {idx} out of range [0, {n})", lineno)
        if idx in seen:
            raise TraceParseError(f"duplicate register index {idx}", lineno)
        if r < 0 or w < 0:
            raise TraceParseError("negative access count", lineno)
        seen.add(idx)
        reads[idx], writes[idx] = r, w
    return RegisterProfile(n, reads, writes, window)


def format_register_profile(profile: RegisterProfile) -> str:
    out = [f"registers {profile.num_registers} window {profile.window_seconds!r}\n"]
    for i in range(profile.num_registers):
        out.append(f"{i} {int(profile.reads[i])} {int(profile.writes[i])}\n")
    return "".join(out)


def read_register_profile(path: str | Path) -> RegisterProfile:
    with open_text(path) as fh:
        return parse_register_profile(fh)


# --------------------------------------------------------------------------
# synthetic workloads


@dataclass(frozen=True)
class MemTraceSpec:
    length: int
    instr_share: float = 0.6
    working_set_bytes: int = 1 << 16
    stride_share: float = 0.5
    seed: int = 0
    stride_bytes: int = 4
    run_length: int = 16
    loop_bytes: int = 1024

    def __post_init__(self):
        if self.length <= 0:
            raise ValueError("length must be positive")
        for name in ("instr_share", "stride_share"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")
        if self.working_set_bytes < 8:
            raise ValueError("working set too small")


def gen_synthetic_mem_trace(spec: MemTraceSpec) -> list[MemRef]:
    """Mix of looping instruction fetches and strided/random data references.

    Instruction fetches walk a loop body of ``loop_bytes`` inside a code
    region placed at the bottom of the working set; the loop base jumps to a
    new random location now and then so the instruction footprint exceeds a
    single loop.  Data references either continue a strided run or jump to a
    uniformly random word.  All addresses stay below ``working_set_bytes``.
    """
    rng = np.random.default_rng(spec.seed)
    ws = spec.working_set_bytes
    code_bytes = max(8, min(ws // 4, 1 << 15))
    loop = max(4, min(spec.loop_bytes, code_bytes))
    n = spec.length

    is_instr = rng.random(n) < spec.instr_share
    strided = rng.random(n) < spec.stride_share
    is_write = rng.random(n) < 0.3
    random_words = rng.integers(0, ws // 4, size=n) * 4
    loop_jumps = rng.random(n) < 1.0 / 256
    loop_bases = rng.integers(0, max(1, (code_bytes - loop) // 4) + 1, size=n) * 4

    refs: list[MemRef] = []
    pc_base, pc_off = 0, 0
    data_addr, run_left = int(random_words[0]), 0
    for i in range(n):
        if is_instr[i]:
            if loop_jumps[i]:
                pc_base, pc_off = int(loop_bases[i]), 0
            addr = (pc_base + pc_off) % code_bytes
            pc_off = (pc_off + 4) % loop
            refs.append(MemRef(AccessKind.INSTR_FETCH, addr))
            continue
        if strided[i] and run_left > 0:
            data_addr = (data_addr + spec.stride_bytes) % ws
            run_left -= 1
        else:
            data_addr = int(random_words[i])
            run_left = spec.run_length if strided[i] else 0
        kind = AccessKind.DATA_WRITE if is_write[i] else AccessKind.DATA_READ
        refs.append(MemRef(kind, data_addr))
    return refs


@dataclass(frozen=True)
class AllocTraceSpec:
    events: int
    size_classes: dict = field(default_factory=lambda: {64: 1.0})
    mean_lifetime: float = 50.0
    seed: int = 0

    def __post_init__(self):
        if self.events <= 0:
            raise ValueError("events must be positive")
        if not self.size_classes:
            raise ValueError("at least one size class is required")
        if any(int(s) <= 0 for s in self.size_classes):
            raise ValueError("size classes must be positive")
        total = math.fsum(self.size_classes.values())
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"size-class weights sum to {total}, expected 1")
        if not self.mean_lifetime > 0:
            raise ValueError("mean_lifetime must be positive")


def gen_synthetic_alloc_trace(spec: AllocTraceSpec) -> list[AllocEvent]:
    """Allocation trace with exponentially distributed object lifetimes.

    Each allocation draws a size from ``size_classes`` and a lifetime (in
    events) from an exponential distribution; frees are emitted once their
    due time is reached.  Objects still live when the event budget runs out
    are simply never freed.
    """
    rng = np.random.default_rng(spec.seed)
    sizes = np.array([int(s) for s in spec.size_classes], dtype=np.int64)
    weights = np.array([float(w) for w in spec.size_classes.values()])
    weights = weights / weights.sum()

    events: list[AllocEvent] = []
    pending: list[tuple[float, int]] = []
    next_id = 0
    clock = 0
    while len(events) < spec.events:
        if pending and pending[0][0] <= clock:
            _, oid = heapq.heappop(pending)
            events.append(AllocEvent("free", oid))
        else:
            size = int(sizes[rng.choice(len(sizes), p=weights)])
            lifetime = float(rng.exponential(spec.mean_lifetime))
            events.append(AllocEvent("alloc", next_id, size))
            heapq.heappush(pending, (clock + lifetime, next_id))
            next_id += 1
        clock += 1
    return events

