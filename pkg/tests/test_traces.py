import gzip

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from memdse.traces import (
    AccessKind,
    AllocEvent,
    AllocTraceSpec,
    MemRef,
    MemTraceSpec,
    RegisterProfile,
    TraceError,
    TraceParseError,
    check_alloc_trace,
    format_alloc_trace,
    format_mem_trace,
    format_register_profile,
    gen_synthetic_alloc_trace,
    gen_synthetic_mem_trace,
    parse_alloc_trace,
    parse_mem_trace,
    parse_register_profile,
    read_mem_trace,
)


def test_mem_trace_labels_and_hex():
    assert parse_mem_trace("2 0x1000") == [MemRef(AccessKind.INSTR_FETCH, 0x1000)]
    assert parse_mem_trace("0 ff") == [MemRef(AccessKind.DATA_READ, 0xFF)]
    assert parse_mem_trace(b"# comment\n\n1 0X10\n") == [MemRef(AccessKind.DATA_WRITE, 0x10)]


def test_mem_trace_errors_carry_line():
    with pytest.raises(TraceParseError) as exc:
        parse_mem_trace("3 0x0")
    assert exc.value.line == 1
    with pytest.raises(TraceParseError) as exc:
        parse_mem_trace("0 0x0\n0 zz")
    assert exc.value.line == 2


def test_alloc_trace_parse():
    assert parse_alloc_trace("A 1 100") == [AllocEvent("alloc", 1, 100)]
    assert parse_alloc_trace("F 1") == [AllocEvent("free", 1)]
    with pytest.raises(TraceParseError, match="line 1"):
        parse_alloc_trace("A 1")


def test_register_profile_parse():
    p = parse_register_profile("registers 16 window 1.0\n0 10 5\n")
    assert p.num_registers == 16 and p.reads[0] == 10 and p.writes[0] == 5
    assert p.reads[1:].sum() == 0
    empty = parse_register_profile("registers 4 window 2.5\n")
    assert empty.window_seconds == 2.5 and not empty.reads.any() and not empty.writes.any()
    with pytest.raises(TraceParseError):
        parse_register_profile("registers 16 window 1.0\n16 1 1\n")
    with pytest.raises(TraceParseError):
        parse_register_profile("registers 4 window 1.0\n1 1 1\n1 2 2\n")


def test_gzip_input(tmp_path):
    path = tmp_path / "t.din.gz"
    with gzip.open(path, "wt") as fh:
        fh.write("2 0x4\n0 0x8\n")
    assert [r.address for r in read_mem_trace(path)] == [4, 8]


def test_mem_generator_contract():
    spec = MemTraceSpec(length=10_000, working_set_bytes=1 << 20, seed=5)
    a = gen_synthetic_mem_trace(spec)
    assert a == gen_synthetic_mem_trace(spec)
    assert len(a) == 10_000
    assert max(r.address for r in a) < 1 << 20
    only_i = gen_synthetic_mem_trace(MemTraceSpec(length=500, instr_share=1.0, seed=1))
    assert all(r.kind == AccessKind.INSTR_FETCH for r in only_i)


def test_alloc_generator_contract():
    spec = AllocTraceSpec(events=1000, size_classes={64: 1.0}, seed=3)
    trace = gen_synthetic_alloc_trace(spec)
    assert trace == gen_synthetic_alloc_trace(spec)
    assert len(trace) <= 1000
    assert {ev.size for ev in trace if ev.op == "alloc"} == {64}
    check_alloc_trace(trace)


def test_alloc_generator_class_proportions():
    weights = {24: 0.5, 72: 0.3, 1000: 0.2}
    trace = gen_synthetic_alloc_trace(AllocTraceSpec(events=100_000, size_classes=weights, seed=11))
    sizes = np.array([ev.size for ev in trace if ev.op == "alloc"])
    for s, w in weights.items():
        assert abs((sizes == s).mean() - w) <= 0.05 * w


def test_validity_checker_flags_bad_frees():
    with pytest.raises(TraceError, match="event 2"):
        check_alloc_trace(parse_alloc_trace("A 1 8\nF 1\nF 1\n"))
    with pytest.raises(TraceError, match="event 0"):
        check_alloc_trace(parse_alloc_trace("F 7\n"))


refs = st.lists(st.builds(MemRef, st.sampled_from(list(AccessKind)), st.integers(0, 2**64 - 1)),
                max_size=50)


@given(refs)
def test_mem_round_trip(rs):
    text = format_mem_trace(rs)
    assert parse_mem_trace(text) == rs
    assert format_mem_trace(parse_mem_trace(text)) == text


@given(st.lists(st.tuples(st.integers(1, 10_000), st.booleans()), max_size=40))
def test_alloc_round_trip(ops):
    events, live, next_id = [], [], 0
    for size, do_free in ops:
        if do_free and live:
            events.append(AllocEvent.free(live.pop(0)))
        else:
            events.append(AllocEvent.alloc(next_id, size))
            live.append(next_id)
            next_id += 1
    text = format_alloc_trace(events)
    assert parse_alloc_trace(text) == events
    assert format_alloc_trace(parse_alloc_trace(text)) == text


@settings(max_examples=50)
@given(st.integers(1, 20), st.data())
def test_profile_round_trip(n, data):
    reads = data.draw(st.lists(st.integers(0, 10**9), min_size=n, max_size=n))
    writes = data.draw(st.lists(st.integers(0, 10**9), min_size=n, max_size=n))
    window = data.draw(st.floats(1e-6, 1e3))
    p = RegisterProfile(n, reads, writes, window)
    q = parse_register_profile(format_register_profile(p))
    assert q.num_registers == n and q.window_seconds == window
    assert (q.reads == p.reads).all() and (q.writes == p.writes).all()
