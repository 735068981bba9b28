import io
import json
import math
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from memdse.dmm import (
    BUDDY_BINARY,
    BUDDY_FIB,
    FREE_LIST,
    REFERENCE_KINDS,
    SEGREGATED_EXACT,
    SEGREGATED_POW2,
    CostWeights,
    DmmError,
    DmmMetrics,
    DmmSpec,
    EVENT_LOG_HEADER,
    Heap,
    Policy,
    Region,
    ReplayError,
    Replayer,
    buddy_sizes,
    build_reference,
    debug_replay,
    event_log,
    fragmentation_report,
    replay,
)
from memdse.traces import AllocEvent, parse_alloc_trace
from oracles import random_alloc_trace, reference_heap

A = AllocEvent.alloc
F = AllocEvent.free

POLICY_MENU = [
    Policy(SEGREGATED_EXACT), Policy(SEGREGATED_EXACT, granularity=8), Policy(SEGREGATED_POW2),
    *[Policy(k, coalesce=c, split=s) for k in (BUDDY_BINARY, BUDDY_FIB) for c in (False, True)
      for s in (False, True)],
    *[Policy(FREE_LIST, f, o, c, s) for f in ("FIRST", "BEST") for o in ("FIFO", "LIFO", "ADDR")
      for c in (False, True) for s in (False, True)],
]


def oracle_metrics(spec, trace):
    return reference_heap(spec.to_json(), trace)


def test_reference_shapes():
    kng = build_reference("KNG")
    assert len(kng.regions) == 1 and kng.regions[0].policy.kind == SEGREGATED_POW2
    s10 = build_reference("S10")
    assert len(s10.regions) == 10
    assert [r.hi for r in s10.regions] == [16, 32, 64, 128, 256, 512, 1024, 2048, 4096, math.inf]
    lea = build_reference("LEA")
    assert [(r.lo, r.hi) for r in lea.regions] == [(1, 512), (512, math.inf)]
    assert lea.regions[1].policy == Policy(FREE_LIST, "BEST", "ADDR", True, True)
    assert build_reference("fib").regions[0].policy == Policy(BUDDY_FIB, coalesce=True, split=True)
    for k in REFERENCE_KINDS:
        spec = build_reference(k)
        assert DmmSpec.from_json(spec.dumps()) == spec
    with pytest.raises(DmmError):
        build_reference("XYZ")


def test_spec_invariants():
    p = Policy(SEGREGATED_EXACT)
    with pytest.raises(DmmError):
        DmmSpec((Region(2, math.inf, p),))
    with pytest.raises(DmmError):
        DmmSpec((Region(1, 10, p), Region(11, math.inf, p)))
    with pytest.raises(DmmError):
        DmmSpec((Region(1, 10, p),))
    with pytest.raises(DmmError):
        DmmSpec((Region(1, math.inf, p),), header_bytes=-1)
    with pytest.raises(DmmError):
        DmmSpec(())
    with pytest.raises(DmmError):
        Policy(FREE_LIST)
    with pytest.raises(DmmError):
        Policy(SEGREGATED_POW2, split=True)
    with pytest.raises(DmmError):
        Policy(BUDDY_FIB, fit="FIRST")
    with pytest.raises(DmmError):
        DmmSpec.from_json("{not json")
    with pytest.raises(DmmError):
        DmmSpec.from_json({"regions": [{"lo": 1, "hi": None, "policy": {"kind": "NOPE"}}]})


def test_empty_trace():
    assert replay(build_reference("LEA"), []) == DmmMetrics()


def test_kng_single_alloc():
    m = replay(build_reference("KNG"), [A(1, 100)])
    assert m.peak_memory == 128
    assert (m.splits, m.coalesces, m.allocs, m.sim_time) == (0, 0, 1, 1)
    frag = fragmentation_report(build_reference("KNG"), [A(1, 100)])
    assert frag.internal_bytes == 128 - 100 - 8


def test_exact_has_no_internal_fragmentation():
    trace = random_alloc_trace(random.Random(5), 400)
    assert fragmentation_report(build_reference("EXA"), trace).internal_bytes == 0


def test_replay_errors_name_event():
    with pytest.raises(ReplayError, match="event 2"):
        replay(build_reference("KNG"), [A(1, 8), F(1), F(1)])
    with pytest.raises(ReplayError, match="event 0"):
        replay(build_reference("KNG"), [F(3)])
    with pytest.raises(ReplayError, match="event 1"):
        debug_replay(build_reference("KNG"), [A(1, 8), A(1, 8)])


def test_segregated_reuse_costs_one_access():
    m = replay(build_reference("EXA"), [A(1, 40), F(1), A(2, 40)])
    assert (m.accesses, m.peak_memory, m.sim_time) == (1, 48, 4)


def test_binary_buddy_split_and_coalesce():
    spec = DmmSpec((Region(1, math.inf, Policy(BUDDY_BINARY, coalesce=True, split=True)),),
                   growth_quantum=256)
    m = replay(spec, [A(1, 20), F(1)])
    # 256 -> 128 -> 64 -> 32: three splits; freeing walks all three buddies back up
    assert (m.splits, m.coalesces, m.peak_memory) == (3, 3, 256)
    heap = Heap(spec)
    heap.apply(0, A(1, 20))
    assert [(a, s, live) for a, s, live, _ in heap.layout()] == [
        (0, 32, True), (32, 32, False), (64, 64, False), (128, 128, False)]


def test_fib_classes_and_split_sizes():
    assert buddy_sizes(True, 400) == [16, 32, 48, 80, 128, 208, 336, 544]
    assert buddy_sizes(False, 100) == [16, 32, 64, 128]
    spec = DmmSpec((Region(1, math.inf, Policy(BUDDY_FIB, coalesce=True, split=True)),), growth_quantum=128)
    heap = Heap(spec)
    heap.apply(0, A(1, 10))
    # 128 -> 80 + 48, keep the 48; 48 -> 32 + 16, the 16 is too small so keep the 32
    assert [(a, s, live) for a, s, live, _ in heap.layout()] == [
        (0, 80, False), (80, 32, True), (112, 16, False)]


@pytest.mark.parametrize("kind", REFERENCE_KINDS)
def test_references_match_oracle(kind):
    spec = build_reference(kind)
    for seed in range(20):
        trace = random_alloc_trace(random.Random(seed), 50 if seed < 10 else 500)
        got = replay(spec, trace)
        want, frag = oracle_metrics(spec, trace)
        assert got.to_dict() == want
        fr = fragmentation_report(spec, trace)
        assert (fr.internal_bytes, fr.external_bytes, fr.peak) == \
            (frag["internal_bytes"], frag["external_bytes"], frag["peak"])


@pytest.mark.parametrize("policy", POLICY_MENU, ids=lambda p: json.dumps(p.to_json(), sort_keys=True))
def test_every_policy_matches_oracle(policy):
    for quantum in (64, 4096):
        spec = DmmSpec((Region(1, 100, Policy(SEGREGATED_POW2)), Region(100, math.inf, policy)),
                       header_bytes=8, growth_quantum=quantum)
        single = DmmSpec((Region(1, math.inf, policy),), header_bytes=4, growth_quantum=quantum)
        for seed in range(4):
            trace = random_alloc_trace(random.Random(seed), 300, max_size=700)
            for s in (spec, single):
                assert replay(s, trace).to_dict() == oracle_metrics(s, trace)[0]
                debug_replay(s, trace)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from(POLICY_MENU), st.integers(1, 3000))
def test_random_two_region_specs_match_oracle(seed, policy, cut):
    rng = random.Random(seed)
    spec = DmmSpec((Region(1, cut + 1, rng.choice(POLICY_MENU)), Region(cut + 1, math.inf, policy)),
                   header_bytes=rng.choice([0, 8, 16]), growth_quantum=rng.choice([32, 512, 4096]))
    trace = random_alloc_trace(rng, 200, max_size=4000)
    assert replay(spec, trace).to_dict() == oracle_metrics(spec, trace)[0]


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from(REFERENCE_KINDS))
def test_debug_replay_checks_every_event(seed, kind):
    trace = random_alloc_trace(random.Random(seed), 200)
    spec = build_reference(kind)
    assert debug_replay(spec, trace) == replay(spec, trace)


def test_no_split_or_coalesce_when_disabled():
    trace = random_alloc_trace(random.Random(1), 500)
    for p in POLICY_MENU:
        if not (p.split or p.coalesce):
            m = replay(DmmSpec((Region(1, math.inf, p),)), trace)
            assert m.splits == 0 and m.coalesces == 0


def test_segregated_time_independent_of_free_order():
    allocs = [A(i, s) for i, s in enumerate([24, 24, 72, 24, 72, 1000])]
    fwd = allocs + [F(i) for i in range(6)]
    rev = allocs + [F(i) for i in reversed(range(6))]
    for k in ("KNG", "EXA"):
        assert replay(build_reference(k), fwd).sim_time == replay(build_reference(k), rev).sim_time


def test_peak_covers_live_payload():
    trace = random_alloc_trace(random.Random(9), 1000)
    live, most, sizes = 0, 0, {}
    for ev in trace:
        if ev.op == "alloc":
            sizes[ev.id] = ev.size
            live += ev.size
        else:
            live -= sizes.pop(ev.id)
        most = max(most, live)
    for k in REFERENCE_KINDS:
        assert replay(build_reference(k), trace).peak_memory >= most


def test_coalescing_reduces_external_fragmentation():
    trace = []
    for i in range(0, 200, 2):
        trace += [A(i, 40), A(i + 1, 200)]
        if i >= 4:
            trace += [F(i - 4)]
    trace += [F(i) for i in range(1, 200, 4)]
    trace += [A(1000, 30)]
    on = DmmSpec((Region(1, math.inf, Policy(FREE_LIST, "FIRST", "ADDR", coalesce=True, split=True)),))
    off = DmmSpec((Region(1, math.inf, Policy(FREE_LIST, "FIRST", "ADDR", coalesce=False, split=True)),))
    assert fragmentation_report(on, trace).external_bytes <= fragmentation_report(off, trace).external_bytes


def test_cost_weights_are_configurable():
    trace = random_alloc_trace(random.Random(3), 300)
    spec = build_reference("LEA")
    m = replay(spec, trace)
    w = replay(spec, trace, CostWeights(inspect=0, base=0, split=0, coalesce=1))
    assert w.sim_time == m.coalesces


def test_replayer_memo_matches_fresh_replays():
    trace = random_alloc_trace(random.Random(4), 500)
    rp = Replayer(trace)
    for k in REFERENCE_KINDS * 2:
        assert rp.metrics(build_reference(k)) == replay(build_reference(k), trace)


def test_event_log():
    trace = parse_alloc_trace("A 1 100\nA 2 20\nF 1\n")
    rows = event_log(build_reference("LEA"), trace).splitlines()
    assert rows[0] == ",".join(EVENT_LOG_HEADER)
    assert len(rows) == 4
    buf = io.StringIO()
    debug_replay(build_reference("FIB"), trace, buf)
    assert buf.getvalue().count("\n") == 4
