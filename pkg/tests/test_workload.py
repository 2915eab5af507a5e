import pytest
from hypothesis import given, strategies as st

from ppbsim.workload import (
    TraceError,
    TraceRecord,
    WorkloadParams,
    format_trace,
    gen_race,
    gen_synthetic,
    load_trace,
    parse_trace,
    save_trace,
)


def test_record_line_format():
    assert TraceRecord(10, 3, "W", 0x1000).line() == "10 3 W 0x1000"


def test_bad_op_reports_line_number():
    with pytest.raises(TraceError, match=":1:"):
        parse_trace("10 3 X 0x1000\n")


@pytest.mark.parametrize("text", ["1 2 R\n", "a 0 R 0x0\n", "1 0 R zz\n", "-1 0 R 0x0\n"])
def test_malformed_lines(text):
    with pytest.raises(TraceError):
        parse_trace("0 0 R 0x0\n" + text)


def test_ticks_must_not_go_backwards_per_core():
    with pytest.raises(TraceError, match=":2:"):
        parse_trace("5 0 R 0x0\n4 0 R 0x40\n")
    assert len(parse_trace("5 0 R 0x0\n4 1 R 0x40\n")) == 2


def test_comments_and_blank_lines():
    assert parse_trace("# header\n\n1 0 R 0x40  # tail\n") == [TraceRecord(1, 0, "R", 0x40)]


records = st.lists(st.tuples(st.integers(0, 15), st.sampled_from("RW"), st.integers(0, 2**40)), max_size=50)


@given(records)
def test_roundtrip(recs):
    trace = [TraceRecord(i, c, op, a) for i, (c, op, a) in enumerate(recs)]
    assert parse_trace(format_trace(trace)) == trace


def test_save_load(tmp_path):
    trace = gen_synthetic("uniform", seed=1, cores=2, refs_per_core=20)
    path = tmp_path / "t.trc"
    save_trace(trace, path)
    assert load_trace(path) == trace


@pytest.mark.parametrize("pattern", ["uniform", "hotspot", "producer_consumer", "private"])
def test_generators_are_deterministic(pattern, tmp_path):
    a = format_trace(gen_synthetic(pattern, seed=9, cores=4, refs_per_core=100))
    b = format_trace(gen_synthetic(pattern, seed=9, cores=4, refs_per_core=100))
    c = format_trace(gen_synthetic(pattern, seed=10, cores=4, refs_per_core=100))
    assert a == b
    if pattern != "producer_consumer":
        assert a != c


def test_private_regions_are_disjoint_and_local():
    trace = gen_synthetic("private", seed=1, cores=4, refs_per_core=200, footprint=64 * 64)
    owners = {}
    for r in trace:
        owners.setdefault(r.addr, set()).add(r.core)
        assert (r.addr // 64) % 4 == r.core
    assert all(len(s) == 1 for s in owners.values())


def test_hotspot_fraction():
    trace = gen_synthetic("hotspot", seed=1, cores=4, refs_per_core=2000, hot_fraction=0.5,
                          hot_blocks=8, footprint=64 * 4096)
    hot = sum(1 for r in trace if r.addr < 8 * 64)
    assert 0.45 < hot / len(trace) < 0.55


def test_hotspot_all_hot_single_block_alternating_writes():
    trace = gen_synthetic("hotspot", seed=1, cores=2, refs_per_core=10, hot_fraction=1.0,
                          hot_blocks=1, write_fraction=1.0)
    assert {r.addr for r in trace} == {0}


def test_producer_consumer_reads_what_neighbour_wrote():
    trace = gen_synthetic("producer_consumer", seed=1, cores=4, refs_per_core=64)
    written = {}
    for r in trace:
        if r.op == "W":
            written.setdefault(r.addr, set()).add(r.core)
    for r in trace:
        if r.op == "R":
            assert (r.core - 1) % 4 in written[r.addr]


def test_write_fraction_extremes():
    assert all(r.op == "R" for r in gen_synthetic("uniform", seed=1, cores=2, write_fraction=0.0))
    assert all(r.op == "W" for r in gen_synthetic("uniform", seed=1, cores=2, write_fraction=1.0))


def test_ticks_sorted_and_gap():
    trace = gen_synthetic("uniform", seed=1, cores=3, refs_per_core=5, issue_gap=7)
    assert [r.tick for r in trace] == sorted(r.tick for r in trace)
    assert {r.tick for r in trace} == {0, 7, 14, 21, 28}


@pytest.mark.parametrize("bad", [dict(footprint=100), dict(write_fraction=1.5), dict(cores=0)])
def test_params_validated(bad):
    with pytest.raises(ValueError):
        gen_synthetic("uniform", WorkloadParams(**bad))


def test_unknown_pattern():
    with pytest.raises(ValueError):
        gen_synthetic("zipf")


def test_race_trace_shape():
    trace = gen_race(seed=3, rounds=5)
    assert len(trace) == 20
    per_block = {}
    for r in trace:
        per_block.setdefault(r.addr, []).append(r)
    for recs in per_block.values():
        assert [r.op for r in recs] == ["R", "R", "R", "W"]
        assert len({r.core for r in recs}) == 4
