import json
from pathlib import Path

import pytest
from hypothesis import given, strategies as st

from cpfl.errors import InvalidInputError, TraceParseError
from cpfl.traces import (
    MAX_NETWORK_BPS,
    MAX_SEC_PER_BATCH,
    MIN_NETWORK_BPS,
    MIN_SEC_PER_BATCH,
    DeviceProfile,
    assign_profiles,
    client_round_duration,
    gen_traces,
    load_traces,
    save_traces,
)

GOLDEN = Path(__file__).parent / "golden" / "assign_m4_seed7.json"


def write(tmp_path, text: str) -> Path:
    path = tmp_path / "traces.csv"
    path.write_text(text)
    return path


def test_load_single_row(tmp_path):
    path = write(tmp_path, "device_id,network_bytes_per_sec,compute_sec_per_batch\nd0,26000000,0.9\n")
    (profile,) = load_traces(path)
    assert profile == DeviceProfile("d0", 0.9, 26_000_000.0)


def test_load_empty_data_section(tmp_path):
    path = write(tmp_path, "device_id,network_bytes_per_sec,compute_sec_per_batch\n")
    assert load_traces(path) == []


@pytest.mark.parametrize(
    "row, reason",
    [("d1,0,1.0", "network"), ("d1,100,-2", "compute"), ("d1,abc,1", "abc"), ("d1,100", "3 fields")],
)
def test_bad_row_reports_line(tmp_path, row, reason):
    path = write(tmp_path, f"device_id,network_bytes_per_sec,compute_sec_per_batch\nd0,1000,1\n{row}\n")
    with pytest.raises(TraceParseError) as info:
        load_traces(path)
    assert info.value.line == 3
    assert reason in str(info.value)


def test_missing_file_and_bad_header(tmp_path):
    with pytest.raises(TraceParseError):
        load_traces(tmp_path / "nope.csv")
    with pytest.raises(TraceParseError) as info:
        load_traces(write(tmp_path, "a,b,c\n"))
    assert info.value.line == 1


def test_generated_profiles_stay_in_published_ranges():
    profiles = gen_traces(1000, seed=0)
    for p in profiles:
        assert MIN_NETWORK_BPS <= p.network_bytes_per_sec <= MAX_NETWORK_BPS
        assert MIN_SEC_PER_BATCH <= p.compute_sec_per_batch <= MAX_SEC_PER_BATCH
    bw = [p.network_bytes_per_sec for p in profiles]
    cpu = [p.compute_sec_per_batch for p in profiles]
    assert min(bw) <= MIN_NETWORK_BPS * 1.05 and max(bw) >= MAX_NETWORK_BPS * 0.95
    assert min(cpu) <= MIN_SEC_PER_BATCH * 1.05 and max(cpu) >= MAX_SEC_PER_BATCH * 0.95


def test_generation_is_deterministic():
    assert gen_traces(20, seed=4) == gen_traces(20, seed=4)


def test_trace_file_round_trip_is_idempotent(tmp_path):
    first, second = tmp_path / "a.csv", tmp_path / "b.csv"
    save_traces(first, gen_traces(30, seed=1))
    save_traces(second, load_traces(first))
    assert first.read_bytes() == second.read_bytes()
    assert load_traces(first) == gen_traces(30, seed=1)


def test_assign_singleton_and_determinism():
    only = DeviceProfile("x", 1.0, 1e6)
    assert set(assign_profiles(9, [only], seed=3).values()) == {only}
    pool = gen_traces(5, seed=0)
    assert assign_profiles(50, pool, seed=2) == assign_profiles(50, pool, seed=2)
    with pytest.raises(InvalidInputError):
        assign_profiles(3, [], seed=0)


def test_assignment_matches_golden_file():
    pool = [DeviceProfile("slow", 11.9, 130_000.0), DeviceProfile("fast", 0.9, 26_000_000.0)]
    got = {str(k): p.device_id for k, p in assign_profiles(4, pool, seed=7).items()}
    assert got == json.loads(GOLDEN.read_text())


def test_round_duration_examples():
    assert client_round_duration(DeviceProfile("a", 2.0, 1e6), 0, 5) == 10.0
    fast = DeviceProfile("f", 0.9, 26e6)
    assert client_round_duration(fast, 354304, 0) == pytest.approx(2 * 354304 / 26e6, rel=1e-15)
    assert client_round_duration(fast, 354304, 0) == pytest.approx(0.02726, abs=1e-5)
    slowest = DeviceProfile("s", MAX_SEC_PER_BATCH, MIN_NETWORK_BPS)
    assert client_round_duration(slowest, 0, 1) == 11.9


positive = st.floats(1e-3, 1e8, allow_nan=False)


@given(cpu=positive, bw=positive, size=st.integers(0, 10**8), batches=st.integers(0, 1000),
       extra_bytes=st.integers(0, 10**6), extra_batches=st.integers(0, 50), faster=st.floats(1.0, 100.0))
def test_duration_monotonicity(cpu, bw, size, batches, extra_bytes, extra_batches, faster):
    p = DeviceProfile("p", cpu, bw)
    base = client_round_duration(p, size, batches)
    assert client_round_duration(p, size + extra_bytes, batches) >= base
    assert client_round_duration(p, size, batches + extra_batches) >= base
    assert client_round_duration(DeviceProfile("q", cpu, bw * faster), size, batches) <= base
    if batches >= 1:
        assert base > 0
