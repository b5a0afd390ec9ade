import io
import logging
import random

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nddsize import ghr_sim
from nddsize.ingestion import (
    COLUMNS, CarFollowingEvent, ConfigurationError, SampleRecord, ScenarioRules,
    chronological, drivers_below_floor, extract_events, parse_log, pool_matrix,
    pool_variable, write_log,
)

HEADER = ",".join(COLUMNS)
RULES = ScenarioRules()


def rec(t, v_e=20.0, delta_d=30.0, lane=False, cut=False, a_e=0.0, delta_v=0.0,
        driver="d1", trip="t1"):
    return SampleRecord(t, v_e, a_e, delta_v, delta_d, lane, cut, driver, trip)


def run(seconds, start=0.0, rate=10, **kw):
    return [rec(round(start + i / rate, 9), **kw) for i in range(round(seconds * rate))]


def to_text(records):
    buf = io.StringIO()
    write_log(records, buf)
    return buf.getvalue()


# -- parse_log ---------------------------------------------------------------

def test_single_valid_row():
    out = parse_log(HEADER + "\n0.0,d1,t1,20,0,0,30,0,0\n")
    assert out.errors == []
    assert out.records == [SampleRecord(0.0, 20.0, 0.0, 0.0, 30.0, False, False, "d1", "t1")]


def test_bad_numeric_row_reported_with_line():
    text = HEADER + "\n0.0,d1,t1,20,0,0,30,0,0\n0.1,d1,t1,abc,0,0,30,0,0\n0.2,d1,t1,21,0,0,30,0,0\n"
    out = parse_log(text)
    assert [r.timestamp for r in out.records] == [0.0, 0.2]
    assert out.n_errors == 1
    assert out.errors[0].line == 3
    assert "v_e" in out.errors[0].message


@pytest.mark.parametrize("cell", ["nan", "inf", ""])
def test_nonfinite_or_missing_required_numbers_are_row_errors(cell):
    out = parse_log(HEADER + f"\n0.0,d1,t1,{cell},0,0,30,0,0\n")
    assert out.records == [] and out.n_errors == 1


def test_missing_required_column_is_fatal():
    with pytest.raises(ConfigurationError, match="a_e"):
        parse_log("timestamp,driver_id,trip_id,v_e,delta_v,delta_d\n0,d,t,1,0,3\n")


def test_flag_columns_optional_and_empty_target_is_none():
    out = parse_log("timestamp,driver_id,trip_id,v_e,a_e,delta_v,delta_d\n0,d,t,10,0,,\n")
    r = out.records[0]
    assert r.delta_d is None and r.delta_v is None
    assert not r.lane_change and not r.cut_in


def test_column_mapping_and_tab_delimiter():
    names = {"timestamp": "time", "v_e": "speed", "delta_d": "range"}
    header = [names.get(c, c) for c in COLUMNS]
    text = "\t".join(header) + "\n1.5\tx\ty\t12\t0.1\t-1\t40\t0\t1\n"
    r = parse_log(text, column_map=names).records[0]
    assert (r.timestamp, r.v_e, r.delta_d, r.cut_in) == (1.5, 12.0, 40.0, True)


def test_unknown_mapping_key_rejected():
    with pytest.raises(ConfigurationError):
        parse_log(HEADER + "\n", column_map={"speed": "v"})


def test_empty_stream_rejected():
    with pytest.raises(ConfigurationError):
        parse_log("")


def test_bytes_stream_accepted():
    out = parse_log(io.BytesIO((HEADER + "\n0.0,d1,t1,20,0,0,30,0,0\n").encode()))
    assert len(out.records) == 1


def test_records_grouped_by_driver_and_trip_in_file_order():
    rows = [(0.0, "a", "1"), (0.0, "b", "1"), (0.1, "a", "1"), (0.1, "b", "1"), (0.0, "a", "2")]
    text = HEADER + "\n" + "".join(f"{t},{d},{tr},20,0,0,30,0,0\n" for t, d, tr in rows)
    got = [(r.timestamp, r.driver_id, r.trip_id) for r in parse_log(text).records]
    assert got == [(0.0, "a", "1"), (0.1, "a", "1"), (0.0, "b", "1"), (0.1, "b", "1"), (0.0, "a", "2")]


def test_synthetic_rows_round_trip():
    recs = ghr_sim.simulate(ghr_sim.GhrParams(), ghr_sim.LeadProfile.constant(20.0),
                            ghr_sim.InitialState(18.0, 25.0), duration=0.3, noise_std=0.3, seed=1)
    assert len(recs) == 3
    back = parse_log(to_text(recs)).records
    for a, b in zip(recs, back):
        for name in ("timestamp", "v_e", "a_e", "delta_v", "delta_d"):
            assert getattr(b, name) == pytest.approx(getattr(a, name), abs=1e-9)
    assert back == recs


# -- extract_events ----------------------------------------------------------

def test_single_uninterrupted_run():
    (ev,) = extract_events(run(400))
    assert ev.duration == pytest.approx(400.0)
    assert len(ev) == 4000


def test_cut_in_splits_and_both_fragments_discarded():
    recs = [rec(r.timestamp, cut=29.0 <= r.timestamp < 31.0) for r in run(60)]
    assert extract_events(recs) == []


def test_empty_input():
    assert extract_events([]) == []


@pytest.mark.parametrize("field,value,kept", [
    ("v_e", 5.0, False), ("v_e", 5.0001, True),
    ("delta_d", 120.0, True), ("delta_d", 120.0001, False),
    ("delta_d", None, False), ("delta_d", -0.5, False),
    ("lane", True, False), ("cut", True, False),
])
def test_sample_predicates(field, value, kept):
    assert RULES.accepts(rec(0.0, **{field: value})) is kept


def test_duration_floor_is_inclusive():
    assert len(extract_events(run(30))) == 1
    assert extract_events(run(29.9)) == []


def test_gap_larger_than_two_periods_splits():
    recs = run(40) + run(40, start=40.25)
    evs = extract_events(recs)
    assert [len(e) for e in evs] == [400, 400]
    # a gap of exactly two periods keeps the run together
    assert len(extract_events(run(40) + run(40, start=40.1))) == 1


def test_unsorted_input_sorted_within_trip():
    recs = run(35)
    random.Random(0).shuffle(recs)
    (ev,) = extract_events(recs)
    assert [s.timestamp for s in ev.samples] == sorted(s.timestamp for s in ev.samples)


def test_scripted_lane_change_gives_two_events_split_there():
    lead = ghr_sim.LeadProfile.constant(
        20.0, [ghr_sim.Interruption("lane_change", 50.0, 52.0)])
    recs = ghr_sim.simulate(ghr_sim.GhrParams(), lead, ghr_sim.InitialState(20.0, 30.0),
                            duration=100.0)
    first, second = extract_events(recs)
    assert first.end == pytest.approx(49.9)
    assert second.start == pytest.approx(52.0)
    assert len(first) == 500 and len(second) == 480


def test_floor_is_a_warning_not_a_filter(caplog):
    with caplog.at_level(logging.WARNING, logger="nddsize.ingestion"):
        evs = extract_events(run(40))
    assert len(evs) == 1
    assert "fewer than 300" in caplog.text
    assert drivers_below_floor(evs) == ["d1"]
    assert drivers_below_floor(evs, ScenarioRules(min_events_per_driver=1)) == []


@st.composite
def streams(draw):
    n = draw(st.integers(300, 2500))
    # runs of good samples separated by bad stretches of >= 2 samples
    out, i = [], 0
    while i < n:
        good = draw(st.integers(1, 600))
        for _ in range(min(good, n - i)):
            out.append(rec(round(i / 10, 9), delta_d=draw(st.sampled_from([10.0, 60.0, 120.0]))))
            i += 1
        bad = draw(st.integers(2, 5))
        kind = draw(st.sampled_from(["cut", "lane", "far", "slow", "none", "gap"]))
        for _ in range(min(bad, n - i)):
            tt = round(i / 10, 9)
            if kind == "cut":
                out.append(rec(tt, cut=True))
            elif kind == "lane":
                out.append(rec(tt, lane=True))
            elif kind == "far":
                out.append(rec(tt, delta_d=150.0))
            elif kind == "slow":
                out.append(rec(tt, v_e=3.0))
            elif kind == "none":
                out.append(rec(tt, delta_d=None))
            i += 1
    return out


@settings(max_examples=40, deadline=None)
@given(streams())
def test_event_invariants(recs):
    evs = extract_events(recs)
    assert sum(len(e) for e in evs) <= len(recs)
    for e in evs:
        assert e.duration >= RULES.min_duration - 1e-9
        assert all(RULES.accepts(s) for s in e.samples)
        ts = np.array([s.timestamp for s in e.samples])
        assert np.all(np.diff(ts) <= 0.2 + 1e-9)
    # re-extracting the emitted samples reproduces the events
    flat = [s for e in evs for s in e.samples]
    assert extract_events(flat) == evs
    for e in evs:
        assert extract_events(list(e.samples)) == [e]


# -- pooling -----------------------------------------------------------------

def _event(start, n, driver="d1", trip="t1", base=0.0):
    samples = tuple(rec(round(start + i / 10, 9), v_e=base + i, driver=driver, trip=trip)
                    for i in range(n))
    return CarFollowingEvent(driver, trip, samples, n / 10)


def test_pool_length_is_additive():
    evs = [_event(0, 300), _event(100, 300)]
    assert pool_variable(evs, "v_e").shape == (600,)


def test_single_event_pools_verbatim():
    e = _event(0, 300, base=7.0)
    np.testing.assert_array_equal(pool_variable([e], "v_e"), e.column("v_e"))


def test_shuffled_events_pool_chronologically():
    evs = [_event(100 * k, 300, trip=f"t{k}", base=1000.0 * k) for k in range(6)]
    shuffled = evs[:]
    random.Random(3).shuffle(shuffled)
    np.testing.assert_array_equal(pool_variable(shuffled, "v_e"), pool_variable(evs, "v_e"))
    assert chronological(shuffled) == evs


def test_pool_rejects_unknown_variable_and_empty():
    with pytest.raises(ConfigurationError):
        pool_variable([_event(0, 300)], "speed")
    with pytest.raises(ValueError):
        pool_variable([], "v_e")


def test_pool_matrix_columns_match_vectors():
    evs = [_event(50, 300, trip="b", base=5.0), _event(0, 300, trip="a")]
    mat = pool_matrix(evs, ("v_e", "delta_d"))
    assert mat.shape == (600, 2)
    np.testing.assert_array_equal(mat[:, 0], pool_variable(evs, "v_e"))
