import io

import numpy as np
import pytest
from hypothesis import given, strategies as st

from flexdemand import ingest as ig
from flexdemand.errors import DimensionError, OrderingError, SchemaError

SCHEMA = {"timestamp": "time", "columns": {"temp": "temp"}}


def test_parse_three_rows():
    text = "time,temp\n0,1.0\n300,2.0\n600,3.0\n"
    (s,), skipped = ig.parse_csv(io.StringIO(text), SCHEMA)
    assert len(s) == 3 and np.array_equal(s.values, [1, 2, 3])
    assert skipped == {"temp": 0, "timestamp": 0}


def test_blank_value_skipped_and_counted():
    text = "time,temp\n0,1.0\n300,\n600,3.0\n"
    (s,), skipped = ig.parse_csv(io.StringIO(text), SCHEMA)
    assert len(s) == 2 and skipped["temp"] == 1


def test_bytes_and_non_numeric():
    text = b"time,temp\n0,1.0\n300,nan\n600,abc\n900,4\n"
    (s,), skipped = ig.parse_csv(text, SCHEMA)
    assert np.array_equal(s.times, [0, 900]) and skipped["temp"] == 2


def test_out_of_order_row_index():
    text = "time,temp\n0,1\n600,2\n300,3\n"
    with pytest.raises(OrderingError) as exc:
        ig.parse_csv(io.StringIO(text), SCHEMA)
    assert exc.value.row == 2


@pytest.mark.parametrize("text", ["", "time,time\n0,1\n", "time,\n0,1\n", "t,temp\n0,1\n"])
def test_malformed_header(text):
    with pytest.raises(SchemaError):
        ig.parse_csv(io.StringIO(text), SCHEMA)


def test_iso_timestamps_normalized_to_utc():
    assert ig.parse_timestamp("1970-01-01T01:00:00Z") == 3600.0
    assert ig.parse_timestamp("1970-01-01T02:00:00+01:00") == 3600.0
    assert ig.parse_timestamp("1970-01-01T01:00:00") == 3600.0
    # across a DST change the offsets differ but UTC spacing is just an hour
    a = ig.parse_timestamp("2024-03-31T01:30:00+01:00")
    b = ig.parse_timestamp("2024-03-31T03:30:00+02:00")
    assert b - a == 3600.0
    assert ig.format_timestamp(3600.0) == "1970-01-01T01:00:00Z"


def test_interpolation_example():
    s = ig.SignalSeries("x", [0, 600], [0, 10])
    g, b = ig.resample(s, 300, 600)
    assert np.array_equal(g.times, [0, 300, 600]) and np.array_equal(g.values, [0, 5, 10])
    assert b == []


def test_long_gap_splits_segments():
    s = ig.SignalSeries("x", [0, 300, 1200, 1500], [0, 1, 2, 3])
    g, b = ig.resample(s, 300, 600)
    assert np.array_equal(g.times, [0, 300, 1200, 1500])
    assert b == [2]


def test_hourly_outdoor_temperature_piecewise_linear():
    t = np.arange(0, 4 * 3600 + 1, 3600.0)
    v = np.array([0.0, 6.0, 3.0, 3.0, -9.0])
    g, _ = ig.resample(ig.SignalSeries("t_out", t, v), 300, 3600)
    assert g.times.size == 49
    assert np.allclose(g.values, np.interp(g.times, t, v))
    assert g.values[6] == pytest.approx(3.0)


def test_hold_method_for_settings():
    s = ig.SignalSeries("fan", [0, 200, 700], [1, 3, 5])
    g, _ = ig.resample(s, 300, 600, method="hold")
    assert np.array_equal(g.values, [1, 3, 3])


def test_empty_series():
    g, b = ig.resample(ig.SignalSeries("x", [], []), 300, 600)
    assert len(g) == 0 and b == []


def test_resample_arguments():
    s = ig.SignalSeries("x", [0, 300], [0, 1])
    with pytest.raises(ValueError):
        ig.resample(s, 300, 200)
    with pytest.raises(ValueError):
        ig.resample(s, 0, 600)


@given(st.lists(st.floats(-50, 50), min_size=1, max_size=60), st.integers(-5, 5))
def test_resample_idempotent_on_grid(values, k0):
    t = (k0 + np.arange(len(values))) * 300.0
    s = ig.SignalSeries("x", t, values)
    g, b = ig.resample(s, 300, 600)
    assert np.array_equal(g.times, s.times) and np.array_equal(g.values, s.values) and b == []


@given(st.lists(st.floats(1, 1500), min_size=2, max_size=40))
def test_no_fill_across_long_gaps(steps):
    t = np.cumsum(steps)
    s = ig.SignalSeries("x", t, np.sin(t))
    g, _ = ig.resample(s, 300, 600)
    for tg in g.times:
        j = np.searchsorted(t, tg)
        if j < t.size and abs(t[j] - tg) < 1e-6:
            continue
        # the raw samples bracketing a filled grid point are at most gap_limit apart
        assert t[j] - t[j - 1] <= 600.0


def _gridded(name, k, values=None):
    k = np.asarray(k)
    return ig.SignalSeries(name, k * 300.0, np.arange(k.size, dtype=float) if values is None else values)


def test_align_full_overlap():
    ins = [_gridded(f"u{i}", range(100)) for i in range(5)]
    outs = [_gridded(f"y{i}", range(100)) for i in range(4)]
    (tab,) = ig.align(ins, outs)
    assert len(tab) == 100 and tab.u.shape == (100, 5) and tab.y.shape == (100, 4)


def test_align_shorter_channel():
    ins = [_gridded(f"u{i}", range(100)) for i in range(5)]
    outs = [_gridded(f"y{i}", range(100 if i else 90)) for i in range(4)]
    (tab,) = ig.align(ins, outs)
    assert len(tab) == 90


def test_align_disjoint_segments():
    k = list(range(20)) + list(range(30, 60))
    ins = [_gridded(f"u{i}", k) for i in range(5)]
    outs = [_gridded(f"y{i}", k) for i in range(4)]
    tabs = ig.align(ins, outs)
    assert [len(t) for t in tabs] == [20, 30]
    assert [t.segment_id for t in tabs] == [0, 1]
    assert tabs[1].t0 == 30 * 300.0


def test_align_channel_count():
    with pytest.raises(DimensionError):
        ig.align([_gridded("u", range(5))] * 4, [_gridded("y", range(5))] * 4)


def test_align_never_fabricates():
    rng = np.random.default_rng(0)
    chans = []
    for i in range(9):
        k = np.sort(rng.choice(200, 150, replace=False))
        chans.append(_gridded(f"c{i}", k, rng.standard_normal(150)))
    tabs = ig.align(chans[:5], chans[5:])
    for tab in tabs:
        ks = np.round(tab.times / 300.0).astype(int)
        for c, s in enumerate(chans):
            lookup = dict(zip(np.round(s.times / 300.0).astype(int).tolist(), s.values))
            col = tab.u[:, c] if c < 5 else tab.y[:, c - 5]
            assert all(lookup[k] == v for k, v in zip(ks.tolist(), col))


def test_iotable_csv_round_trip():
    rng = np.random.default_rng(1)
    tabs = [ig.IOTable(3000.0 * (j + 1) * 10, 300.0, rng.standard_normal((7, 5)),
                       rng.standard_normal((7, 4)), j) for j in range(2)]
    buf = io.StringIO()
    ig.write_iotables(tabs, buf)
    head = buf.getvalue().splitlines()[0]
    assert head == "t,u1,u2,u3,u4,u5,y1,y2,y3,y4,segment"
    back = ig.read_iotables(io.StringIO(buf.getvalue()))
    for a, b in zip(tabs, back):
        assert a.t0 == b.t0 and a.period == b.period
        assert np.array_equal(a.u, b.u) and np.array_equal(a.y, b.y)


def test_tables_from_csv_direct_layout():
    t = np.arange(0, 300 * 50, 300.0)
    rows = ["time,a,b,c"] + [f"{x},{x / 300},{2 * x / 300},{-x / 300}" for x in t]
    rows.pop(20)  # a 10-minute hole, repaired by interpolation
    cfg = {"timestamp": "time", "inputs": ["a", "b"], "outputs": ["c"], "n_inputs": 2, "n_outputs": 1}
    tabs, extras, skipped = ig.tables_from_csv(io.StringIO("\n".join(rows)), cfg)
    assert len(tabs) == 1 and len(tabs[0]) == 50 and extras == {}
    assert np.allclose(tabs[0].u[:, 0], np.arange(50))


def test_tables_from_csv_settings_layout():
    t = np.arange(0, 3600 * 3, 300.0)
    lines = ["ts,on1,fan1,set1,vol1,out,kwh"]
    for x in t:
        e = "1.5" if x % 3600 == 0 else ""
        lines.append(f"{x},1,3,21,26,{-2.0},{e}")
    cfg = {"timestamp": "ts", "units": [{"on": "on1", "fan": "fan1", "t_set": "set1", "t_volume": "vol1"}],
           "t_out": "out", "energy": "kwh", "gap_limit_overrides": {"out": 3600}}
    tabs, extras, _ = ig.tables_from_csv(io.StringIO("\n".join(lines)), cfg)
    (tab,) = tabs
    assert tab.u.shape == (36, 2) and tab.y.shape == (36, 1)
    assert np.allclose(tab.u[:, 0], 0.0)  # t_set - t_volume = -5 -> zero feature
    assert len(extras["on"]) == 1 and np.array_equal(extras["energy"].values, [1.5, 1.5, 1.5])


def test_tables_from_csv_bad_column_map():
    with pytest.raises(SchemaError):
        ig.tables_from_csv(io.StringIO("time,a\n0,1\n"), {"timestamp": "time"})
