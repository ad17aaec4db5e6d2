"""Raw CSV ingestion, resampling onto a fixed grid, and input/output alignment.

Timestamps are handled as float seconds since the Unix epoch (UTC). ISO-8601
strings with an offset are converted to UTC by the parser; strings without an
offset are taken to be UTC already.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass
from datetime import datetime, timezone

import numpy as np

from .errors import DimensionError, OrderingError, SchemaError

__all__ = [
    "SignalSeries",
    "IOTable",
    "parse_timestamp",
    "format_timestamp",
    "parse_csv",
    "resample",
    "align",
    "write_iotables",
    "read_iotables",
    "load_column_map",
    "tables_from_csv",
]

DEFAULT_PERIOD = 300.0
DEFAULT_GAP_LIMIT = 600.0


@dataclass(frozen=True)
class SignalSeries:
    name: str
    times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float).reshape(-1)
        v = np.asarray(self.values, dtype=float).reshape(-1)
        if t.shape != v.shape:
            raise DimensionError(f"{self.name}: {t.size} timestamps but {v.size} values")
        if t.size > 1 and np.any(np.diff(t) <= 0):
            raise OrderingError(f"{self.name}: timestamps are not strictly increasing")
        if not np.all(np.isfinite(v)):
            raise ValueError(f"{self.name}: non-finite values")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "values", v)

    def __len__(self):
        return self.times.size


@dataclass(frozen=True)
class IOTable:
    """Contiguous block of aligned samples; ``u`` is ``N x m``, ``y`` is ``N x p``."""

    t0: float
    period: float
    u: np.ndarray
    y: np.ndarray
    segment_id: int = 0

    def __post_init__(self):
        u = np.atleast_2d(np.asarray(self.u, dtype=float))
        y = np.atleast_2d(np.asarray(self.y, dtype=float))
        if u.shape[0] != y.shape[0]:
            raise DimensionError(f"u has {u.shape[0]} rows, y has {y.shape[0]}")
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "y", y)

    def __len__(self):
        return self.u.shape[0]

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.period * np.arange(len(self))


def parse_timestamp(text: str) -> float:
    """ISO-8601 string or epoch seconds -> epoch seconds (UTC)."""
    s = text.strip()
    try:
        return float(s)
    except ValueError:
        pass
    if s.endswith(("Z", "z")):
        s = s[:-1] + "+00:00"
    dt = datetime.fromisoformat(s)
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return dt.timestamp()


def format_timestamp(t: float) -> str:
    dt = datetime.fromtimestamp(t, tz=timezone.utc)
    fmt = "%Y-%m-%dT%H:%M:%S.%fZ" if dt.microsecond else "%Y-%m-%dT%H:%M:%SZ"
    return dt.strftime(fmt)


def _text(stream):
    if isinstance(stream, (bytes, bytearray)):
        return io.StringIO(stream.decode("utf-8"))
    if isinstance(stream, io.TextIOBase) or hasattr(stream, "encoding"):
        return stream
    return io.TextIOWrapper(stream, encoding="utf-8")


def parse_csv(stream, schema: dict):
    """Read one :class:`SignalSeries` per mapped column.

    ``schema`` is ``{"timestamp": <column>, "columns": {<name>: <column>}}``.
    Cells that are blank, non-numeric or non-finite are skipped for that
    channel only; rows whose timestamp cannot be parsed are skipped for every
    channel.

    Returns ``(series, skipped)`` where ``skipped`` maps each channel name
    (and ``"timestamp"``) to the number of dropped cells.

    Raises :class:`SchemaError` for a missing or malformed header and
    :class:`OrderingError` (with ``.row``, the 0-based data row) when a
    timestamp does not increase.
    """
    if "timestamp" not in schema or "columns" not in schema:
        raise SchemaError("schema needs 'timestamp' and 'columns'")
    reader = csv.reader(_text(stream))
    try:
        header = [h.strip() for h in next(reader)]
    except StopIteration:
        raise SchemaError("empty file: no header row") from None
    if len(set(header)) != len(header) or any(not h for h in header):
        raise SchemaError(f"malformed header {header}")
    wanted = {"timestamp": schema["timestamp"], **schema["columns"]}
    missing = [c for c in wanted.values() if c not in header]
    if missing:
        raise SchemaError(f"header lacks mapped columns {missing}")
    t_idx = header.index(schema["timestamp"])
    cols = {name: header.index(col) for name, col in schema["columns"].items()}
    data = {name: ([], []) for name in cols}
    skipped = {name: 0 for name in cols}
    skipped["timestamp"] = 0
    last_t = -math.inf
    for row_no, row in enumerate(reader):
        if not row or all(not c.strip() for c in row):
            continue
        try:
            t = parse_timestamp(row[t_idx])
        except (ValueError, IndexError):
            skipped["timestamp"] += 1
            continue
        if t <= last_t:
            raise OrderingError(f"timestamp at data row {row_no} does not increase", row=row_no)
        last_t = t
        for name, j in cols.items():
            try:
                v = float(row[j])
            except (ValueError, IndexError):
                skipped[name] += 1
                continue
            if not math.isfinite(v):
                skipped[name] += 1
                continue
            data[name][0].append(t)
            data[name][1].append(v)
    series = [SignalSeries(name, np.array(ts), np.array(vs)) for name, (ts, vs) in data.items()]
    return series, skipped


def resample(series: SignalSeries, period: float = DEFAULT_PERIOD,
             gap_limit: float = DEFAULT_GAP_LIMIT, method: str = "linear"):
    """Put ``series`` on the grid of integer multiples of ``period``.

    Raw samples further apart than ``gap_limit`` split the series into
    segments; nothing is filled across such a gap, and grid points inside it
    are left out. ``method`` is ``"linear"`` for interpolation or ``"hold"``
    for zero-order hold (step-valued setting channels).

    Returns ``(grid_series, boundaries)`` where ``boundaries`` lists the output
    indices at which a new segment starts. Since ``gap_limit >= period``,
    every boundary also shows up as a missing grid point.
    """
    if period <= 0:
        raise ValueError("period must be positive")
    if gap_limit < period:
        raise ValueError("gap_limit must be >= period")
    if method not in ("linear", "hold"):
        raise ValueError("method must be 'linear' or 'hold'")
    t, v = series.times, series.values
    if t.size == 0:
        return SignalSeries(series.name, np.empty(0), np.empty(0)), []
    cuts = np.flatnonzero(np.diff(t) > gap_limit) + 1
    out_t, out_v, boundaries = [], [], []
    n_out = 0
    for ts, vs in zip(np.split(t, cuts), np.split(v, cuts)):
        k0 = math.ceil(ts[0] / period - 1e-9)
        k1 = math.floor(ts[-1] / period + 1e-9)
        if k1 < k0:
            continue
        g = np.arange(k0, k1 + 1) * period
        if method == "linear":
            gv = np.interp(g, ts, vs)
        else:
            idx = np.searchsorted(ts, g + 1e-9 * period, side="right") - 1
            gv = vs[np.maximum(idx, 0)]
        if out_t:
            boundaries.append(n_out)
        out_t.append(g)
        out_v.append(gv)
        n_out += g.size
    if not out_t:
        return SignalSeries(series.name, np.empty(0), np.empty(0)), []
    return SignalSeries(series.name, np.concatenate(out_t), np.concatenate(out_v)), boundaries


def _grid_index(s: SignalSeries, period: float) -> np.ndarray:
    k = np.round(s.times / period)
    if np.any(np.abs(k * period - s.times) > 1e-6 * period):
        raise ValueError(f"{s.name} is not on the {period:g} s grid; resample it first")
    return k.astype(np.int64)


def align(inputs, outputs, period: float = DEFAULT_PERIOD,
          n_inputs: int | None = 5, n_outputs: int | None = 4) -> list[IOTable]:
    """Intersect gridded series into contiguous :class:`IOTable` blocks.

    A table covers a maximal run of consecutive grid points at which every
    channel has a value. Pass ``n_inputs=None`` / ``n_outputs=None`` to skip
    the channel-count check.
    """
    if n_inputs is not None and len(inputs) != n_inputs:
        raise DimensionError(f"expected {n_inputs} input channels, got {len(inputs)}")
    if n_outputs is not None and len(outputs) != n_outputs:
        raise DimensionError(f"expected {n_outputs} output channels, got {len(outputs)}")
    channels = list(inputs) + list(outputs)
    if not channels:
        return []
    idx = [_grid_index(s, period) for s in channels]
    common = idx[0]
    for k in idx[1:]:
        common = np.intersect1d(common, k, assume_unique=True)
    if common.size == 0:
        return []
    cols = np.column_stack([s.values[np.searchsorted(k, common)] for s, k in zip(channels, idx)])
    runs = np.split(np.arange(common.size), np.flatnonzero(np.diff(common) > 1) + 1)
    m = len(inputs)
    return [
        IOTable(float(common[r[0]] * period), float(period), cols[r, :m], cols[r, m:], seg)
        for seg, r in enumerate(runs)
    ]


def write_iotables(tables, stream) -> None:
    """CSV with header ``t,u1..um,y1..yp,segment``."""
    tables = list(tables)
    if not tables:
        raise ValueError("no tables to write")
    m, p = tables[0].u.shape[1], tables[0].y.shape[1]
    w = csv.writer(stream, lineterminator="\n")
    w.writerow(["t", *(f"u{i + 1}" for i in range(m)), *(f"y{i + 1}" for i in range(p)), "segment"])
    for tab in tables:
        for t, ur, yr in zip(tab.times, tab.u, tab.y):
            w.writerow([format_timestamp(t), *map(repr, ur.tolist()), *map(repr, yr.tolist()),
                        tab.segment_id])


def read_iotables(stream) -> list[IOTable]:
    reader = csv.reader(_text(stream))
    try:
        header = next(reader)
    except StopIteration:
        raise SchemaError("empty IOTable file") from None
    if header[0] != "t" or header[-1] != "segment":
        raise SchemaError(f"unexpected IOTable header {header}")
    m = sum(1 for h in header if h.startswith("u"))
    p = sum(1 for h in header if h.startswith("y"))
    rows = {}
    for row in reader:
        if not row:
            continue
        seg = int(row[-1])
        rows.setdefault(seg, []).append(
            (parse_timestamp(row[0]), [float(x) for x in row[1:1 + m]], [float(x) for x in row[1 + m:1 + m + p]])
        )
    tables = []
    for seg, rs in rows.items():
        ts = np.array([r[0] for r in rs])
        period = float(ts[1] - ts[0]) if ts.size > 1 else DEFAULT_PERIOD
        if ts.size > 2 and np.any(np.abs(np.diff(ts) - period) > 1e-6 * period):
            raise SchemaError(f"segment {seg} is not contiguous")
        tables.append(IOTable(float(ts[0]), period, np.array([r[1] for r in rs]),
                              np.array([r[2] for r in rs]), seg))
    return tables


def load_column_map(path) -> dict:
    with open(path) as fh:
        cfg = json.load(fh)
    if not isinstance(cfg, dict) or "timestamp" not in cfg:
        raise SchemaError(f"{path}: column map needs a 'timestamp' entry")
    return cfg


def _gap(cfg, col):
    return float(cfg.get("gap_limit_overrides", {}).get(col, cfg.get("gap_limit_s", DEFAULT_GAP_LIMIT)))


def tables_from_csv(stream, cfg: dict):
    """Full ingest pipeline driven by a column map.

    Two layouts are understood:

    * direct -- ``"inputs"`` and ``"outputs"`` name ready-made columns;
      columns listed in ``"hold"`` are resampled with zero-order hold.
    * settings -- ``"units"`` lists, per heat pump, the columns ``on``,
      ``fan``, ``t_set`` and ``t_volume``, and ``"t_out"`` names the outdoor
      temperature. Inputs become the heat-pump features plus outdoor
      temperature, outputs the volume temperatures.

    Returns ``(tables, extras, skipped)``; in the settings layout ``extras``
    holds the gridded ON-state series per unit (for hourly energy records)
    and, if ``"energy"`` names a column, the raw hourly energy series stamped
    at hour starts; otherwise it is empty.
    """
    period = float(cfg.get("period_s", DEFAULT_PERIOD))
    hold = set(cfg.get("hold", []))
    if "units" in cfg:
        units = cfg["units"]
        columns = {}
        for i, unit in enumerate(units):
            for key in ("on", "fan", "t_set", "t_volume"):
                if key not in unit:
                    raise SchemaError(f"unit {i} lacks '{key}'")
                columns[f"{key}_{i + 1}"] = unit[key]
                if key != "t_volume":
                    hold.add(unit[key])
        if "t_out" not in cfg:
            raise SchemaError("settings layout needs 't_out'")
        columns["t_out"] = cfg["t_out"]
        if "energy" in cfg:
            columns["energy"] = cfg["energy"]
    elif "inputs" in cfg and "outputs" in cfg:
        columns = {c: c for c in [*cfg["inputs"], *cfg["outputs"]]}
    else:
        raise SchemaError("column map needs either 'inputs'/'outputs' or 'units'/'t_out'")
    series, skipped = parse_csv(stream, {"timestamp": cfg["timestamp"], "columns": columns})
    gridded = {}
    raw = {s.name: s for s in series}
    for s in series:
        if s.name == "energy" and "units" in cfg:
            continue
        col = columns[s.name]
        method = "hold" if col in hold else "linear"
        gridded[s.name], _ = resample(s, period, _gap(cfg, col), method)
    if "units" in cfg:
        from .energy import feature_series

        n = len(cfg["units"])
        feats = [
            feature_series(gridded[f"on_{i}"], gridded[f"fan_{i}"], gridded[f"t_set_{i}"],
                           gridded[f"t_volume_{i}"], period, name=f"a_{i}", **cfg.get("feature", {}))
            for i in range(1, n + 1)
        ]
        inputs = feats + [gridded["t_out"]]
        outputs = [gridded[f"t_volume_{i}"] for i in range(1, n + 1)]
        tables = align(inputs, outputs, period, n_inputs=None, n_outputs=None)
        ons = [gridded[f"on_{i}"] for i in range(1, n + 1)]
        extras = {"on": ons}
        if "energy" in raw:
            extras["energy"] = raw["energy"]
        return tables, extras, skipped
    inputs = [gridded[c] for c in cfg["inputs"]]
    outputs = [gridded[c] for c in cfg["outputs"]]
    n_in = cfg.get("n_inputs", 5)
    n_out = cfg.get("n_outputs", 4)
    return align(inputs, outputs, period, n_in, n_out), {}, skipped
