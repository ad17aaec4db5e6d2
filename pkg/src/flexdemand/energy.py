"""Heat-pump actuation feature and hourly energy-demand regression models."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, EmptyDataError, SchemaError
from .solvers import least_squares, quantile_regression, quantile_regression_joint

__all__ = [
    "HPSetting",
    "HourlyRecord",
    "EnergyModel",
    "feature",
    "feature_series",
    "build_hourly_records",
    "design_matrix",
    "fit_energy",
    "fit_energy_quantiles",
    "predict_energy",
    "write_records_csv",
    "read_records_csv",
]

SECONDS_PER_HOUR = 3600.0


@dataclass(frozen=True)
class HPSetting:
    on: int
    fan: int
    t_set: float
    t_volume: float

    def __post_init__(self):
        if self.on not in (0, 1):
            raise ValueError("on must be 0 or 1")
        if self.fan not in range(1, 6):
            raise ValueError("fan must be in 1..5")
        if not 16 <= self.t_set <= 31:
            raise ValueError("t_set must be in 16..31 degC")
        if not np.isfinite(self.t_volume):
            raise ValueError("t_volume must be finite")


def feature(on, fan=None, t_set=None, t_volume=None, gain: float = 0.5,
            slope: float = 0.2, offset: float = 1.0):
    """Heat-pump actuation feature ``on * fan * gain * tanh(slope * (t_set - t_volume) + offset)``.

    Accepts an :class:`HPSetting` or four scalars/arrays (vectorized).
    The defaults ``gain=1/2``, ``slope=1/5``, ``offset=1`` are the heuristic
    constants; all three can be overridden.
    """
    if isinstance(on, HPSetting):
        on, fan, t_set, t_volume = on.on, on.fan, on.t_set, on.t_volume
    on, fan, t_set, t_volume = (np.asarray(a, dtype=float) for a in (on, fan, t_set, t_volume))
    a = on * fan * gain * np.tanh(slope * (t_set - t_volume) + offset)
    return float(a) if a.ndim == 0 else a


def feature_series(on, fan, t_set, t_volume, period: float = 300.0, name: str = "a", **constants):
    """Feature evaluated at the grid points shared by four gridded series."""
    from .ingest import SignalSeries

    ks = [np.round(s.times / period).astype(np.int64) for s in (on, fan, t_set, t_volume)]
    common = ks[0]
    for k in ks[1:]:
        common = np.intersect1d(common, k, assume_unique=True)
    vals = [s.values[np.searchsorted(k, common)] for s, k in zip((on, fan, t_set, t_volume), ks)]
    return SignalSeries(name, common * period, feature(*vals, **constants))


@dataclass(frozen=True)
class HourlyRecord:
    """Aggregates of one hour of 5-minute samples.

    ``on_count[i]`` counts the samples with unit ``i`` on; ``feature_sum[i]``
    sums its feature over the hour. ``energy`` (kWh) is ``None`` when the
    target is unknown.
    """

    hour: float
    t_out: float
    on_count: np.ndarray
    feature_sum: np.ndarray
    energy: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "on_count", np.asarray(self.on_count, dtype=float))
        object.__setattr__(self, "feature_sum", np.asarray(self.feature_sum, dtype=float))
        if self.on_count.shape != self.feature_sum.shape:
            raise DimensionError("on_count and feature_sum must have one entry per unit")


@dataclass
class EnergyModel:
    alpha_out: float
    alpha_on: np.ndarray
    alpha_feat: np.ndarray
    kind: str = "expected"
    tau: float | None = None
    intercept: float = 0.0
    has_intercept: bool = field(default=False)

    def __post_init__(self):
        if self.kind not in ("expected", "quantile"):
            raise ValueError("kind must be 'expected' or 'quantile'")
        if self.kind == "quantile" and not (self.tau is not None and 0.0 < self.tau < 1.0):
            raise ValueError("quantile models need tau in (0, 1)")
        self.alpha_on = np.asarray(self.alpha_on, dtype=float)
        self.alpha_feat = np.asarray(self.alpha_feat, dtype=float)

    @property
    def coefficients(self) -> np.ndarray:
        """``[alpha_out, alpha_on..., alpha_feat...]`` (plus intercept if fitted)."""
        c = np.concatenate([[self.alpha_out], self.alpha_on, self.alpha_feat])
        return np.append(c, self.intercept) if self.has_intercept else c

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "tau": self.tau,
            "n_units": int(self.alpha_on.size),
            "intercept": self.has_intercept,
            "coefficients": self.coefficients.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EnergyModel":
        try:
            c = np.asarray(d["coefficients"], dtype=float)
            n = int(d["n_units"])
            has_icpt = bool(d.get("intercept", False))
        except (KeyError, TypeError, ValueError) as exc:
            raise SchemaError(f"bad energy model document: {exc}") from exc
        if c.size != 1 + 2 * n + int(has_icpt):
            raise SchemaError("coefficient count does not match n_units")
        return cls(c[0], c[1:1 + n], c[1 + n:1 + 2 * n], d["kind"], d.get("tau"),
                   float(c[-1]) if has_icpt else 0.0, has_icpt)


def build_hourly_records(tables, on, energy=None, period: float = 300.0, n_units: int = 4):
    """Aggregate gridded tables into one record per complete hour.

    ``tables`` are IOTables whose inputs are ``[a_1..a_n, T_out]``. ``on`` is
    either a list of gridded ON-state series (one per unit) or, per table, an
    ``N x n_units`` array aligned with its rows. ``energy`` is an hourly
    series stamped at the hour start.

    An hour is complete when all of its grid samples are present, the ON
    state is known at each, and (if ``energy`` is given) its energy is known.
    Returns ``(records, dropped)``.
    """
    if hasattr(tables, "u"):
        tables = [tables]
    per_hour = int(round(SECONDS_PER_HOUR / period))
    on_lookup = None
    if len(on) and hasattr(on[0], "times"):
        on_lookup = [dict(zip(np.round(s.times / period).astype(np.int64).tolist(), s.values)) for s in on]
    energy_lookup = None
    if energy is not None:
        energy_lookup = dict(zip(np.round(energy.times).astype(np.int64).tolist(), energy.values))

    samples = {}
    for ti, tab in enumerate(tables):
        if tab.u.shape[1] != n_units + 1:
            raise DimensionError(f"table {ti}: expected {n_units + 1} inputs, got {tab.u.shape[1]}")
        ks = np.round(tab.times / period).astype(np.int64)
        if on_lookup is None:
            on_arr = np.asarray(on[ti], dtype=float)
            if on_arr.shape != (len(tab), n_units):
                raise DimensionError(f"table {ti}: ON array has shape {on_arr.shape}")
        for r, k in enumerate(ks.tolist()):
            if on_lookup is None:
                on_row = on_arr[r]
            else:
                vals = [lk.get(k) for lk in on_lookup]
                on_row = None if any(v is None for v in vals) else np.array(vals)
            hour = int(np.floor(k * period / SECONDS_PER_HOUR) * SECONDS_PER_HOUR)
            samples.setdefault(hour, []).append((k, tab.u[r], on_row))

    records, dropped = [], 0
    for hour in sorted(samples):
        rows = samples[hour]
        if len({k for k, _, _ in rows}) != per_hour or any(o is None for _, _, o in rows):
            dropped += 1
            continue
        e = None
        if energy_lookup is not None:
            e = energy_lookup.get(hour)
            if e is None:
                dropped += 1
                continue
        U = np.array([u for _, u, _ in rows])
        O = np.array([o for _, _, o in rows])
        records.append(HourlyRecord(float(hour), float(U[:, -1].mean()), O.sum(axis=0),
                                    U[:, :-1].sum(axis=0), None if e is None else float(e)))
    if not records:
        raise EmptyDataError(f"no complete hours ({dropped} dropped)")
    return records, dropped


def design_matrix(records, intercept: bool = False) -> np.ndarray:
    """Rows ``[t_out, on_count..., feature_sum...]`` (plus a trailing 1)."""
    A = np.array([np.concatenate([[r.t_out], r.on_count, r.feature_sum]) for r in records])
    if intercept:
        A = np.column_stack([A, np.ones(len(records))])
    return A


def fit_energy(records, kind: str = "expected", tau: float | None = None,
               intercept: bool = False, min_records: int = 10) -> EnergyModel:
    """Least-squares (``"expected"``) or pinball-loss (``"quantile"``) fit."""
    if len(records) < min_records:
        raise EmptyDataError(f"need at least {min_records} records, got {len(records)}")
    if any(r.energy is None for r in records):
        raise ValueError("all training records need an energy value")
    A = design_matrix(records, intercept)
    b = np.array([r.energy for r in records])
    if kind == "expected":
        c = least_squares(A.T, b[None, :], ridge=0.0)[0]
    elif kind == "quantile":
        if tau is None:
            raise ValueError("quantile fit needs tau")
        c = quantile_regression(A, b, tau)
    else:
        raise ValueError("kind must be 'expected' or 'quantile'")
    n = records[0].on_count.size
    return EnergyModel(
        float(c[0]), c[1:1 + n], c[1 + n:1 + 2 * n], kind,
        tau if kind == "quantile" else None,
        float(c[-1]) if intercept else 0.0, intercept,
    )


def fit_energy_quantiles(records, taus, intercept: bool = False, min_records: int = 10,
                         noncrossing: bool = True) -> list[EnergyModel]:
    """Quantile models for several ``taus`` fitted jointly.

    Separate fits may cross even on their own training records; with
    ``noncrossing`` the fitted values on the training records are forced to be
    ordered by ``tau``.
    """
    if len(records) < min_records:
        raise EmptyDataError(f"need at least {min_records} records, got {len(records)}")
    if any(r.energy is None for r in records):
        raise ValueError("all training records need an energy value")
    taus = sorted(float(t) for t in taus)
    A = design_matrix(records, intercept)
    b = np.array([r.energy for r in records])
    C = quantile_regression_joint(A, b, taus, noncrossing)
    n = records[0].on_count.size
    return [
        EnergyModel(float(c[0]), c[1:1 + n], c[1 + n:1 + 2 * n], "quantile", tau,
                    float(c[-1]) if intercept else 0.0, intercept)
        for tau, c in zip(taus, C)
    ]


def predict_energy(model: EnergyModel, record):
    """Predicted hourly energy (kWh) for one record or an array for a list."""
    if isinstance(record, HourlyRecord):
        return float(model.alpha_out * record.t_out + model.alpha_on @ record.on_count
                     + model.alpha_feat @ record.feature_sum + model.intercept)
    A = design_matrix(record, model.has_intercept)
    return A @ model.coefficients


def write_records_csv(records, stream) -> None:
    n = records[0].on_count.size
    from .ingest import format_timestamp

    w = csv.writer(stream, lineterminator="\n")
    w.writerow(["hour", "t_out", *(f"on_{i + 1}" for i in range(n)),
                *(f"feat_{i + 1}" for i in range(n)), "energy"])
    for r in records:
        w.writerow([format_timestamp(r.hour), repr(r.t_out), *map(repr, r.on_count.tolist()),
                    *map(repr, r.feature_sum.tolist()), "" if r.energy is None else repr(r.energy)])


def read_records_csv(stream) -> list[HourlyRecord]:
    from .ingest import _text, parse_timestamp

    reader = csv.reader(_text(stream))
    header = next(reader)
    n = sum(1 for h in header if h.startswith("on_"))
    if header[:2] != ["hour", "t_out"] or header[-1] != "energy" or len(header) != 3 + 2 * n:
        raise SchemaError(f"unexpected records header {header}")
    out = []
    for row in reader:
        if not row:
            continue
        vals = [float(x) for x in row[1:-1]]
        out.append(HourlyRecord(parse_timestamp(row[0]), vals[0], vals[1:1 + n], vals[1 + n:],
                                float(row[-1]) if row[-1].strip() else None))
    return out
