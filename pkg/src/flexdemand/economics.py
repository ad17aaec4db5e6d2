"""Spot-price energy cost and the monthly peak-demand penalty."""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from datetime import datetime, timezone

import numpy as np

from .errors import AlignmentError, InsufficientDataError, SchemaError

__all__ = [
    "PriceSeries",
    "PenaltySchedule",
    "spot_cost",
    "peak_penalty",
    "total_cost",
    "monthly_peak_penalty",
    "add_grid_tariff",
    "read_prices_csv",
    "load_schedule",
]

HOUR = 3600.0


@dataclass(frozen=True)
class PriceSeries:
    """Hourly prices (per kWh) stamped at UTC hour starts (epoch seconds)."""

    hours: np.ndarray
    sigma: np.ndarray

    def __post_init__(self):
        h = np.asarray(self.hours, dtype=float).reshape(-1)
        s = np.asarray(self.sigma, dtype=float).reshape(-1)
        if h.shape != s.shape:
            raise ValueError("hours and sigma differ in length")
        if h.size > 1 and np.any(np.diff(h) != HOUR):
            raise ValueError("price hours must be contiguous")
        if not np.all(np.isfinite(s)):
            raise ValueError("prices must be finite")
        object.__setattr__(self, "hours", h)
        object.__setattr__(self, "sigma", s)

    @classmethod
    def from_values(cls, sigma, start: float = 0.0) -> "PriceSeries":
        sigma = np.asarray(sigma, dtype=float)
        return cls(start + HOUR * np.arange(sigma.size), sigma)


@dataclass(frozen=True)
class PenaltySchedule:
    """Stair function: average of the ``peak_count`` largest hours -> charge.

    Band ``j`` is ``[thresholds[j], thresholds[j+1])``; averages below the
    first threshold cost nothing.
    """

    thresholds: tuple
    charges: tuple
    peak_count: int = 3

    def __post_init__(self):
        t = tuple(float(x) for x in self.thresholds)
        c = tuple(float(x) for x in self.charges)
        if len(t) != len(c) or not t:
            raise ValueError("need one charge per threshold")
        if any(b <= a for a, b in zip(t, t[1:])):
            raise ValueError("thresholds must be strictly ascending")
        if any(b < a for a, b in zip(c, c[1:])):
            raise ValueError("charges must be non-decreasing")
        if self.peak_count < 1:
            raise ValueError("peak_count must be >= 1")
        object.__setattr__(self, "thresholds", t)
        object.__setattr__(self, "charges", c)

    def charge(self, level: float) -> float:
        j = int(np.searchsorted(self.thresholds, level, side="right")) - 1
        return 0.0 if j < 0 else self.charges[j]


def _aligned_prices(P, sigma, hours):
    P = np.asarray(P, dtype=float).reshape(-1)
    if isinstance(sigma, PriceSeries):
        if hours is None:
            if P.size != sigma.sigma.size:
                raise AlignmentError(f"{P.size} energy values for {sigma.sigma.size} prices")
            return P, sigma.sigma
        hours = np.asarray(hours, dtype=float).reshape(-1)
        if hours.size != P.size:
            raise AlignmentError("hours and P differ in length")
        pos = {h: i for i, h in enumerate(sigma.hours.tolist())}
        missing = [h for h in hours.tolist() if h not in pos]
        if missing:
            raise AlignmentError(f"no price for {len(missing)} hour(s): {missing[:10]}", missing)
        return P, sigma.sigma[[pos[h] for h in hours.tolist()]]
    s = np.asarray(sigma, dtype=float).reshape(-1)
    if s.size != P.size:
        raise AlignmentError(f"{P.size} energy values for {s.size} prices")
    return P, s


def spot_cost(P, sigma, hours=None) -> float:
    """``sum_k sigma_k P_k``.

    ``sigma`` is a :class:`PriceSeries` or a plain array. With ``hours``, the
    prices are looked up by hour and any hour without a price raises
    :class:`AlignmentError` listing the missing hours.
    """
    P, s = _aligned_prices(P, sigma, hours)
    return float(np.dot(s, P))


def peak_penalty(P, schedule: PenaltySchedule) -> float:
    """Charge for one month of hourly energies ``P``."""
    P = np.asarray(P, dtype=float).reshape(-1)
    k = schedule.peak_count
    if P.size < k:
        raise InsufficientDataError(f"peak penalty needs >= {k} hours, got {P.size}")
    peaks = np.partition(P, P.size - k)[P.size - k:]
    return schedule.charge(float(np.mean(peaks)))


def _month_key(t: float):
    d = datetime.fromtimestamp(t, tz=timezone.utc)
    return d.year, d.month


def monthly_peak_penalty(hours, P, schedule: PenaltySchedule) -> float:
    """Sum of :func:`peak_penalty` over the UTC calendar months in ``hours``."""
    hours = np.asarray(hours, dtype=float).reshape(-1)
    P = np.asarray(P, dtype=float).reshape(-1)
    months = {}
    for h, e in zip(hours.tolist(), P.tolist()):
        months.setdefault(_month_key(h), []).append(e)
    return float(sum(peak_penalty(v, schedule) for _, v in sorted(months.items())))


def total_cost(P, sigma, schedule: PenaltySchedule, hours=None) -> float:
    """Peak penalty plus spot cost.

    Without ``hours`` the whole of ``P`` is treated as one month; with
    ``hours`` the penalty is charged per calendar month.
    """
    spot = spot_cost(P, sigma, hours)
    if hours is None:
        return peak_penalty(P, schedule) + spot
    return monthly_peak_penalty(hours, P, schedule) + spot


def add_grid_tariff(prices: PriceSeries, day_rate: float, night_rate: float,
                    day_start: int = 6, day_end: int = 22, utc_offset_hours: float = 0.0) -> PriceSeries:
    """Add a day/night grid tariff to every hour.

    Day hours are ``[day_start, day_end)`` in local time, where local time is
    UTC shifted by ``utc_offset_hours``. Rates are supplied by the caller.
    """
    local_h = ((prices.hours / HOUR + utc_offset_hours) % 24).astype(int)
    is_day = (local_h >= day_start) & (local_h < day_end)
    return PriceSeries(prices.hours, prices.sigma + np.where(is_day, day_rate, night_rate))


def read_prices_csv(stream) -> PriceSeries:
    """CSV with columns ``hour,price``."""
    from .ingest import _text, parse_timestamp

    reader = csv.reader(_text(stream))
    header = [h.strip() for h in next(reader)]
    if header[:2] != ["hour", "price"]:
        raise SchemaError(f"price file header must be 'hour,price', got {header}")
    hours, prices = [], []
    for row in reader:
        if row:
            hours.append(parse_timestamp(row[0]))
            prices.append(float(row[1]))
    return PriceSeries(np.array(hours), np.array(prices))


def load_schedule(path_or_dict) -> PenaltySchedule:
    """``{"thresholds": [...], "charges": [...], "peak_count": 3}``."""
    if isinstance(path_or_dict, dict):
        d = path_or_dict
    else:
        with open(path_or_dict) as fh:
            d = json.load(fh)
    unknown = set(d) - {"thresholds", "charges", "peak_count"}
    if unknown or "thresholds" not in d or "charges" not in d:
        raise SchemaError(f"bad penalty schedule keys: {sorted(d)}")
    return PenaltySchedule(tuple(d["thresholds"]), tuple(d["charges"]), int(d.get("peak_count", 3)))
