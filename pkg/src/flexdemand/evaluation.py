"""Rolling fit-and-predict experiment and error statistics.

Each evaluation fits on ``window`` grid samples, takes the next ``n_past``
samples as initial conditions, and predicts the ``n_future`` samples after
them. Training samples never overlap the initial-condition or prediction
samples. Evaluations advance by ``stride`` samples within each segment.
"""
from __future__ import annotations

import csv
import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import predictors as P
from .errors import EmptyDataError
from .trajectory import build_trajectory_data

__all__ = [
    "EvalConfig",
    "ErrorStats",
    "Histogram",
    "make_fitter",
    "evaluation_windows",
    "count_windows",
    "rolling_eval",
    "error_histogram",
    "report",
]

STATS_FORMAT = "flexdemand.errorstats"
STATS_VERSION = 1
PREDICTOR_KINDS = ("one_step", "multi_step", "fl")


@dataclass
class EvalConfig:
    window: int = 2016
    n_past: int = 24
    n_future: int = 144
    stride: int = 36
    predictor: str = "multi_step"
    structure: str = "causal"
    ridge: float | None = None
    intercept: bool = True
    estimate_feedthrough: bool = False
    lambda1: float = 100.0
    lambda2: float = 1.0
    fl_tol: float = 1e-6
    fl_max_iter: int = 10000
    keep_residuals: bool = True
    n_jobs: int = 1

    def __post_init__(self):
        if self.stride < 1:
            raise ValueError("stride must be >= 1")
        if self.n_past < 1 or self.n_future < 1:
            raise ValueError("n_past and n_future must be >= 1")
        if self.window < self.n_past + self.n_future:
            raise ValueError(f"window must hold at least one training column "
                             f"({self.n_past + self.n_future} samples)")
        if self.predictor not in PREDICTOR_KINDS:
            raise ValueError(f"predictor must be one of {PREDICTOR_KINDS}")
        if self.structure not in P.STRUCTURES:
            raise ValueError(f"structure must be one of {P.STRUCTURES}")

    @property
    def span(self) -> int:
        """Samples used by one evaluation."""
        return self.window + self.n_past + self.n_future


@dataclass
class ErrorStats:
    """Per-step, per-channel error mean/std (population) over all windows.

    Arrays are ``n_future x p``. ``residuals`` (``n_windows x n_future x p``)
    is kept when requested; ``eval_times`` are the epoch times of the last
    initial-condition sample of each window.
    """

    mean: np.ndarray
    std: np.ndarray
    count: np.ndarray
    eval_times: list = field(default_factory=list)
    residuals: np.ndarray | None = None

    @property
    def n_windows(self) -> int:
        return len(self.eval_times)

    def to_dict(self) -> dict:
        d = {
            "format": STATS_FORMAT,
            "version": STATS_VERSION,
            "n_windows": self.n_windows,
            "mean": self.mean.tolist(),
            "std": self.std.tolist(),
            "count": self.count.tolist(),
            "eval_times": list(self.eval_times),
        }
        if self.residuals is not None:
            d["residuals"] = self.residuals.tolist()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ErrorStats":
        res = d.get("residuals")
        return cls(
            np.asarray(d["mean"], dtype=float),
            np.asarray(d["std"], dtype=float),
            np.asarray(d["count"], dtype=np.int64),
            list(d["eval_times"]),
            None if res is None else np.asarray(res, dtype=float),
        )


class _Accumulator:
    """Welford running mean / sum of squared deviations."""

    def __init__(self, shape):
        self.n = 0
        self.mean = np.zeros(shape)
        self.m2 = np.zeros(shape)

    def add(self, x):
        self.n += 1
        delta = x - self.mean
        self.mean += delta / self.n
        self.m2 += delta * (x - self.mean)

    def std(self):
        return np.sqrt(self.m2 / self.n) if self.n else np.zeros_like(self.m2)


def make_fitter(cfg: EvalConfig):
    """``TrajectoryData -> predictor`` according to ``cfg``."""
    if cfg.predictor == "one_step":
        return lambda data: P.fit_one_step(data, ridge=cfg.ridge, intercept=cfg.intercept)
    if cfg.predictor == "multi_step":
        return lambda data: P.fit_multi_step(
            data, cfg.structure, ridge=cfg.ridge, intercept=cfg.intercept,
            estimate_feedthrough=cfg.estimate_feedthrough,
        )
    return lambda data: P.fit_fl(data, cfg.lambda1, cfg.lambda2, cfg.fl_tol, cfg.fl_max_iter)


def count_windows(length: int, cfg: EvalConfig) -> int:
    """Number of evaluations a segment of ``length`` samples yields."""
    if length < cfg.span:
        return 0
    return (length - cfg.span) // cfg.stride + 1


def evaluation_windows(length: int, cfg: EvalConfig):
    """Yield ``(train, past, future)`` index ranges for one segment."""
    Np, Nf = cfg.n_past, cfg.n_future
    for s in range(0, count_windows(length, cfg) * cfg.stride, cfg.stride):
        a = s + cfg.window
        yield range(s, a), range(a, a + Np), range(a + Np, a + Np + Nf)


def _one_window(table, ranges, fit):
    train, past, future = ranges
    # training samples must not overlap the samples being predicted from/for
    assert train.stop <= past.start and past.stop == future.start
    u, y = table.u, table.y
    data = build_trajectory_data([(u[train.start:train.stop], y[train.start:train.stop])],
                                 len(past), len(future))
    pred = fit(data)
    sl_p = slice(past.start, past.stop)
    sl_f = slice(future.start, future.stop)
    y_hat = np.asarray(pred.predict(u[sl_p], y[sl_p], u[sl_f])).reshape(len(future), -1)
    return y_hat - y[sl_f]


def rolling_eval(tables, cfg: EvalConfig, fit=None) -> ErrorStats:
    """Run the rolling experiment over every segment.

    ``fit`` overrides the predictor built from ``cfg``; it receives a
    :class:`~flexdemand.trajectory.TrajectoryData` and must return an object
    with ``predict(u_p, y_p, u_f)``.
    """
    if hasattr(tables, "u"):
        tables = [tables]
    fit = fit or make_fitter(cfg)
    jobs = []
    for tab in tables:
        for ranges in evaluation_windows(len(tab), cfg):
            jobs.append((tab, ranges))
    if not jobs:
        longest = max((len(t) for t in tables), default=0)
        raise EmptyDataError(
            f"rolling evaluation needs a segment of >= {cfg.span} samples, longest has {longest}"
        )
    if cfg.n_jobs > 1:
        with ThreadPoolExecutor(cfg.n_jobs) as pool:
            errors = list(pool.map(lambda j: _one_window(j[0], j[1], fit), jobs))
    else:
        errors = [_one_window(tab, r, fit) for tab, r in jobs]

    acc = _Accumulator(errors[0].shape)
    for e in errors:
        acc.add(e)
    times = [float(tab.t0 + tab.period * (r[1].stop - 1)) if hasattr(tab, "t0") else float(r[1].stop - 1)
             for tab, r in jobs]
    return ErrorStats(
        mean=acc.mean.copy(),
        std=acc.std(),
        count=np.full(errors[0].shape, acc.n, dtype=np.int64),
        eval_times=times,
        residuals=np.stack(errors) if cfg.keep_residuals else None,
    )


@dataclass
class Histogram:
    edges: np.ndarray
    counts: np.ndarray


def error_histogram(residuals, bin_width: float, origin: float | None = None) -> Histogram:
    """Closed-left histogram with bins ``[origin + k w, origin + (k+1) w)``.

    ``origin`` defaults to ``-w/2`` so that a bin is centred on zero and
    mirrored residuals land in mirrored bins.
    """
    if bin_width <= 0:
        raise ValueError("bin_width must be positive")
    r = np.asarray(residuals, dtype=float).ravel()
    origin = -0.5 * bin_width if origin is None else float(origin)
    if r.size == 0:
        return Histogram(np.array([origin]), np.zeros(0, dtype=np.int64))
    k = np.floor((r - origin) / bin_width).astype(np.int64)
    k0, k1 = int(k.min()), int(k.max())
    counts = np.bincount(k - k0, minlength=k1 - k0 + 1)
    edges = origin + bin_width * np.arange(k0, k1 + 2)
    return Histogram(edges, counts)


def _dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def report(stats: ErrorStats, out_dir, formats=("csv", "json"), plots: bool = False,
           include_residuals: bool = False, metadata: dict | None = None) -> list[str]:
    """Write ``errors.csv`` (long format), ``summary.json`` and optional SVG plots.

    Output bytes depend only on ``stats``, the arguments and ``metadata``.
    """
    if stats.n_windows == 0:
        raise ValueError("no statistics to report")
    os.makedirs(out_dir, exist_ok=True)
    written = []
    Nf, p = stats.mean.shape
    if "csv" in formats:
        path = os.path.join(out_dir, "errors.csv")
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["channel", "step", "mean", "std", "count"])
            for c in range(p):
                for k in range(Nf):
                    w.writerow([c + 1, k + 1, repr(float(stats.mean[k, c])),
                                repr(float(stats.std[k, c])), int(stats.count[k, c])])
        written.append(path)
    if "json" in formats:
        d = stats.to_dict()
        if not include_residuals:
            d.pop("residuals", None)
        if metadata:
            d["metadata"] = metadata
        path = os.path.join(out_dir, "summary.json")
        with open(path, "w") as fh:
            fh.write(_dumps(d))
        written.append(path)
    if plots:
        written.extend(_plot(stats, out_dir))
    return written


def _plot(stats: ErrorStats, out_dir) -> list[str]:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    matplotlib.rcParams["svg.hashsalt"] = "flexdemand"
    Nf, p = stats.mean.shape
    steps = np.arange(1, Nf + 1)
    paths = []
    for c in range(p):
        fig, ax = plt.subplots(figsize=(6, 3))
        mu, sd = stats.mean[:, c], stats.std[:, c]
        ax.plot(steps, mu, color="tab:red")
        ax.plot(steps, mu + sd, color="tab:red", lw=0.8)
        ax.plot(steps, mu - sd, color="tab:red", lw=0.8)
        ax.set_xlabel("prediction step")
        ax.set_ylabel(f"error, output {c + 1}")
        fig.tight_layout()
        path = os.path.join(out_dir, f"error_channel{c + 1}.svg")
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)
        paths.append(path)
    return paths
