"""One-step, multi-step and Fundamental-Lemma predictors.

Conventions: ``u_p`` and ``y_p`` stack the last ``n_past`` samples oldest
first, ``u_f`` stacks the next ``n_future`` inputs, and predictions are the
stacked next ``n_future`` outputs. Every function takes either flat stacked
vectors or ``(samples, channels)`` arrays.

The least-squares fits share one factorization of the regressor
``[U_past; Y_past; 1; U_future]`` per data set (the ones row is the optional
intercept). A causal block row only uses a leading subset of those rows,
so it is solved from the same triangular factor.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, EmptyDataError, SchemaError
from .solvers import EqualityProjector, RegressorFactorization, default_ridge, solve_l1l2_equality
from .trajectory import TrajectoryData

__all__ = [
    "STRUCTURES",
    "OneStepPredictor",
    "MultiStepPredictor",
    "FLPredictor",
    "fit_one_step",
    "predict_one_step",
    "rollout_one_step",
    "fit_multi_step",
    "predict_multi_step",
    "fit_fl",
    "fl_predict",
    "predictor_to_dict",
    "predictor_from_dict",
    "save_predictor",
    "load_predictor",
]

STRUCTURES = ("unstructured", "causal", "toeplitz")
FORMAT_NAME = "flexdemand.predictor"
FORMAT_VERSION = 1


def _stack(x, count: int, width: int, name: str) -> np.ndarray:
    a = np.asarray(x, dtype=float)
    if a.size != count * width:
        raise DimensionError(f"{name} must hold {count} x {width} values, got shape {a.shape}")
    return a.reshape(-1)


@dataclass(frozen=True)
class OneStepPredictor:
    Phi1: np.ndarray
    m: int
    p: int
    n_past: int
    bias: np.ndarray = None

    def __post_init__(self):
        if self.Phi1.shape != (self.p, (self.m + self.p) * self.n_past):
            raise DimensionError(f"Phi1 has shape {self.Phi1.shape}")
        if self.bias is None:
            object.__setattr__(self, "bias", np.zeros(self.p))

    def predict(self, u_p, y_p, u_f):
        return rollout_one_step(self, u_p, y_p, u_f)


@dataclass(frozen=True)
class MultiStepPredictor:
    Phi_p: np.ndarray
    Phi_f: np.ndarray
    structure: str
    m: int
    p: int
    n_past: int
    n_future: int
    bias: np.ndarray = None
    feedthrough: bool = False

    def __post_init__(self):
        if self.structure not in STRUCTURES:
            raise ValueError(f"unknown structure {self.structure!r}")
        rows = self.p * self.n_future
        if self.Phi_p.shape != (rows, (self.m + self.p) * self.n_past):
            raise DimensionError(f"Phi_p has shape {self.Phi_p.shape}")
        if self.Phi_f.shape != (rows, self.m * self.n_future):
            raise DimensionError(f"Phi_f has shape {self.Phi_f.shape}")
        if self.bias is None:
            object.__setattr__(self, "bias", np.zeros(rows))

    def predict(self, u_p, y_p, u_f):
        return predict_multi_step(self, u_p, y_p, u_f)


@dataclass(frozen=True)
class FLPredictor:
    """Stored trajectory blocks plus the regularization weights."""

    U_past: np.ndarray
    Y_past: np.ndarray
    U_future: np.ndarray
    Y_future: np.ndarray
    m: int
    p: int
    n_past: int
    n_future: int
    lambda1: float = 100.0
    lambda2: float = 1.0
    tol: float = 1e-6
    max_iter: int = 10000
    _cache: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        if self.lambda1 < 0 or self.lambda2 < 0:
            raise ValueError("lambda1 and lambda2 must be non-negative")
        N = self.U_past.shape[1]
        expect = {
            "U_past": (self.m * self.n_past, N),
            "Y_past": (self.p * self.n_past, N),
            "U_future": (self.m * self.n_future, N),
            "Y_future": (self.p * self.n_future, N),
        }
        for name, shape in expect.items():
            if getattr(self, name).shape != shape:
                raise DimensionError(f"{name} has shape {getattr(self, name).shape}, expected {shape}")

    @property
    def projector(self) -> EqualityProjector:
        if "projector" not in self._cache:
            H = np.vstack([self.U_past, self.Y_past, self.U_future])
            self._cache["projector"] = EqualityProjector(H)
        return self._cache["projector"]

    def predict(self, u_p, y_p, u_f):
        return fl_predict(self, u_p, y_p, u_f)[0]


# ---------------------------------------------------------------------------
# fitting


def _factorization(data: TrajectoryData, intercept: bool, ridge):
    key = (bool(intercept), ridge)
    if key not in data._cache:
        blocks = [data.U_past, data.Y_past]
        if intercept:
            blocks.append(np.ones((1, data.n_cols)))
        blocks.append(data.U_future)
        Z = np.vstack(blocks)
        lam = default_ridge(Z) if ridge is None else float(ridge)
        fac = RegressorFactorization(Z, lam)
        data._cache[key] = (fac, fac.project(data.Y_future))
    return data._cache[key]


def _check(data: TrajectoryData):
    if data.n_cols < 1:
        raise EmptyDataError("trajectory data has no columns")


def _split_past(X, data, intercept):
    n_pc = (data.m + data.p) * data.n_past
    bias = X[:, n_pc] if intercept else np.zeros(X.shape[0])
    return X[:, :n_pc], bias


def fit_one_step(data: TrajectoryData, ridge=None, intercept: bool = True) -> OneStepPredictor:
    """Regress the first future output on the stacked past inputs and outputs.

    No direct feedthrough is assumed, so future inputs do not enter.
    ``ridge=None`` uses ``1e-8 * trace(Z Z^T) / rows(Z)`` of the full stacked
    regressor, shared with the multi-step fits on the same data.
    """
    _check(data)
    fac, QtY = _factorization(data, intercept, ridge)
    q0 = (data.m + data.p) * data.n_past + int(intercept)
    X = fac.solve(QtY[:, :data.p], q0)
    Phi1, bias = _split_past(X, data, intercept)
    return OneStepPredictor(Phi1, data.m, data.p, data.n_past, bias)


def predict_one_step(pred: OneStepPredictor, u_p, y_p) -> np.ndarray:
    """Next output from the last ``n_past`` inputs and outputs."""
    x = np.concatenate([
        _stack(u_p, pred.n_past, pred.m, "u_p"),
        _stack(y_p, pred.n_past, pred.p, "y_p"),
    ])
    return pred.Phi1 @ x + pred.bias


def rollout_one_step(pred: OneStepPredictor, u_p, y_p, u_f) -> np.ndarray:
    """Iterate the one-step predictor over the horizon spanned by ``u_f``.

    Each prediction is shifted into the output history and the matching given
    input into the input history.
    """
    m, p, Np = pred.m, pred.p, pred.n_past
    up = _stack(u_p, Np, m, "u_p").reshape(Np, m)
    yp = _stack(y_p, Np, p, "y_p").reshape(Np, p)
    uf = np.asarray(u_f, dtype=float)
    if uf.size % m:
        raise DimensionError(f"u_f size {uf.size} is not a multiple of m={m}")
    uf = uf.reshape(-1, m)
    hist_u = np.vstack([up, uf])
    hist_y = np.vstack([yp, np.empty((uf.shape[0], p))])
    Pu, Py = pred.Phi1[:, :m * Np], pred.Phi1[:, m * Np:]
    for k in range(uf.shape[0]):
        hist_y[Np + k] = Pu @ hist_u[k:k + Np].ravel() + Py @ hist_y[k:k + Np].ravel() + pred.bias
    return hist_y[Np:].ravel()


def _toeplitz_average(Phi_f, p, m, Nf):
    blocks = Phi_f.reshape(Nf, p, Nf, m)
    out = np.zeros_like(blocks)
    rows = np.arange(Nf)
    for lag in range(Nf):
        i = rows[lag:]
        mean = blocks[i, :, i - lag, :].mean(axis=0)
        out[i, :, i - lag, :] = mean
    return out.reshape(p * Nf, m * Nf)


def fit_multi_step(
    data: TrajectoryData,
    structure: str = "causal",
    ridge=None,
    intercept: bool = True,
    estimate_feedthrough: bool = False,
) -> MultiStepPredictor:
    """Fit the map from ``[u_p; y_p; u_f]`` to the stacked future outputs.

    ``unstructured``
        One least-squares problem over the whole regressor; the future-input
        block is dense and therefore non-causal.
    ``causal``
        One problem per future block row ``i``, using future inputs up to step
        ``i - 1`` (or ``i`` with ``estimate_feedthrough``); assembled lower
        block-triangular.
    ``toeplitz``
        The causal estimates of each impulse-response block averaged along the
        block diagonals. The past block and intercept are then refit against
        the outputs left over after the averaged future-input term.

    ``estimate_feedthrough`` has no effect on the unstructured fit.
    """
    if structure not in STRUCTURES:
        raise ValueError(f"structure must be one of {STRUCTURES}, got {structure!r}")
    _check(data)
    m, p, Np, Nf = data.m, data.p, data.n_past, data.n_future
    fac, QtY = _factorization(data, intercept, ridge)
    q0 = (m + p) * Np + int(intercept)
    if structure == "unstructured":
        X = fac.solve(QtY)
        Phi_p, bias = _split_past(X[:, :q0], data, intercept)
        Phi_f = X[:, q0:]
        return MultiStepPredictor(Phi_p, Phi_f, structure, m, p, Np, Nf, bias, True)

    d = int(estimate_feedthrough)
    X_past = np.empty((p * Nf, q0))
    Phi_f = np.zeros((p * Nf, m * Nf))
    for i in range(Nf):
        k = q0 + m * (i + d)
        Xi = fac.solve(QtY[:, i * p:(i + 1) * p], k)
        X_past[i * p:(i + 1) * p] = Xi[:, :q0]
        Phi_f[i * p:(i + 1) * p, :k - q0] = Xi[:, q0:]
    if structure == "toeplitz":
        Phi_f = _toeplitz_average(Phi_f, p, m, Nf)
        resid = data.Y_future - Phi_f @ data.U_future
        X_past = fac.solve(fac.project(resid), q0)
    Phi_p, bias = _split_past(X_past, data, intercept)
    return MultiStepPredictor(Phi_p, Phi_f, structure, m, p, Np, Nf, bias, bool(d))


def predict_multi_step(pred: MultiStepPredictor, u_p, y_p, u_f) -> np.ndarray:
    """``Phi_p [u_p; y_p] + Phi_f u_f (+ intercept)``."""
    x = np.concatenate([
        _stack(u_p, pred.n_past, pred.m, "u_p"),
        _stack(y_p, pred.n_past, pred.p, "y_p"),
    ])
    uf = _stack(u_f, pred.n_future, pred.m, "u_f")
    return pred.Phi_p @ x + pred.Phi_f @ uf + pred.bias


def fit_fl(data: TrajectoryData, lambda1: float = 100.0, lambda2: float = 1.0,
           tol: float = 1e-6, max_iter: int = 10000) -> FLPredictor:
    """Store the data blocks for per-query Fundamental-Lemma prediction."""
    _check(data)
    return FLPredictor(
        data.U_past, data.Y_past, data.U_future, data.Y_future,
        data.m, data.p, data.n_past, data.n_future,
        float(lambda1), float(lambda2), float(tol), int(max_iter),
    )


def fl_predict(fl: FLPredictor, u_p, y_p, u_f):
    """Find the regularized combination ``g`` of stored windows matching the query.

    Returns ``(y_f_hat, g, SolveReport)`` with ``y_f_hat = Y_future g``. An
    infeasible query still returns the best iterate and its report.
    """
    h = np.concatenate([
        _stack(u_p, fl.n_past, fl.m, "u_p"),
        _stack(y_p, fl.n_past, fl.p, "y_p"),
        _stack(u_f, fl.n_future, fl.m, "u_f"),
    ])
    P = fl.projector
    g, report = solve_l1l2_equality(
        P.H, h, fl.lambda1, fl.lambda2, tol=fl.tol, max_iter=fl.max_iter, projector=P
    )
    return fl.Y_future @ g, g, report


# ---------------------------------------------------------------------------
# serialization


def _arr(a):
    a = np.asarray(a, dtype=float)
    return {"shape": list(a.shape), "data": a.ravel().tolist()}


def _unarr(d):
    return np.asarray(d["data"], dtype=float).reshape(d["shape"])


def predictor_to_dict(pred) -> dict:
    """Versioned plain-dict form of a fitted predictor (row-major arrays)."""
    if isinstance(pred, OneStepPredictor):
        return {
            "format": FORMAT_NAME, "version": FORMAT_VERSION, "kind": "one_step",
            "dims": {"m": pred.m, "p": pred.p, "n_past": pred.n_past},
            "arrays": {"Phi1": _arr(pred.Phi1), "bias": _arr(pred.bias)},
        }
    if isinstance(pred, MultiStepPredictor):
        return {
            "format": FORMAT_NAME, "version": FORMAT_VERSION, "kind": "multi_step",
            "structure": pred.structure, "feedthrough": pred.feedthrough,
            "dims": {"m": pred.m, "p": pred.p, "n_past": pred.n_past, "n_future": pred.n_future},
            "arrays": {"Phi_p": _arr(pred.Phi_p), "Phi_f": _arr(pred.Phi_f), "bias": _arr(pred.bias)},
        }
    if isinstance(pred, FLPredictor):
        return {
            "format": FORMAT_NAME, "version": FORMAT_VERSION, "kind": "fl",
            "dims": {"m": pred.m, "p": pred.p, "n_past": pred.n_past, "n_future": pred.n_future},
            "solver": {"lambda1": pred.lambda1, "lambda2": pred.lambda2,
                       "tol": pred.tol, "max_iter": pred.max_iter},
            "arrays": {name: _arr(getattr(pred, name))
                       for name in ("U_past", "Y_past", "U_future", "Y_future")},
        }
    raise TypeError(f"cannot serialize {type(pred).__name__}")


def predictor_from_dict(d: dict):
    if d.get("format") != FORMAT_NAME:
        raise SchemaError("not a predictor document")
    if d.get("version") != FORMAT_VERSION:
        raise SchemaError(f"unsupported predictor format version {d.get('version')}")
    arrays = {k: _unarr(v) for k, v in d["arrays"].items()}
    dims = d["dims"]
    kind = d.get("kind")
    if kind == "one_step":
        return OneStepPredictor(arrays["Phi1"], dims["m"], dims["p"], dims["n_past"], arrays["bias"])
    if kind == "multi_step":
        return MultiStepPredictor(
            arrays["Phi_p"], arrays["Phi_f"], d["structure"], dims["m"], dims["p"],
            dims["n_past"], dims["n_future"], arrays["bias"], bool(d.get("feedthrough", False)),
        )
    if kind == "fl":
        s = d["solver"]
        return FLPredictor(
            arrays["U_past"], arrays["Y_past"], arrays["U_future"], arrays["Y_future"],
            dims["m"], dims["p"], dims["n_past"], dims["n_future"],
            s["lambda1"], s["lambda2"], s["tol"], s["max_iter"],
        )
    raise SchemaError(f"unknown predictor kind {kind!r}")


def save_predictor(pred, path) -> None:
    with open(path, "w") as fh:
        json.dump(predictor_to_dict(pred), fh)


def load_predictor(path):
    with open(path) as fh:
        return predictor_from_dict(json.load(fh))
