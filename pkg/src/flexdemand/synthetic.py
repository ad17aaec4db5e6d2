"""Synthetic ground truth: stable LTI systems, simulation and excitation signals.

Everything here exists to give the predictors something with a known answer.
Systems are written in innovation form::

    x[k+1] = A x[k] + B u[k] + K e[k]
    y[k]   = C x[k] + D u[k] + e[k]

and the matching predictor form uses ``A - K C`` and ``B - K D``.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
from scipy.stats import ortho_group

from .trajectory import hankel

__all__ = [
    "LTISystem",
    "random_stable_lti",
    "simulate",
    "prbs",
    "rc_house",
    "rc_house_inputs",
    "data_equation_residual",
    "write_ingest_csv",
    "energy_records",
]


@dataclass(frozen=True)
class LTISystem:
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray
    K: np.ndarray

    def __post_init__(self):
        n, m, p = self.A.shape[0], self.B.shape[1], self.C.shape[0]
        shapes = {"A": (n, n), "B": (n, m), "C": (p, n), "D": (p, m), "K": (n, p)}
        for name, shape in shapes.items():
            if getattr(self, name).shape != shape:
                raise ValueError(f"{name} has shape {getattr(self, name).shape}, expected {shape}")

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[1]

    @property
    def p(self) -> int:
        return self.C.shape[0]

    @property
    def spectral_radius(self) -> float:
        return float(np.max(np.abs(np.linalg.eigvals(self.A))))

    def predictor_form(self) -> tuple[np.ndarray, np.ndarray]:
        """Return ``(A - K C, B - K D)``."""
        return self.A - self.K @ self.C, self.B - self.K @ self.D

    def markov_parameters(self, count: int) -> list[np.ndarray]:
        """Impulse response ``[D, C B, C A B, ...]`` with ``count`` entries."""
        out = [self.D.copy()]
        Ak_B = self.B
        for _ in range(count - 1):
            out.append(self.C @ Ak_B)
            Ak_B = self.A @ Ak_B
        return out

    def observability(self, horizon: int) -> np.ndarray:
        """Extended observability matrix ``[C; C A; ...; C A^(horizon-1)]``."""
        rows, CA = [], self.C
        for _ in range(horizon):
            rows.append(CA)
            CA = CA @ self.A
        return np.vstack(rows)

    def toeplitz(self, horizon: int, gain: str = "B") -> np.ndarray:
        """Lower block-triangular Toeplitz matrix of the input (``"B"``) or noise (``"K"``) path."""
        if gain == "B":
            G, F = self.B, self.D
        elif gain == "K":
            G, F = self.K, np.eye(self.p)
        else:
            raise ValueError("gain must be 'B' or 'K'")
        p, w = self.p, G.shape[1]
        blocks = [F]
        AkG = G
        for _ in range(horizon - 1):
            blocks.append(self.C @ AkG)
            AkG = self.A @ AkG
        T = np.zeros((p * horizon, w * horizon))
        for i in range(horizon):
            for j in range(i + 1):
                T[i * p:(i + 1) * p, j * w:(j + 1) * w] = blocks[i - j]
        return T

    def past_controllability(self, n_past: int) -> np.ndarray:
        """Predictor-form controllability ``[K_B, K_K]`` mapping stacked past ``[u; y]`` to the state."""
        At, Bt = self.predictor_form()
        KB, KK = [], []
        Ak = np.eye(self.n)
        for _ in range(n_past):
            KB.append(Ak @ Bt)
            KK.append(Ak @ self.K)
            Ak = At @ Ak
        return np.hstack(KB[::-1] + KK[::-1])


def _stable_dynamics(n: int, rho_max: float, rng: np.random.Generator) -> np.ndarray:
    blocks = []
    while sum(b.shape[0] for b in blocks) < n:
        r = rng.uniform(0.3 * rho_max, rho_max)
        if n - sum(b.shape[0] for b in blocks) >= 2 and rng.random() < 0.5:
            th = rng.uniform(0.05, np.pi - 0.05)
            blocks.append(r * np.array([[np.cos(th), -np.sin(th)], [np.sin(th), np.cos(th)]]))
        else:
            blocks.append(np.array([[r * rng.choice([-1.0, 1.0])]]))
    A0 = sla.block_diag(*blocks)
    if n == 1:
        return A0
    Q = ortho_group.rvs(n, random_state=rng)
    return Q @ A0 @ Q.T


def random_stable_lti(
    n: int,
    m: int,
    p: int,
    rho_max: float = 0.9,
    seed=None,
    feedthrough: bool = False,
) -> LTISystem:
    """Draw a random stable system with spectral radius at most ``rho_max``.

    ``A`` is an orthogonal similarity of a block-diagonal matrix of real poles
    and rotations, so it is normal and its powers decay without transient
    growth. ``K`` is the steady-state Kalman gain for unit process and
    measurement covariances, which makes ``A - K C`` stable as well.
    ``D`` is zero unless ``feedthrough`` is set.
    """
    if min(n, m, p) < 1:
        raise ValueError("n, m and p must be positive")
    if not 0.0 < rho_max < 1.0:
        raise ValueError("rho_max must lie in (0, 1)")
    rng = np.random.default_rng(seed)
    A = _stable_dynamics(n, rho_max, rng)
    B = rng.standard_normal((n, m))
    C = rng.standard_normal((p, n))
    D = rng.standard_normal((p, m)) if feedthrough else np.zeros((p, m))
    P = sla.solve_discrete_are(A.T, C.T, np.eye(n), np.eye(p))
    K = A @ P @ C.T @ np.linalg.inv(C @ P @ C.T + np.eye(p))
    return LTISystem(A, B, C, D, K)


def simulate(
    sys: LTISystem,
    u,
    noise_std: float = 0.0,
    seed=None,
    x0=None,
    noise: str = "innovation",
    return_states: bool = False,
):
    """Simulate ``sys`` driven by ``u`` (shape ``(N, m)``).

    ``noise="innovation"`` feeds ``e`` through ``K`` into the state as well as
    the output; ``noise="output"`` adds ``e`` to the output only.

    Returns ``y`` of shape ``(N, p)``, or ``(y, x, e)`` with ``x`` of shape
    ``(N + 1, n)`` when ``return_states`` is set.
    """
    u = np.atleast_2d(np.asarray(u, dtype=float))
    if u.shape[0] == 1 and sys.m != 1:
        u = u.reshape(-1, sys.m)
    if u.shape[1] != sys.m:
        raise ValueError(f"input has {u.shape[1]} channels, system expects {sys.m}")
    if noise not in ("innovation", "output"):
        raise ValueError("noise must be 'innovation' or 'output'")
    N = u.shape[0]
    rng = np.random.default_rng(seed)
    e = noise_std * rng.standard_normal((N, sys.p)) if noise_std > 0 else np.zeros((N, sys.p))
    K = sys.K if noise == "innovation" else np.zeros_like(sys.K)
    x = np.zeros((N + 1, sys.n))
    if x0 is not None:
        x[0] = x0
    y = np.empty((N, sys.p))
    for k in range(N):
        y[k] = sys.C @ x[k] + sys.D @ u[k] + e[k]
        x[k + 1] = sys.A @ x[k] + sys.B @ u[k] + K @ e[k]
    if return_states:
        return y, x, e
    return y


def prbs(length: int, m: int = 1, seed=None, hold: int = 1) -> np.ndarray:
    """Pseudo-random binary sequence of +/-1 values, shape ``(length, m)``.

    Each channel switches with probability 1/2 at every multiple of ``hold``.
    """
    if length < 1:
        raise ValueError("length must be at least 1")
    rng = np.random.default_rng(seed)
    n_blocks = -(-length // hold)
    levels = rng.choice([-1.0, 1.0], size=(n_blocks, m))
    return np.repeat(levels, hold, axis=0)[:length]


# Zone coupling and loss time constants in hours. Fixture values, chosen so the
# slow and fast modes fall in the 2-20 h range at 5-minute sampling.
_RC_LOSS_H = np.array([16.0, 12.0, 20.0, 9.0])
_RC_COUPLING_H = {(0, 1): 9.0, (1, 2): 12.0, (2, 3): 8.0, (0, 3): 14.0}
_RC_HEATER_K_PER_H = np.array([1.2, 1.5, 1.0, 1.8])


def rc_house(period: float = 300.0) -> LTISystem:
    """Four-zone RC thermal network sampled at ``period`` seconds.

    Inputs are the four heater features and the outdoor temperature; outputs
    are the four zone temperatures (the state is measured directly).
    """
    n = 4
    Ac = np.zeros((n, n))
    Bc = np.zeros((n, n + 1))
    for i in range(n):
        Ac[i, i] -= 1.0 / _RC_LOSS_H[i]
        Bc[i, n] = 1.0 / _RC_LOSS_H[i]
        Bc[i, i] = _RC_HEATER_K_PER_H[i]
    for (i, j), tau in _RC_COUPLING_H.items():
        Ac[i, i] -= 1.0 / tau
        Ac[j, j] -= 1.0 / tau
        Ac[i, j] += 1.0 / tau
        Ac[j, i] += 1.0 / tau
    dt_h = period / 3600.0
    # Zero-order-hold discretization via the augmented exponential.
    M = np.zeros((2 * n + 1, 2 * n + 1))
    M[:n, :n] = Ac * dt_h
    M[:n, n:] = Bc * dt_h
    E = sla.expm(M)
    A, B = E[:n, :n], E[:n, n:]
    return LTISystem(A, B, np.eye(n), np.zeros((n, n + 1)), np.zeros((n, n)))


def rc_house_inputs(length: int, seed=None, period: float = 300.0) -> np.ndarray:
    """Plausible excitation for :func:`rc_house`, shape ``(length, 5)``.

    Heater features are piecewise constant in ``[-2.5, 2.5]`` with hold times
    of 1-4 hours; the outdoor temperature is a daily cycle around -3 degC plus
    a slow random walk.
    """
    rng = np.random.default_rng(seed)
    steps_per_h = int(round(3600.0 / period))
    u = np.empty((length, 5))
    for i in range(4):
        k = 0
        while k < length:
            dur = steps_per_h * int(rng.integers(1, 5))
            u[k:k + dur, i] = rng.uniform(-2.5, 2.5)
            k += dur
    t_h = np.arange(length) / steps_per_h
    walk = np.cumsum(rng.standard_normal(length)) * 0.02
    u[:, 4] = -3.0 + 4.0 * np.sin(2 * np.pi * (t_h - 9.0) / 24.0) + walk
    return u


def data_equation_residual(sys: LTISystem, u, y, x, e, n_past: int, n_future: int) -> float:
    """Max-abs residual of the data equation with the true system substituted.

    The equation is used in its exact form: the initial-state term
    ``Gamma (A - K C)^n_past x_k`` is kept, so the residual is at rounding
    level for any stable system, noisy or not.
    """
    u, y, x, e = (np.asarray(a, dtype=float) for a in (u, y, x, e))
    L = u.shape[0]
    n_cols = L - n_past - n_future + 1
    Up = hankel(u, 0, n_past, n_cols)
    Yp = hankel(y, 0, n_past, n_cols)
    Uf = hankel(u, n_past, n_future, n_cols)
    Yf = hankel(y, n_past, n_future, n_cols)
    Ef = hankel(e, n_past, n_future, n_cols)
    Gamma = sys.observability(n_future)
    At, _ = sys.predictor_form()
    Xk = x[:n_cols].T
    lhs = Gamma @ (np.linalg.matrix_power(At, n_past) @ Xk
                   + sys.past_controllability(n_past) @ np.vstack([Up, Yp]))
    lhs = lhs + sys.toeplitz(n_future, "B") @ Uf + sys.toeplitz(n_future, "K") @ Ef
    return float(np.max(np.abs(Yf - lhs)))


def write_ingest_csv(stream, t0: float, period: float, u, y,
                     input_names=None, output_names=None) -> None:
    """Write a table in the direct-column ingest format (epoch-second timestamps)."""
    u = np.asarray(u, dtype=float)
    y = np.asarray(y, dtype=float)
    input_names = input_names or [f"u{i + 1}" for i in range(u.shape[1])]
    output_names = output_names or [f"y{i + 1}" for i in range(y.shape[1])]
    w = csv.writer(stream, lineterminator="\n")
    w.writerow(["time", *input_names, *output_names])
    for k in range(u.shape[0]):
        w.writerow([repr(float(t0 + k * period)), *map(repr, u[k].tolist()), *map(repr, y[k].tolist())])


def energy_records(count: int, alpha_out: float, alpha_on, alpha_feat, seed=None,
                   noise_scale: float = 0.0, t0: float = 0.0):
    """Hourly records with energy ``alpha . x + noise``, ``x = [t_out, on_count, feature_sum]``.

    Every hour has at least one unit on. The noise is heteroscedastic:
    ``noise_scale * (total on samples / 12) * N(0, 1)``, so every conditional
    quantile of the energy is still linear in the features.
    Returns ``(records, sigma)`` with ``sigma`` the per-record noise std.
    """
    from .energy import HourlyRecord

    rng = np.random.default_rng(seed)
    a_on = np.asarray(alpha_on, dtype=float)
    a_feat = np.asarray(alpha_feat, dtype=float)
    n = a_on.size
    t_out = rng.uniform(-15.0, 10.0, count)
    on = rng.integers(0, 13, (count, n)).astype(float)
    on[on.sum(axis=1) == 0, 0] = 1.0
    feat = on * rng.uniform(0.2, 2.5, (count, n))
    mean = alpha_out * t_out + on @ a_on + feat @ a_feat
    sigma = noise_scale * on.sum(axis=1) / 12.0
    energy = mean + sigma * rng.standard_normal(count)
    recs = [HourlyRecord(t0 + 3600.0 * i, float(t_out[i]), on[i], feat[i], float(energy[i]))
            for i in range(count)]
    return recs, sigma
