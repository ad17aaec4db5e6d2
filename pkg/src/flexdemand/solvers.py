"""Convex regression kernels.

* :func:`least_squares` -- ridge-regularized multi-output least squares.
* :func:`quantile_regression` -- pinball-loss regression as a linear program.
* :func:`solve_l1l2_equality` -- ``min l1*|g|_1 + l2*|g|^2  s.t.  H g = h`` by ADMM.
"""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
from scipy.optimize import linprog

from .errors import DimensionError, EmptyDataError, SingularMatrixError

log = logging.getLogger(__name__)

__all__ = [
    "SolveReport",
    "RegressorFactorization",
    "least_squares",
    "default_ridge",
    "pinball_loss",
    "quantile_regression",
    "quantile_regression_joint",
    "EqualityProjector",
    "solve_l1l2_equality",
]

_EPS = np.finfo(float).eps


def default_ridge(Z) -> float:
    """``1e-8 * trace(Z Z^T) / rows(Z)``."""
    Z = np.asarray(Z, dtype=float)
    return 1e-8 * float(np.sum(Z * Z)) / Z.shape[0]


class RegressorFactorization:
    """QR factorization of a regressor ``Z`` (``q x N``) reused across targets.

    Because ``R`` is upper triangular, the least-squares problem restricted to
    the first ``k`` regressor rows is solved by the leading ``k x k`` block of
    ``R`` and the first ``k`` entries of ``Q^T y``. The ridge term is folded in
    by factoring ``[Z^T; sqrt(ridge) I]``, which keeps that prefix property.
    """

    def __init__(self, Z, ridge: float = 0.0):
        Z = np.asarray(Z, dtype=float)
        if Z.ndim != 2:
            raise DimensionError("Z must be a 2-D array")
        q, N = Z.shape
        if N < 1:
            raise EmptyDataError("least squares needs at least one column")
        if ridge < 0:
            raise ValueError("ridge must be non-negative")
        self.q, self.n_obs, self.ridge = q, N, float(ridge)
        A = Z.T
        if ridge > 0:
            A = np.vstack([A, np.sqrt(ridge) * np.eye(q)])
        elif N < q:
            raise SingularMatrixError(
                f"Z Z^T is singular ({N} columns for {q} regressors); use ridge > 0"
            )
        Q, R = sla.qr(A, mode="economic", check_finite=False)
        if ridge == 0:
            d = np.abs(np.diag(R))
            if d.min() <= max(A.shape) * _EPS * d.max():
                raise SingularMatrixError("Z Z^T is singular (rank-deficient Z); use ridge > 0")
        self._Qtop = Q[:N]
        self.R = R

    def project(self, Y) -> np.ndarray:
        """``Q^T [Y^T; 0]`` for targets ``Y`` (``r x N``); result is ``q x r``."""
        Y = np.atleast_2d(np.asarray(Y, dtype=float))
        if Y.shape[1] != self.n_obs:
            raise DimensionError(f"targets have {Y.shape[1]} columns, regressor has {self.n_obs}")
        return self._Qtop.T @ Y.T

    def solve(self, QtY, k: int | None = None) -> np.ndarray:
        """Coefficients (``r x k``) using only the first ``k`` regressor rows."""
        k = self.q if k is None else k
        if k == 0:
            return np.zeros((QtY.shape[1], 0))
        return sla.solve_triangular(self.R[:k, :k], QtY[:k], check_finite=False).T


def least_squares(Z, Y, ridge: float = 0.0) -> np.ndarray:
    """Solve ``min_X ||Y - X Z||_F^2 + ridge ||X||_F^2``.

    Parameters
    ----------
    Z : (q, N) array
        Regressor, one observation per column.
    Y : (r, N) array
        Targets, one observation per column.
    ridge : float
        Tikhonov weight. With ``ridge = 0`` the result equals
        ``Y Z^T (Z Z^T)^{-1}``, and a singular ``Z Z^T`` raises
        :class:`SingularMatrixError`.

    Returns
    -------
    X : (r, q) array
    """
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    fac = RegressorFactorization(Z, ridge)
    return fac.solve(fac.project(Y))


# ---------------------------------------------------------------------------
# quantile regression


def pinball_loss(residual, tau: float) -> np.ndarray:
    """Elementwise ``tau * max(r, 0) + (1 - tau) * max(-r, 0)``."""
    r = np.asarray(residual, dtype=float)
    return tau * np.maximum(r, 0.0) + (1.0 - tau) * np.maximum(-r, 0.0)


_HIGHS_OPTS = {
    "primal_feasibility_tolerance": 1e-10,
    "dual_feasibility_tolerance": 1e-10,
}


def quantile_regression(A, b, tau: float, tie_break: bool = True) -> np.ndarray:
    """Minimize ``sum_i pinball(b_i - a_i^T x, tau)`` over ``x``.

    The problem is solved as a linear program (HiGHS). Optima need not be
    unique; they form a polytope. With ``tie_break`` a second LP picks, among
    all optimizers, the one of smallest l1 norm, i.e. the optimizer closest to
    a zero start. For a constant-only model on positive data that is the
    smallest optimal value.

    All-zero columns of ``A`` are dropped with a warning and their coefficient
    is pinned to zero.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    b = np.asarray(b, dtype=float).ravel()
    N, q = A.shape
    if b.shape[0] != N:
        raise DimensionError(f"A has {N} rows, b has {b.shape[0]}")
    if not 0.0 < tau < 1.0:
        raise ValueError("tau must lie in (0, 1)")
    if N < q:
        raise EmptyDataError(f"quantile regression needs N >= q, got N={N}, q={q}")
    live = np.any(A != 0.0, axis=0)
    x = np.zeros(q)
    if not live.all():
        warnings.warn(
            f"columns {np.flatnonzero(~live).tolist()} are all zero; coefficients pinned to 0",
            RuntimeWarning,
            stacklevel=2,
        )
    if not live.any():
        return x
    Al = A[:, live]
    ql = Al.shape[1]
    eye = sp.identity(N, format="csr")
    As = sp.csr_matrix(Al)

    # variables: [x (free), r+ (>=0), r- (>=0)]
    c = np.concatenate([np.zeros(ql), np.full(N, tau), np.full(N, 1.0 - tau)])
    A_eq = sp.hstack([As, eye, -eye], format="csr")
    bounds = [(None, None)] * ql + [(0, None)] * (2 * N)
    res = linprog(c, A_eq=A_eq, b_eq=b, bounds=bounds, method="highs", options=_HIGHS_OPTS)
    if res.status != 0:
        raise ArithmeticError(f"quantile LP failed: {res.message}")
    x1 = res.x[:ql]
    best = float(np.sum(pinball_loss(b - Al @ x1, tau)))
    xl = x1
    if tie_break:
        # variables: [x+ (>=0), x- (>=0), r+ (>=0), r- (>=0)]
        slack = 1e-11 * (1.0 + abs(best))
        c2 = np.concatenate([np.ones(2 * ql), np.zeros(2 * N)])
        A_eq2 = sp.hstack([As, -As, eye, -eye], format="csr")
        A_ub2 = np.concatenate([np.zeros(2 * ql), np.full(N, tau), np.full(N, 1.0 - tau)])[None, :]
        res2 = linprog(
            c2, A_ub=A_ub2, b_ub=[best + slack], A_eq=A_eq2, b_eq=b,
            bounds=[(0, None)] * (2 * ql + 2 * N), method="highs", options=_HIGHS_OPTS,
        )
        if res2.status == 0:
            x2 = res2.x[:ql] - res2.x[ql:2 * ql]
            obj2 = float(np.sum(pinball_loss(b - Al @ x2, tau)))
            if obj2 <= best + 2 * slack:
                xl = x2
            else:
                log.debug("tie-break LP drifted (%.3e > %.3e); keeping first solution", obj2, best)
    x[live] = xl
    return x


def quantile_regression_joint(A, b, taus, noncrossing: bool = True) -> np.ndarray:
    """Fit several quantile levels in one LP; returns ``(len(taus), q)``.

    With ``noncrossing`` the fitted values at every row of ``A`` are
    constrained to be non-decreasing in ``tau``. Without it the result is the
    same as separate fits (up to ties).
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    b = np.asarray(b, dtype=float).ravel()
    taus = [float(t) for t in taus]
    N, q = A.shape
    if b.shape[0] != N:
        raise DimensionError(f"A has {N} rows, b has {b.shape[0]}")
    if any(not 0.0 < t < 1.0 for t in taus) or list(taus) != sorted(set(taus)):
        raise ValueError("taus must be strictly increasing values in (0, 1)")
    if N < q:
        raise EmptyDataError(f"quantile regression needs N >= q, got N={N}, q={q}")
    J = len(taus)
    As = sp.csr_matrix(A)
    eye = sp.identity(N, format="csr")
    nv = q + 2 * N
    # per level: [x_j (free), r+_j (>=0), r-_j (>=0)]
    c = np.concatenate([np.concatenate([np.zeros(q), np.full(N, t), np.full(N, 1.0 - t)]) for t in taus])
    A_eq = sp.block_diag([sp.hstack([As, eye, -eye]) for _ in taus], format="csr")
    b_eq = np.tile(b, J)
    A_ub = b_ub = None
    if noncrossing and J > 1:
        rows = []
        for j in range(J - 1):
            blocks = [None] * J
            blocks[j] = sp.hstack([As, sp.csr_matrix((N, 2 * N))])
            blocks[j + 1] = sp.hstack([-As, sp.csr_matrix((N, 2 * N))])
            for k in range(J):
                if blocks[k] is None:
                    blocks[k] = sp.csr_matrix((N, nv))
            rows.append(sp.hstack(blocks))
        A_ub = sp.vstack(rows, format="csr")
        b_ub = np.zeros(A_ub.shape[0])
    bounds = ([(None, None)] * q + [(0, None)] * (2 * N)) * J
    res = linprog(c, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=b_eq, bounds=bounds,
                  method="highs", options=_HIGHS_OPTS)
    if res.status != 0:
        raise ArithmeticError(f"joint quantile LP failed: {res.message}")
    return np.array([res.x[j * nv:j * nv + q] for j in range(J)])


# ---------------------------------------------------------------------------
# l1/l2-regularized equality-constrained program


@dataclass
class SolveReport:
    iterations: int
    primal_residual: float
    dual_residual: float
    objective: float
    status: str
    constraint_residual: float = 0.0
    rho: float = 0.0
    objective_history: list = field(default_factory=list, repr=False)


class EqualityProjector:
    """Cached SVD of ``H`` for projecting onto ``{g : H g = h}``.

    Singular values below ``rcond * s_max`` are treated as zero, so
    rank-deficient but consistent systems (noise-free Hankel data) are handled.
    """

    def __init__(self, H, rcond: float | None = None):
        H = np.atleast_2d(np.asarray(H, dtype=float))
        self.H = H
        U, s, Vt = sla.svd(H, full_matrices=False, check_finite=False)
        if rcond is None:
            rcond = max(H.shape) * _EPS
        r = int(np.sum(s > rcond * (s[0] if s.size else 0.0)))
        self.rank = r
        self._U = U[:, :r]
        self._s = s[:r]
        self._V = Vt[:r].T

    def min_norm(self, h) -> np.ndarray:
        """Minimum-norm least-squares solution ``H^+ h``."""
        return self._V @ ((self._U.T @ h) / self._s)

    def project(self, v, g0) -> np.ndarray:
        """Project ``v`` onto the affine set through ``g0 = H^+ h``."""
        return v - self._V @ (self._V.T @ v) + g0

    def constraint_residual(self, g, h) -> float:
        return float(np.linalg.norm(self.H @ g - h) / (1.0 + np.linalg.norm(h)))


def _objective(g, lam1, lam2) -> float:
    return float(lam1 * np.sum(np.abs(g)) + lam2 * np.dot(g, g))


def _soft(x, t):
    return np.sign(x) * np.maximum(np.abs(x) - t, 0.0)


def _polish(H, h, z, lam1, lam2):
    """Re-solve on the support and sign pattern of ``z``."""
    S = np.flatnonzero(z)
    g = np.zeros_like(z)
    if S.size == 0:
        return g
    HS = H[:, S]
    s = np.sign(z[S])
    if lam2 > 0:
        c = -lam1 * s / (2.0 * lam2)
        corr, *_ = np.linalg.lstsq(HS, HS @ c - h, rcond=None)
        gS = c - corr
    else:
        gS, *_ = np.linalg.lstsq(HS, h, rcond=None)
    if np.any(np.sign(gS) * s < 0):
        return None
    g[S] = gS
    return g


def solve_l1l2_equality(
    H,
    h,
    lambda1: float,
    lambda2: float,
    tol: float = 1e-6,
    max_iter: int = 10000,
    projector: EqualityProjector | None = None,
    rho: float | None = None,
):
    """Solve ``min lambda1 ||g||_1 + lambda2 ||g||_2^2  s.t.  H g = h``.

    ADMM on the split ``g = z``: the ``g`` step is a projection onto the
    affine constraint set (cached SVD), the ``z`` step is soft thresholding.
    The penalty parameter is rebalanced by the ratio of primal and dual
    residuals. Every ``g`` iterate is feasible, and the best one seen so far
    is kept as the incumbent; a final re-solve on the detected support is
    accepted when it keeps the sign pattern and lowers the objective.

    Returns ``(g, SolveReport)``. If ``h`` is not reachable within ``tol``
    the status is ``"infeasible"`` and ``g`` is the least-squares point.
    """
    H = np.atleast_2d(np.asarray(H, dtype=float))
    h = np.asarray(h, dtype=float).ravel()
    if H.shape[0] != h.shape[0]:
        raise DimensionError(f"H has {H.shape[0]} rows, h has {h.shape[0]}")
    if lambda1 < 0 or lambda2 < 0:
        raise ValueError("regularization weights must be non-negative")
    P = projector if projector is not None else EqualityProjector(H)
    g0 = P.min_norm(h)
    feas = P.constraint_residual(g0, h)
    history = [_objective(g0, lambda1, lambda2)]
    if feas > tol:
        return g0, SolveReport(0, feas, 0.0, history[0], "infeasible", feas, 0.0, history)
    if lambda1 == 0.0 or not np.any(g0):
        # minimum-norm point is optimal for a pure l2 objective (and for h = 0)
        return g0, SolveReport(0, 0.0, 0.0, history[0], "converged", feas, 0.0, history)

    n = g0.size
    if rho is None:
        rho = max(2.0 * lambda2, lambda1 / max(np.max(np.abs(g0)), 1e-12))
    best_g, best = g0, history[0]
    z = g0.copy()
    w = np.zeros(n)
    status, r_rel, s_rel, it = "max_iter", np.inf, np.inf, 0
    for it in range(1, max_iter + 1):
        v = (rho / (2.0 * lambda2 + rho)) * (z - w)
        g = P.project(v, g0)
        z_old = z
        z = _soft(g + w, lambda1 / rho)
        w = w + g - z
        r_rel = np.linalg.norm(g - z) / max(np.linalg.norm(g), np.linalg.norm(z), 1e-300)
        s_rel = rho * np.linalg.norm(z - z_old) / max(rho * np.linalg.norm(w), 1e-300)
        obj = _objective(g, lambda1, lambda2)
        if obj <= best:
            best_g, best = g, obj
            history.append(obj)
        if r_rel <= tol and s_rel <= tol:
            status = "converged"
            break
        if it % 10 == 0:
            if r_rel > 10.0 * s_rel:
                rho *= 2.0
                w /= 2.0
            elif s_rel > 10.0 * r_rel:
                rho /= 2.0
                w *= 2.0

    gp = _polish(P.H, h, z, lambda1, lambda2)
    if gp is not None and P.constraint_residual(gp, h) <= tol:
        obj = _objective(gp, lambda1, lambda2)
        if obj <= best:
            best_g, best = gp, obj
            history.append(obj)
    report = SolveReport(
        iterations=it,
        primal_residual=float(r_rel),
        dual_residual=float(s_rel),
        objective=best,
        status=status,
        constraint_residual=P.constraint_residual(best_g, h),
        rho=float(rho),
        objective_history=history,
    )
    return best_g, report
