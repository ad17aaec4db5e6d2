"""Hankel matrices and the stacked past/future data blocks."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, EmptyDataError

__all__ = ["hankel", "TrajectoryData", "build_trajectory_data"]


def hankel(seq, i: int, s: int, n_cols: int) -> np.ndarray:
    """Block Hankel matrix of ``seq`` with ``s`` block rows and ``n_cols`` columns.

    ``seq`` is an ``(L, d)`` array (or a length-``L`` vector for ``d = 1``).
    Block ``(r, c)`` of the result is ``seq[i + r + c]``, so the output has
    shape ``(d * s, n_cols)``.

    >>> hankel([1, 2, 3, 4, 5], 0, 2, 3)
    array([[1., 2., 3.],
           [2., 3., 4.]])
    """
    a = np.asarray(seq, dtype=float)
    if a.ndim == 1:
        a = a[:, None]
    L, d = a.shape
    if i < 0 or s < 1 or n_cols < 1:
        raise DimensionError("need i >= 0, s >= 1 and n_cols >= 1")
    need = i + s + n_cols - 1
    if need > L:
        raise DimensionError(
            f"hankel needs a sequence of length >= {need} (i={i}, s={s}, n_cols={n_cols}), got {L}"
        )
    # windows[c, :, r] == a[i + c + r]
    windows = np.lib.stride_tricks.sliding_window_view(a[i:need], s, axis=0)
    return np.ascontiguousarray(windows.transpose(2, 1, 0).reshape(s * d, n_cols))


@dataclass(frozen=True)
class TrajectoryData:
    """Past and future Hankel blocks, concatenated over data segments.

    Column ``j`` of every block is the same window of length
    ``n_past + n_future`` taken from segment ``origins[j, 0]`` starting at
    sample ``origins[j, 1]``.
    """

    U_past: np.ndarray
    Y_past: np.ndarray
    U_future: np.ndarray
    Y_future: np.ndarray
    m: int
    p: int
    n_past: int
    n_future: int
    origins: np.ndarray
    _cache: dict = field(default_factory=dict, compare=False, repr=False)

    @property
    def n_cols(self) -> int:
        return self.U_past.shape[1]

    @property
    def dims(self) -> tuple[int, int, int, int, int]:
        return self.m, self.p, self.n_past, self.n_future, self.n_cols

    def past(self) -> np.ndarray:
        """``[U_past; Y_past]``."""
        return np.vstack([self.U_past, self.Y_past])

    def stacked(self) -> np.ndarray:
        """The regressor ``[U_past; Y_past; U_future]``."""
        return np.vstack([self.U_past, self.Y_past, self.U_future])

    def dump_csv(self, path) -> None:
        """Write the stacked regressor as CSV, one row per regressor row (debug aid)."""
        Z = self.stacked()
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            for row in Z:
                w.writerow([repr(float(v)) for v in row])


def _as_uy(table):
    if hasattr(table, "u") and hasattr(table, "y"):
        return np.asarray(table.u, dtype=float), np.asarray(table.y, dtype=float)
    u, y = table
    return np.asarray(u, dtype=float), np.asarray(y, dtype=float)


def build_trajectory_data(tables, n_past: int = 24, n_future: int = 144) -> TrajectoryData:
    """Slide a window of length ``n_past + n_future`` over every segment.

    ``tables`` is a sequence of IOTables (or ``(u, y)`` pairs). Windows are
    taken at unit stride and never cross a segment boundary; columns from
    successive segments are concatenated in input order.
    """
    if n_past < 1 or n_future < 1:
        raise DimensionError("n_past and n_future must both be >= 1")
    if hasattr(tables, "u"):
        tables = [tables]
    width = n_past + n_future
    blocks = {"Up": [], "Yp": [], "Uf": [], "Yf": []}
    origins = []
    m = p = None
    for seg, table in enumerate(tables):
        u, y = _as_uy(table)
        if u.shape[0] != y.shape[0]:
            raise DimensionError(f"segment {seg}: u has {u.shape[0]} rows, y has {y.shape[0]}")
        if m is None:
            m, p = u.shape[1], y.shape[1]
        elif (u.shape[1], y.shape[1]) != (m, p):
            raise DimensionError(f"segment {seg}: channel counts differ from the first segment")
        cols = u.shape[0] - width + 1
        if cols < 1:
            continue
        blocks["Up"].append(hankel(u, 0, n_past, cols))
        blocks["Yp"].append(hankel(y, 0, n_past, cols))
        blocks["Uf"].append(hankel(u, n_past, n_future, cols))
        blocks["Yf"].append(hankel(y, n_past, n_future, cols))
        origins.append(np.column_stack([np.full(cols, seg), np.arange(cols)]))
    if not origins:
        raise EmptyDataError(f"no segment has the {width} samples needed for one window")
    return TrajectoryData(
        U_past=np.hstack(blocks["Up"]),
        Y_past=np.hstack(blocks["Yp"]),
        U_future=np.hstack(blocks["Uf"]),
        Y_future=np.hstack(blocks["Yf"]),
        m=m,
        p=p,
        n_past=n_past,
        n_future=n_future,
        origins=np.vstack(origins),
    )
