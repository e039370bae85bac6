"""Function tables: named columns over a common distance grid.

Undefined entries are NaN in memory and empty fields in CSV, never silent
zeros.
"""

from __future__ import annotations

import numpy as np

from .geometry import Window

__all__ = ["FunctionTable", "default_r_grid", "check_r_grid"]


def default_r_grid(window: Window, n: int = 513, r_max: float = None) -> np.ndarray:
    """Evaluation grid starting at 0; default reach is a quarter short side."""
    if r_max is None:
        r_max = window.shortest_side / 4.0
    return np.linspace(0.0, float(r_max), int(n))


def check_r_grid(r) -> np.ndarray:
    r = np.asarray(r, dtype=float)
    if r.ndim != 1 or len(r) < 1:
        raise ValueError("r grid must be a nonempty 1-d array")
    if r[0] != 0.0:
        raise ValueError("r grid must start at 0")
    if len(r) > 1 and not np.all(np.diff(r) > 0):
        raise ValueError("r grid must be strictly increasing")
    return r


class FunctionTable:
    """Columns of equal length indexed by a distance grid ``r``."""

    def __init__(self, r, columns=None, meta=None):
        self.r = np.asarray(r, dtype=float)
        self.columns: dict[str, np.ndarray] = {}
        self.meta = dict(meta) if meta else {}
        if columns:
            for name, col in columns.items():
                self[name] = col

    def __setitem__(self, name, col):
        col = np.asarray(col, dtype=float)
        if col.shape != self.r.shape:
            raise ValueError(f"column {name!r} length {col.shape} does not "
                             f"match grid length {self.r.shape}")
        self.columns[name] = col

    def __getitem__(self, name) -> np.ndarray:
        return self.columns[name]

    def __contains__(self, name) -> bool:
        return name in self.columns

    def keys(self):
        return self.columns.keys()

    def __repr__(self):
        return (f"FunctionTable(n_r={len(self.r)}, "
                f"columns={list(self.columns)})")

    def to_csv(self, path) -> None:
        names = ["r"] + list(self.columns)
        with open(path, "w") as fh:
            fh.write(",".join(names) + "\n")
            cols = [self.r] + [self.columns[k] for k in self.columns]
            for row in zip(*cols):
                fh.write(",".join("" if np.isnan(v) else repr(float(v))
                                  for v in row) + "\n")

    @classmethod
    def from_csv(cls, path) -> "FunctionTable":
        with open(path) as fh:
            header = fh.readline().strip().split(",")
            rows = [line.rstrip("\n").split(",") for line in fh if line.strip()]
        data = np.array([[np.nan if v == "" else float(v) for v in row]
                         for row in rows])
        if header[0] != "r":
            raise ValueError("first column must be r")
        t = cls(data[:, 0])
        for k, name in enumerate(header[1:], start=1):
            t[name] = data[:, k]
        return t
