"""Point patterns in a rectangular window and the free/fixed border split."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .geometry import BucketGrid, Window, erode

__all__ = [
    "PointPattern",
    "BorderSplit",
    "nn_distance",
    "nn_distances",
    "close_pair_count",
    "split_border",
]


class PointPattern:
    """A finite set of distinct planar points bound to a window.

    Immutable after construction.  Points exactly on the window boundary are
    accepted; duplicate coordinates are rejected.
    """

    def __init__(self, points, window: Window):
        pts = np.asarray(points, dtype=float)
        if pts.size == 0:
            pts = np.empty((0, 2))
        if pts.ndim != 2 or pts.shape[1] != 2:
            raise ValueError("points must be an (n, 2) array")
        if not np.all(np.isfinite(pts)):
            raise ValueError("point coordinates must be finite")
        if not np.all(window.contains(pts)):
            raise ValueError("all points must lie inside the window")
        if len(pts) > 1:
            order = np.lexsort((pts[:, 1], pts[:, 0]))
            s = pts[order]
            if np.any(np.all(s[1:] == s[:-1], axis=1)):
                raise ValueError("duplicate points are not allowed")
        self.points = pts
        self.points.setflags(write=False)
        self.window = window

    @property
    def n(self) -> int:
        return len(self.points)

    def __len__(self) -> int:
        return self.n

    def __repr__(self):
        w = self.window
        return (f"PointPattern(n={self.n}, window=[{w.x_min}, {w.x_max}] x "
                f"[{w.y_min}, {w.y_max}])")

    def subset(self, idx) -> "PointPattern":
        return PointPattern(self.points[idx], self.window)

    def drop(self, i: int) -> "PointPattern":
        keep = np.ones(self.n, dtype=bool)
        keep[i] = False
        return PointPattern(self.points[keep], self.window)

    def add(self, u) -> "PointPattern":
        return PointPattern(np.vstack([self.points, np.asarray(u, float)]),
                            self.window)

    def nn_distances(self) -> np.ndarray:
        return nn_distances(self)

    def boundary_distances(self) -> np.ndarray:
        return self.window.boundary_distance(self.points)


def nn_distances(p: PointPattern) -> np.ndarray:
    """Nearest-neighbor distance of every point; requires ``n >= 2``."""
    if p.n < 2:
        raise ValueError("nearest neighbor undefined for fewer than 2 points")
    tree = cKDTree(p.points)
    d, _ = tree.query(p.points, k=2)
    return d[:, 1]


def nn_distance(p: PointPattern, i: int) -> float:
    """Distance from point ``i`` to its nearest neighbor in the pattern."""
    if p.n < 2:
        raise ValueError("nearest neighbor undefined for fewer than 2 points")
    d = np.sqrt(((p.points - p.points[i]) ** 2).sum(axis=1))
    d[i] = np.inf
    return float(d.min())


def close_pair_count(p: PointPattern, u, r: float) -> int:
    """Number of pattern points within ``r`` of ``u`` (closed ball).

    ``u`` itself is not excluded; pass the reduced pattern for leave-one-out
    counts.
    """
    return int(len(BucketGrid(p.points, r).query(np.asarray(u, float))))


@dataclass(frozen=True)
class BorderSplit:
    """Partition of a pattern into border-conditioning and interior points."""

    free_window: Window
    free_idx: np.ndarray = field(repr=False)
    fixed_idx: np.ndarray = field(repr=False)
    R: float = 0.0

    @property
    def n_free(self) -> int:
        return len(self.free_idx)

    @property
    def n_fixed(self) -> int:
        return len(self.fixed_idx)


def split_border(p: PointPattern, R: float) -> BorderSplit:
    """Split ``p`` at interaction range ``R``: free points lie in ``W ⊖ R``."""
    w_free = erode(p.window, R)
    if w_free is None:
        raise ValueError(f"erosion by R={R} leaves an empty window")
    inside = w_free.contains(p.points) if p.n else np.zeros(0, dtype=bool)
    idx = np.arange(p.n)
    return BorderSplit(w_free, idx[inside], idx[~inside], float(R))
