"""Rectangular observation windows, pixel grids and basic planar geometry.

Everything here operates on axis-aligned rectangles.  Disc/rectangle
intersection areas are exact (circular-segment decomposition); unions of
discs are measured by counting pixel centers.  Balls are closed: a point at
distance exactly ``r`` counts as covered.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "Window",
    "PixelGrid",
    "unit_square",
    "erode",
    "disc_window_area",
    "union_discs_area",
    "coverage_count_field",
    "coverage_profile",
    "neighbors_within",
    "BucketGrid",
]


@dataclass(frozen=True)
class Window:
    """Axis-aligned rectangle with positive area."""

    x_min: float
    x_max: float
    y_min: float
    y_max: float

    def __post_init__(self):
        if not (self.x_min < self.x_max and self.y_min < self.y_max):
            raise ValueError(
                f"window must have positive area, got "
                f"[{self.x_min}, {self.x_max}] x [{self.y_min}, {self.y_max}]"
            )

    @property
    def side_x(self) -> float:
        return self.x_max - self.x_min

    @property
    def side_y(self) -> float:
        return self.y_max - self.y_min

    @property
    def area(self) -> float:
        return self.side_x * self.side_y

    @property
    def shortest_side(self) -> float:
        return min(self.side_x, self.side_y)

    def contains(self, xy) -> np.ndarray:
        """Boolean mask of points inside the window (boundary included)."""
        xy = np.atleast_2d(np.asarray(xy, dtype=float))
        return (
            (xy[:, 0] >= self.x_min)
            & (xy[:, 0] <= self.x_max)
            & (xy[:, 1] >= self.y_min)
            & (xy[:, 1] <= self.y_max)
        )

    def boundary_distance(self, xy) -> np.ndarray:
        """Distance from each point to the window boundary."""
        xy = np.atleast_2d(np.asarray(xy, dtype=float))
        return np.minimum(
            np.minimum(xy[:, 0] - self.x_min, self.x_max - xy[:, 0]),
            np.minimum(xy[:, 1] - self.y_min, self.y_max - xy[:, 1]),
        )

    def erode(self, r: float):
        """Shrink by ``r`` on every side; ``None`` when the result is empty."""
        return erode(self, r)

    def grid(self, nx: int, ny: int | None = None) -> "PixelGrid":
        return PixelGrid(self, nx, nx if ny is None else ny)

    def to_dict(self) -> dict:
        return {
            "x_min": self.x_min,
            "x_max": self.x_max,
            "y_min": self.y_min,
            "y_max": self.y_max,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Window":
        return cls(d["x_min"], d["x_max"], d["y_min"], d["y_max"])


def unit_square() -> Window:
    return Window(0.0, 1.0, 0.0, 1.0)


def erode(w: Window, r: float):
    """Erosion of ``w`` by ``r``.  Returns ``None`` if a side collapses."""
    if r < 0:
        raise ValueError("erosion distance must be nonnegative")
    if r == 0:
        return w
    if 2 * r >= w.side_x or 2 * r >= w.side_y:
        return None
    return Window(w.x_min + r, w.x_max - r, w.y_min + r, w.y_max - r)


class PixelGrid:
    """Regular ``nx x ny`` partition of a window into equal pixels.

    Pixel centers lie strictly inside the window and the pixel areas sum to
    the window area exactly.  Fields are stored as ``(ny, nx)`` arrays with
    row 0 at the bottom (smallest y).
    """

    def __init__(self, window: Window, nx: int, ny: int | None = None):
        ny = nx if ny is None else ny
        if nx < 1 or ny < 1:
            raise ValueError("grid resolution must be positive")
        self.window = window
        self.nx = int(nx)
        self.ny = int(ny)
        self.dx = window.side_x / self.nx
        self.dy = window.side_y / self.ny
        self.xs = window.x_min + (np.arange(self.nx) + 0.5) * self.dx
        self.ys = window.y_min + (np.arange(self.ny) + 0.5) * self.dy

    @property
    def cell_area(self) -> float:
        return self.dx * self.dy

    @property
    def n_pixels(self) -> int:
        return self.nx * self.ny

    def centers(self) -> np.ndarray:
        """All pixel centers as an ``(nx*ny, 2)`` array, row-major by y."""
        xx, yy = np.meshgrid(self.xs, self.ys)
        return np.column_stack([xx.ravel(), yy.ravel()])

    def min_distance_field(self, pts) -> np.ndarray:
        """Per-pixel distance to the nearest of ``pts``; ``inf`` if empty."""
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        out = np.full((self.ny, self.nx), np.inf)
        if pts.size == 0:
            return out
        # chunk over pixel rows to bound memory
        for iy0 in range(0, self.ny, 64):
            iy1 = min(iy0 + 64, self.ny)
            dy2 = (self.ys[iy0:iy1, None] - pts[None, :, 1]) ** 2
            for ix0 in range(0, self.nx, 256):
                ix1 = min(ix0 + 256, self.nx)
                dx2 = (self.xs[ix0:ix1, None] - pts[None, :, 0]) ** 2
                d2 = dy2[:, None, :] + dx2[None, :, :]
                out[iy0:iy1, ix0:ix1] = np.sqrt(d2.min(axis=2))
        return out

    def two_nearest(self, pts):
        """Per-pixel (nearest index, nearest distance, second distance)."""
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        n = len(pts)
        d1 = np.full((self.ny, self.nx), np.inf)
        d2 = np.full((self.ny, self.nx), np.inf)
        idx = np.full((self.ny, self.nx), -1, dtype=np.intp)
        dx2 = (self.xs[:, None] - pts[None, :, 0]) ** 2
        for iy0 in range(0, self.ny, 64):
            iy1 = min(iy0 + 64, self.ny)
            dy2 = (self.ys[iy0:iy1, None] - pts[None, :, 1]) ** 2
            d = np.sqrt(dy2[:, None, :] + dx2[None, :, :])
            if n == 1:
                d1[iy0:iy1] = d[:, :, 0]
                idx[iy0:iy1] = 0
            else:
                part = np.argpartition(d, 1, axis=2)
                i0 = part[:, :, 0]
                take = np.take_along_axis(d, part[:, :, :2], axis=2)
                d1[iy0:iy1] = take[:, :, 0]
                d2[iy0:iy1] = take[:, :, 1]
                idx[iy0:iy1] = i0
        return idx, d1, d2


def _segment_area(d, r):
    """Area of the circular segment of B(0, r) beyond a chord at distance d."""
    d = np.minimum(d, r)
    return r * r * np.arccos(np.clip(d / r, -1.0, 1.0)) - d * np.sqrt(
        np.maximum(r * r - d * d, 0.0)
    )


def _corner_area(dx, dy, r):
    """Area of B(0, r) intersected with the quadrant {x >= dx, y >= dy}."""

    def F(x, r):
        return 0.5 * (x * np.sqrt(np.maximum(r * r - x * x, 0.0))
                      + r * r * np.arcsin(np.clip(x / r, -1.0, 1.0)))

    inside = dx * dx + dy * dy < r * r
    x_hi = np.sqrt(np.maximum(r * r - dy * dy, 0.0))
    area = F(x_hi, r) - F(np.minimum(dx, x_hi), r) - dy * np.maximum(x_hi - dx, 0.0)
    return np.where(inside, area, 0.0)


def disc_window_area(c, r, w: Window) -> np.ndarray | float:
    """Exact area of ``B(c, r)`` intersected with ``w``.

    ``c`` may be a single point or an ``(n, 2)`` array; ``r`` broadcasts
    against the points.  Centers must lie inside the window.
    """
    c = np.atleast_2d(np.asarray(c, dtype=float))
    scalar = c.shape[0] == 1 and np.ndim(r) == 0
    r = np.broadcast_to(np.asarray(r, dtype=float), (c.shape[0],)).astype(float)
    if np.any(r <= 0):
        raise ValueError("disc radius must be positive")
    dl = c[:, 0] - w.x_min
    dr = w.x_max - c[:, 0]
    db = c[:, 1] - w.y_min
    dt = w.y_max - c[:, 1]
    if np.any((dl < 0) | (dr < 0) | (db < 0) | (dt < 0)):
        raise ValueError("disc centers must lie inside the window")
    area = np.pi * r * r
    for d in (dl, dr, db, dt):
        area -= _segment_area(d, r)
    for dx, dy in ((dl, db), (dl, dt), (dr, db), (dr, dt)):
        area += _corner_area(dx, dy, r)
    return float(area[0]) if scalar else area


def _stamp_counts(pts, r, grid: PixelGrid) -> np.ndarray:
    """Integer field counting, per pixel center, the points within ``r``."""
    field = np.zeros((grid.ny, grid.nx), dtype=np.int32)
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    if pts.size == 0:
        return field
    r2 = r * r
    for x, y in pts:
        ix0 = max(0, int(np.floor((x - r - grid.window.x_min) / grid.dx - 0.5)))
        ix1 = min(grid.nx, int(np.ceil((x + r - grid.window.x_min) / grid.dx + 0.5)))
        iy0 = max(0, int(np.floor((y - r - grid.window.y_min) / grid.dy - 0.5)))
        iy1 = min(grid.ny, int(np.ceil((y + r - grid.window.y_min) / grid.dy + 0.5)))
        if ix0 >= ix1 or iy0 >= iy1:
            continue
        dx2 = (grid.xs[ix0:ix1] - x) ** 2
        dy2 = (grid.ys[iy0:iy1] - y) ** 2
        field[iy0:iy1, ix0:ix1] += (dy2[:, None] + dx2[None, :] <= r2)
    return field


def coverage_count_field(pts, r: float, grid: PixelGrid) -> np.ndarray:
    """Per-pixel count of pattern points within distance ``r``."""
    if r <= 0:
        raise ValueError("radius must be positive")
    return _stamp_counts(pts, r, grid)


def coverage_profile(pts, r_grid, grid: PixelGrid) -> np.ndarray:
    """Coverage counts for every radius of ``r_grid`` at once.

    Returns an ``(n_pixels, n_r)`` int16 array: entry ``[p, k]`` is the
    number of points within ``r_grid[k]`` of pixel center ``p`` (pixels in
    row-major, bottom-up order).  Memory is ``n_pixels * n_r * 2`` bytes, so
    keep grids moderate.
    """
    r_grid = np.asarray(r_grid, dtype=float)
    n_r = len(r_grid)
    r_max = float(r_grid[-1])
    npix = grid.n_pixels
    counts = np.zeros((npix, n_r), dtype=np.int16)
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    if pts.size == 0:
        return counts
    # difference array over r bins: +1 at the first grid radius >= distance
    diff = np.zeros((npix, n_r + 1), dtype=np.int16)
    for x, y in pts:
        ix0 = max(0, int(np.floor((x - r_max - grid.window.x_min) / grid.dx - 0.5)))
        ix1 = min(grid.nx, int(np.ceil((x + r_max - grid.window.x_min) / grid.dx + 0.5)))
        iy0 = max(0, int(np.floor((y - r_max - grid.window.y_min) / grid.dy - 0.5)))
        iy1 = min(grid.ny, int(np.ceil((y + r_max - grid.window.y_min) / grid.dy + 0.5)))
        if ix0 >= ix1 or iy0 >= iy1:
            continue
        dx2 = (grid.xs[ix0:ix1] - x) ** 2
        dy2 = (grid.ys[iy0:iy1] - y) ** 2
        d = np.sqrt(dy2[:, None] + dx2[None, :])
        sel = d <= r_max
        if not np.any(sel):
            continue
        iy, ix = np.nonzero(sel)
        flat = (iy + iy0) * grid.nx + (ix + ix0)
        bins = np.searchsorted(r_grid, d[sel], side="left")
        np.add.at(diff, (flat, bins), 1)
    np.cumsum(diff[:, :n_r], axis=1, out=counts)
    return counts


class BucketGrid:
    """Uniform bucket grid for fixed-radius neighbor queries.

    Cell side is approximately the query radius; for small point counts a
    plain linear scan is used instead.
    """

    _LINEAR_SCAN_MAX = 32

    def __init__(self, pts, r: float, window: Window | None = None):
        self.pts = np.atleast_2d(np.asarray(pts, dtype=float))
        self.r = float(r)
        n = len(self.pts)
        self._linear = n <= self._LINEAR_SCAN_MAX or self.r <= 0
        if self._linear:
            return
        if window is None:
            x0, y0 = self.pts.min(axis=0)
            x1, y1 = self.pts.max(axis=0)
        else:
            x0, y0 = window.x_min, window.y_min
            x1, y1 = window.x_max, window.y_max
        self._x0, self._y0 = x0, y0
        self._nx = max(1, int(math.ceil((x1 - x0) / self.r)))
        self._ny = max(1, int(math.ceil((y1 - y0) / self.r)))
        cx = np.clip(((self.pts[:, 0] - x0) / self.r).astype(np.intp), 0, self._nx - 1)
        cy = np.clip(((self.pts[:, 1] - y0) / self.r).astype(np.intp), 0, self._ny - 1)
        keys = cy * self._nx + cx
        order = np.argsort(keys, kind="stable")
        self._order = order
        self._keys = keys[order]
        self._starts = np.searchsorted(self._keys, np.arange(self._nx * self._ny))
        self._ends = np.searchsorted(self._keys, np.arange(self._nx * self._ny), side="right")

    def query(self, u) -> np.ndarray:
        """Indices of points with ``|u - x_i| <= r`` (ties included)."""
        u = np.asarray(u, dtype=float)
        if len(self.pts) == 0:
            return np.empty(0, dtype=np.intp)
        if self._linear:
            d2 = ((self.pts - u) ** 2).sum(axis=1)
            return np.nonzero(d2 <= self.r * self.r)[0]
        cx = int((u[0] - self._x0) / self.r)
        cy = int((u[1] - self._y0) / self.r)
        cand = []
        for jy in range(max(0, cy - 1), min(self._ny, cy + 2)):
            for jx in range(max(0, cx - 1), min(self._nx, cx + 2)):
                k = jy * self._nx + jx
                s, e = self._starts[k], self._ends[k]
                if e > s:
                    cand.append(self._order[s:e])
        if not cand:
            return np.empty(0, dtype=np.intp)
        cand = np.concatenate(cand)
        d2 = ((self.pts[cand] - u) ** 2).sum(axis=1)
        out = cand[d2 <= self.r * self.r]
        out.sort()
        return out


def neighbors_within(pts, u, r: float) -> np.ndarray:
    """Indices ``i`` with ``|u - pts[i]| <= r``; boundary ties included."""
    return BucketGrid(pts, r).query(u)


def union_discs_area(pts, r: float, w: Window, grid: PixelGrid) -> float:
    """Pixel-counting approximation of ``|W ∩ ∪_i B(x_i, r)|``."""
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    if pts.size == 0:
        return 0.0
    if grid.window != w:
        raise ValueError("pixel grid must discretize the same window")
    counts = _stamp_counts(pts, r, grid)
    return float((counts > 0).sum()) * grid.cell_area
