"""First order score-test diagnostics: covariate tests, threshold profiles,
smoothed residual fields and the hot-spot scan statistic."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.stats import norm as _norm

from .fit import FittedModel
from .geometry import PixelGrid, Window, disc_window_area
from .pattern import PointPattern
from .tables import FunctionTable

__all__ = ["CovariateField", "GaussianKernel", "UniformDiscKernel",
           "cox_score_test", "threshold_profile", "smoothed_residual_field",
           "ResidualField"]


class CovariateField:
    """A real covariate over the window: analytic function or raster.

    Rasters are interpolated bilinearly; analytic fields evaluate the
    callable directly.
    """

    def __init__(self, fn: Callable = None, raster: np.ndarray = None,
                 window: Window = None, name: str = "Z"):
        if (fn is None) == (raster is None):
            raise ValueError("give exactly one of fn or raster")
        self.name = name
        self._fn = fn
        if raster is not None:
            if window is None:
                raise ValueError("a raster needs its window")
            self._raster = np.asarray(raster, dtype=float)
            self._window = window
        else:
            self._raster = None

    def __call__(self, x, y) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        if self._fn is not None:
            return np.asarray(self._fn(x, y), dtype=float)
        ras, w = self._raster, self._window
        ny, nx = ras.shape
        gx = (x - w.x_min) / w.side_x * nx - 0.5
        gy = (y - w.y_min) / w.side_y * ny - 0.5
        gx = np.clip(gx, 0, nx - 1)
        gy = np.clip(gy, 0, ny - 1)
        x0 = np.clip(np.floor(gx).astype(int), 0, nx - 2) if nx > 1 else np.zeros_like(gx, int)
        y0 = np.clip(np.floor(gy).astype(int), 0, ny - 2) if ny > 1 else np.zeros_like(gy, int)
        fx = gx - x0
        fy = gy - y0
        if nx == 1:
            fx = np.zeros_like(fx)
        if ny == 1:
            fy = np.zeros_like(fy)
        x1 = np.minimum(x0 + 1, nx - 1)
        y1 = np.minimum(y0 + 1, ny - 1)
        return ((1 - fx) * (1 - fy) * ras[y0, x0] + fx * (1 - fy) * ras[y0, x1]
                + (1 - fx) * fy * ras[y1, x0] + fx * fy * ras[y1, x1])

    def at_points(self, pts) -> np.ndarray:
        pts = np.atleast_2d(pts)
        return self(pts[:, 0], pts[:, 1])

    def on_grid(self, grid: PixelGrid) -> np.ndarray:
        xx, yy = np.meshgrid(grid.xs, grid.ys)
        return self(xx, yy)


@dataclass(frozen=True)
class GaussianKernel:
    """Isotropic Gaussian density on the plane."""

    sigma: float

    def __call__(self, dx, dy):
        s2 = self.sigma ** 2
        return np.exp(-0.5 * (dx * dx + dy * dy) / s2) / (2 * np.pi * s2)

    def peak(self) -> float:
        return 1.0 / (2 * np.pi * self.sigma ** 2)

    def window_mass(self, v, w: Window) -> np.ndarray:
        """``∫_W k(u - v) du`` in closed form."""
        v = np.atleast_2d(v)
        s = self.sigma
        mx = _norm.cdf((w.x_max - v[:, 0]) / s) - _norm.cdf((w.x_min - v[:, 0]) / s)
        my = _norm.cdf((w.y_max - v[:, 1]) / s) - _norm.cdf((w.y_min - v[:, 1]) / s)
        return mx * my

    def window_mass2(self, v, w: Window) -> np.ndarray:
        """``∫_W k(u - v)² du``; the squared kernel is a narrower Gaussian."""
        v = np.atleast_2d(v)
        s = self.sigma / math.sqrt(2.0)
        mx = _norm.cdf((w.x_max - v[:, 0]) / s) - _norm.cdf((w.x_min - v[:, 0]) / s)
        my = _norm.cdf((w.y_max - v[:, 1]) / s) - _norm.cdf((w.y_min - v[:, 1]) / s)
        return mx * my / (4 * np.pi * self.sigma ** 2)


@dataclass(frozen=True)
class UniformDiscKernel:
    """Uniform density on a disc of radius h."""

    h: float

    def __call__(self, dx, dy):
        inside = dx * dx + dy * dy <= self.h ** 2
        return inside / (np.pi * self.h ** 2)

    def peak(self) -> float:
        return 1.0 / (np.pi * self.h ** 2)

    def window_mass(self, v, w: Window) -> np.ndarray:
        v = np.atleast_2d(v)
        return disc_window_area(v, self.h, w) / (np.pi * self.h ** 2)

    def window_mass2(self, v, w: Window) -> np.ndarray:
        return self.window_mass(v, w) / (np.pi * self.h ** 2)


def cox_score_test(p: PointPattern, Z: CovariateField,
                   grid_n: int = 256) -> tuple:
    """Signed-root score test of a covariate effect against a homogeneous
    Poisson null: ``T = (S - κ̂ ∫Z) / sqrt(κ̂ ∫Z²)`` with ``S = Σ Z(x_i)``.

    Returns ``(T, S)``.
    """
    if p.n < 1:
        raise ValueError("the score test needs at least one point")
    grid = PixelGrid(p.window, grid_n)
    zvals = Z.on_grid(grid).ravel()
    if not np.all(np.isfinite(zvals)):
        raise ValueError("covariate must be finite on the window")
    int_z = zvals.sum() * grid.cell_area
    int_z2 = (zvals ** 2).sum() * grid.cell_area
    if int_z2 <= 0 or np.allclose(zvals, zvals[0]):
        raise ValueError("degenerate covariate")
    kappa = p.n / p.window.area
    S = float(Z.at_points(p.points).sum())
    T = (S - kappa * int_z) / math.sqrt(kappa * int_z2)
    return T, S


def threshold_profile(p: PointPattern, fm: Optional[FittedModel],
                      Z: CovariateField, z_grid, grid_n: int = 256,
                      pixel_grid: PixelGrid = None) -> FunctionTable:
    """Score-test profile over threshold levels of a covariate.

    Columns: the level-count ``S(z) = Σ 1{Z(x_i) <= z}``, the null mean
    ``κ̂ A(z)`` with ``A(z)`` the level-set area (by pixel counting), the
    standardized statistic ``T(z)`` (undefined where ``A(z) = 0``) and the
    lurking-variable residual ``S(z) - ∫ 1{Z <= z} λ̂ du`` against the
    fitted model (homogeneous Poisson at rate ``n/|W|`` when ``fm`` is
    None).
    """
    z_grid = np.asarray(z_grid, dtype=float)
    grid = PixelGrid(p.window, grid_n)
    zpix = np.sort(Z.on_grid(grid).ravel())
    z_data = np.sort(Z.at_points(p.points))
    S = np.searchsorted(z_data, z_grid, side="right").astype(float)
    A = np.searchsorted(zpix, z_grid, side="right") * grid.cell_area
    kappa = p.n / p.window.area
    with np.errstate(divide="ignore", invalid="ignore"):
        T = (S - kappa * A) / np.sqrt(kappa * A)
    T[A <= 0] = np.nan
    if fm is None:
        lurk = S - kappa * A
    else:
        q = fm.quadrature
        lam = fm.intensity_at_nodes(pixel_grid)
        znod = Z.at_points(q.nodes)
        order = np.argsort(znod)
        cuml = np.concatenate([[0.0], np.cumsum((q.weights * lam)[order])])
        idx = np.searchsorted(znod[order], z_grid, side="right")
        comp = cuml[idx]
        if fm.mode == "conditional":
            free = fm.split.free_window.contains(p.points)
            zf = np.sort(Z.at_points(p.points[free]))
            S_free = np.searchsorted(zf, z_grid, side="right").astype(float)
            lurk = S_free - comp
        else:
            lurk = S - comp
    t = FunctionTable(z_grid)  # the function argument is the level z
    t["count"] = S
    t["null_mean"] = kappa * A
    t["T"] = T
    t["lurking"] = lurk
    t.meta["argument"] = "z"
    return t


@dataclass
class ResidualField:
    """Kernel-smoothed residual field and its standardized version."""

    grid: PixelGrid
    smoothed_data: np.ndarray
    smoothed_mean: np.ndarray
    field: np.ndarray
    t_field: np.ndarray
    max_t: float


def smoothed_residual_field(p: PointPattern, fm: Optional[FittedModel],
                            kernel, out_grid: PixelGrid,
                            pixel_grid: PixelGrid = None) -> ResidualField:
    """Smoothed residual field ``Σ k(x_i - v) - ∫ k(u - v) λ̂(u) du``.

    With ``fm=None`` the null is homogeneous Poisson at rate ``n/|W|`` and
    the kernel mass integrals are exact; for a fitted model they are
    evaluated on its quadrature.  The standardized field divides by
    ``sqrt(∫ k² λ̂)``; its maximum is the scan statistic for the uniform
    disc kernel.
    """
    w = p.window
    centers = out_grid.centers()
    shape = (out_grid.ny, out_grid.nx)
    S = np.zeros(len(centers))
    for x, y in p.points:
        S += kernel(centers[:, 0] - x, centers[:, 1] - y)
    if fm is None:
        kappa = p.n / w.area
        m1 = kappa * kernel.window_mass(centers, w)
        m2 = kappa * kernel.window_mass2(centers, w)
    else:
        q = fm.quadrature
        lam = fm.intensity_at_nodes(pixel_grid) * q.weights
        m1 = np.zeros(len(centers))
        m2 = np.zeros(len(centers))
        step = max(1, int(4e6 // max(q.n_nodes, 1)))
        for k0 in range(0, len(centers), step):
            k1 = min(k0 + step, len(centers))
            kv = kernel(centers[k0:k1, None, 0] - q.nodes[None, :, 0],
                        centers[k0:k1, None, 1] - q.nodes[None, :, 1])
            m1[k0:k1] = kv @ lam
            m2[k0:k1] = (kv * kv) @ lam
    field = S - m1
    with np.errstate(divide="ignore", invalid="ignore"):
        tf = field / np.sqrt(m2)
    tf[~np.isfinite(tf)] = np.nan
    max_t = float(np.nanmax(tf)) if np.isfinite(tf).any() else np.nan
    return ResidualField(out_grid, S.reshape(shape), m1.reshape(shape),
                         field.reshape(shape), tf.reshape(shape), max_t)
