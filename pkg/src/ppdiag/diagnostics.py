"""Compensators, residuals and pseudo-residual diagnostics.

For a summary statistic ``S(x, r)`` with local contributions
``S = Σ_i s(x_i, x_{-i}, r)`` the (estimated) compensator is
``C S(r) = ∫ s(u, x, r) λ̂(u, x) du`` and the residual is ``S - C S``.
The increment-based analogues use ``Δ_u S``: the pseudo-sum
``Σ_i Δ_{x_i} S``, the pseudo-compensator ``∫ Δ_u S λ̂ du`` and their
difference, the pseudo-residual.  Variance surrogates are the leading
(Poincare) terms ``∫ s² λ̂`` and ``∫ (Δ_u S)² λ̂``; the remaining terms are
only available through Monte Carlo (:func:`mc_innovation_variance`).

Integrals are approximated by finite sums over the fitting quadrature by
default, or over a dedicated uniform rule.  In conditional (border) mode
sums run over the free points, integrals over the eroded window, and
conditional intensities see the full pattern.

Statistics whose value at a data point is defined by leave-one-out
(``s(x_i, x_{-i})``) follow closed-ball conventions throughout.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from ._accum import step_counts, tail_counts
from .fit import FittedModel
from .geometry import PixelGrid, Window, disc_window_area
from .models import GibbsModel
from .pattern import PointPattern, split_border
from .summaries import (eroded_area, f_hat, g_hat, k_hat, translation_weight,
                        _isect_area)
from .tables import check_r_grid

__all__ = [
    "VS", "VT", "VG", "VGSat", "VA", "KhatLocal", "GhatLocal", "FhatIncrement",
    "IntegrationRule", "uniform_rule",
    "compensator", "residual", "innovation",
    "pseudo_sum", "pseudo_compensator", "pseudo_residual",
    "poincare_variance", "standardized", "smooth",
    "mc_innovation_variance", "stat_by_name",
]


# --------------------------------------------------------------------------
# integration rules and evaluation contexts
# --------------------------------------------------------------------------


@dataclass
class IntegrationRule:
    """Nodes and weights approximating integrals over a window.

    ``is_data[k]`` marks nodes that coincide with pattern points, where the
    integrand and the conditional intensity follow the leave-one-out
    convention.  ``data_index`` maps those nodes to point indices.
    """

    nodes: np.ndarray
    weights: np.ndarray
    is_data: np.ndarray
    data_index: np.ndarray
    window: Window


def uniform_rule(window: Window, m: int = 64) -> IntegrationRule:
    g = PixelGrid(window, m)
    nodes = g.centers()
    return IntegrationRule(nodes, np.full(len(nodes), g.cell_area),
                           np.zeros(len(nodes), dtype=bool),
                           np.empty(0, dtype=np.intp), window)


def _rule_from_quadrature(q, data_idx) -> IntegrationRule:
    di = np.asarray(data_idx if data_idx is not None else
                    np.arange(int(q.is_data.sum())), dtype=np.intp)
    return IntegrationRule(q.nodes, q.weights, q.is_data, di, q.window)


class _Ctx:
    """Resolved inputs shared by the diagnostic operations."""

    def __init__(self, model, pattern, mode, split, rule, pixel_grid, domain):
        self.model = model
        self.pattern = pattern
        self.mode = mode
        self.split = split
        self.rule = rule
        self.pixel_grid = pixel_grid
        self.domain = domain
        self._lam = None

    @property
    def free_idx(self):
        if self.split is None:
            return np.arange(self.pattern.n)
        return self.split.free_idx

    @property
    def stat_window(self) -> Window:
        return self.rule.window

    def lam(self) -> np.ndarray:
        """Fitted/true conditional intensity at the rule nodes."""
        if self._lam is None:
            r = self.rule
            out = np.empty(len(r.nodes))
            free = ~r.is_data
            out[free] = self.model.cond_intensity(r.nodes[free], self.pattern,
                                                  self.pixel_grid)
            if r.is_data.any():
                lam_d = self.model.cond_intensity_at_data(self.pattern,
                                                          self.pixel_grid)
                out[r.is_data] = lam_d[r.data_index]
            self._lam = out
        return self._lam

    def pixels(self, default_n=128) -> PixelGrid:
        if self.pixel_grid is None:
            self.pixel_grid = PixelGrid(self.pattern.window, default_n)
        return self.pixel_grid


def _resolve(fitted_or_model, pattern=None, mode="unconditional",
             nodes=None, pixel_grid=None, rule_m=64, domain=None) -> _Ctx:
    if isinstance(fitted_or_model, FittedModel):
        fm = fitted_or_model
        pattern = fm.pattern if pattern is None else pattern
        split = fm.split
        mode = fm.mode
        if nodes is None:
            data_idx = fm.split.free_idx if fm.mode == "conditional" else None
            rule = _rule_from_quadrature(fm.quadrature, data_idx)
        else:
            rule = nodes
        model = fm.model
    else:
        model = fitted_or_model
        if pattern is None:
            raise ValueError("a pattern is required with a bare model")
        split = None
        if mode == "conditional":
            split = split_border(pattern, model.interaction_range)
        if nodes is None:
            w = split.free_window if split is not None else pattern.window
            rule = uniform_rule(w, rule_m)
        else:
            rule = nodes
    if domain is None:
        domain = "reweighting" if mode == "conditional" else "full"
    return _Ctx(model, pattern, mode, split, rule, pixel_grid, domain)


# --------------------------------------------------------------------------
# dense helpers on the r grid
# --------------------------------------------------------------------------


def _count_matrix(us, pts, r_grid, weights=None, exclude_self=False):
    """Row ``k``: (weighted) number of ``pts`` within ``r`` of ``us[k]``.

    ``weights`` may be per-pair, supplied as a callable
    ``(row_idx, col_idx, d) -> w``.
    """
    from scipy.spatial.distance import cdist
    us = np.atleast_2d(us)
    m, n = len(us), len(pts)
    n_r = len(r_grid)
    if n == 0 or m == 0:
        return np.zeros((m, n_r))
    r_max = float(r_grid[-1])
    diff = np.zeros((m, n_r + 1))
    step = max(1, int(8e6 // max(n, 1)))
    for k0 in range(0, m, step):
        k1 = min(k0 + step, m)
        d2 = cdist(us[k0:k1], pts, "sqeuclidean")
        if exclude_self:
            rows = np.arange(k0, k1)
            d2[rows - k0, rows] = np.inf
        mask = d2 <= r_max * r_max
        i, j = np.nonzero(mask)
        d = np.sqrt(d2[i, j])
        start = np.searchsorted(r_grid, d, side="left")
        w = 1.0 if weights is None else weights(i + k0, j, d)
        np.add.at(diff, (i + k0, start), w)
    return np.cumsum(diff[:, :n_r], axis=1)


def _interval_matrix(rows, start, end, n_rows, n_r, weights=None):
    """Accumulate per-row step profiles active on index range [start, end)."""
    diff = np.zeros((n_rows, n_r + 1))
    keep = start < end
    rows, start, end = rows[keep], start[keep], end[keep]
    w = 1.0 if weights is None else np.asarray(weights, dtype=float)[keep]
    np.add.at(diff, (rows, start), w)
    np.add.at(diff, (rows, end), -w)
    return np.cumsum(diff[:, :n_r], axis=1)


def _interval_profile(start, end, n_r, weights=None):
    """Scalar version of :func:`_interval_matrix` (sums over all rows)."""
    diff = np.zeros(n_r + 1)
    keep = start < end
    start, end = start[keep], end[keep]
    if weights is None:
        np.add.at(diff, start, 1.0)
        np.add.at(diff, end, -1.0)
    else:
        w = np.asarray(weights, dtype=float)[keep]
        np.add.at(diff, start, w)
        np.add.at(diff, end, -w)
    return np.cumsum(diff[:n_r])


def _close_pairs(us, pts, r_max, exclude_self=False):
    from scipy.spatial.distance import cdist
    us = np.atleast_2d(us)
    m, n = len(us), len(pts)
    if m == 0 or n == 0:
        return np.empty(0, int), np.empty(0, int), np.empty(0)
    if not np.isfinite(r_max):
        r_max = 1e300
    if m * n > 2e7:
        # kd-tree pass for big cross products (node grids vs pixel grids)
        from scipy.spatial import cKDTree
        tree = cKDTree(pts)
        lists = tree.query_ball_point(us, r_max, workers=-1)
        counts = np.fromiter((len(l) for l in lists), dtype=np.intp, count=m)
        i = np.repeat(np.arange(m), counts)
        j = np.fromiter((k for l in lists for k in l), dtype=np.intp,
                        count=int(counts.sum()))
        d = np.sqrt(((us[i] - pts[j]) ** 2).sum(axis=1))
        if exclude_self:
            keep = i != j
            i, j, d = i[keep], j[keep], d[keep]
        return i, j, d
    ii, jj, dd = [], [], []
    step = max(1, int(8e6 // max(n, 1)))
    for k0 in range(0, m, step):
        k1 = min(k0 + step, m)
        d2 = cdist(us[k0:k1], pts, "sqeuclidean")
        if exclude_self:
            rows = np.arange(k0, k1)
            d2[rows - k0, rows] = np.inf
        mask = d2 <= r_max * r_max
        i, j = np.nonzero(mask)
        ii.append(i + k0)
        jj.append(j)
        dd.append(np.sqrt(d2[i, j]))
    return np.concatenate(ii), np.concatenate(jj), np.concatenate(dd)


def _grid_matched(us, pix: PixelGrid) -> bool:
    return (us.shape == (pix.n_pixels, 2)
            and np.array_equal(us, pix.centers()))


def _disc_kernel(pix: PixelGrid, r: float) -> np.ndarray:
    kx = int(np.floor(r / pix.dx + 1e-9))
    ky = int(np.floor(r / pix.dy + 1e-9))
    ox = (np.arange(-kx, kx + 1) * pix.dx) ** 2
    oy = (np.arange(-ky, ky + 1) * pix.dy) ** 2
    return ((oy[:, None] + ox[None, :]) <= r * r + 1e-12).astype(float)


def _disc_conv_sums(wl_field, pix, r_grid, masks):
    """``out[k] = Σ_p masks[k][p] Σ_q wl[q] 1{|q - p| <= r_k}`` by FFT.

    Both index sets live on the pixel grid; ``masks`` yields the boolean
    pixel mask for each radius.
    """
    from scipy.signal import fftconvolve
    out = np.zeros(len(r_grid))
    for k, r in enumerate(r_grid):
        mask = masks(k)
        if not mask.any():
            continue
        conv = fftconvolve(wl_field, _disc_kernel(pix, r), mode="same")
        out[k] = conv[mask].sum()
    return out


def _nn_info(pattern: PointPattern):
    """Nearest neighbor index and first/second neighbor distances."""
    from scipy.spatial import cKDTree
    n = pattern.n
    if n < 2:
        return (np.full(n, -1, dtype=np.intp), np.full(n, np.inf),
                np.full(n, np.inf))
    k = min(3, n)
    d, idx = cKDTree(pattern.points).query(pattern.points, k=k)
    d1 = d[:, 1]
    nn1 = idx[:, 1].astype(np.intp)
    d2 = d[:, 2] if n >= 3 else np.full(n, np.inf)
    return nn1, d1, d2


# --------------------------------------------------------------------------
# local statistics
# --------------------------------------------------------------------------


class LocalStat:
    """Interface shared by the diagnostics' summary statistics."""

    name = "stat"
    decomposable = True
    subset_order: Optional[int] = None
    needs_pixels = False

    def totals(self, ctx, r_grid):
        raise NotImplementedError

    def local_at_data(self, ctx, r_grid):
        """``s(x_i, x_{-i}, r)`` for the points of the pattern."""
        raise NotImplementedError

    def local_at(self, ctx, us, r_grid):
        """``s(u, x, r)`` for locations ``u`` outside the pattern."""
        raise NotImplementedError

    def incr_at_data(self, ctx, r_grid):
        """``Δ_{x_i} S(x, r)``."""
        raise NotImplementedError

    def incr_at(self, ctx, us, r_grid):
        """``Δ_u S(x, r)`` for locations outside the pattern."""
        raise NotImplementedError

    def incr_weighted_sum(self, ctx, us, w, lam, r_grid):
        """``Σ_k w[k] lam[k] Δ_{us[k]} S(x, r)``; pixel statistics override."""
        return (self.incr_at(ctx, us, r_grid) * (w * lam)[:, None]).sum(axis=0)

    def incr_data_sum(self, ctx, r_grid):
        """``Σ_i Δ_{x_i} S`` over the free points (the pseudo-sum)."""
        return self.incr_at_data(ctx, r_grid)[ctx.free_idx].sum(axis=0)

    def __repr__(self):
        return self.name


class VS(LocalStat):
    """Number of r-close pairs; local contribution ``t(u, x, r) / 2``."""

    name = "vs"
    subset_order = 2

    def totals(self, ctx, r_grid):
        return self.local_at_data(ctx, r_grid)[ctx.free_idx].sum(axis=0)

    def local_at_data(self, ctx, r_grid):
        pts = ctx.pattern.points
        return 0.5 * _count_matrix(pts, pts, r_grid, exclude_self=True)

    def local_at(self, ctx, us, r_grid):
        return 0.5 * _count_matrix(us, ctx.pattern.points, r_grid)

    def incr_at_data(self, ctx, r_grid):
        return 2.0 * self.local_at_data(ctx, r_grid)

    def incr_at(self, ctx, us, r_grid):
        return 2.0 * self.local_at(ctx, us, r_grid)


class VT(LocalStat):
    """Number of r-close triples (all three sides within r)."""

    name = "vt"
    subset_order = 3

    def totals(self, ctx, r_grid):
        return self.local_at_data(ctx, r_grid)[ctx.free_idx].sum(axis=0)

    def _pair_profiles(self, us, pts, r_grid, exclude_self=False):
        """Row k: number of point pairs forming an r-triangle with us[k]."""
        n_r = len(r_grid)
        m = len(us)
        r_max = float(r_grid[-1])
        i, j, d = _close_pairs(us, pts, r_max, exclude_self=exclude_self)
        diff = np.zeros((m, n_r + 1))
        order = np.argsort(i, kind="stable")
        i, j, d = i[order], j[order], d[order]
        bounds = np.searchsorted(i, np.arange(m + 1))
        for k in range(m):
            s, e = bounds[k], bounds[k + 1]
            if e - s < 2:
                continue
            nbr = j[s:e]
            dn = d[s:e]
            pp = pts[nbr]
            dd = np.sqrt(((pp[:, None, :] - pp[None, :, :]) ** 2).sum(axis=2))
            side = np.maximum(np.maximum(dn[:, None], dn[None, :]), dd)
            iu = np.triu_indices(len(nbr), k=1)
            tri = side[iu]
            tri = tri[tri <= r_max]
            if len(tri):
                idx = np.searchsorted(r_grid, tri, side="left")
                np.add.at(diff[k], idx, 1.0)
        return np.cumsum(diff[:, :n_r], axis=1)

    def local_at_data(self, ctx, r_grid):
        pts = ctx.pattern.points
        return self._pair_profiles(pts, pts, r_grid, exclude_self=True) / 3.0

    def local_at(self, ctx, us, r_grid):
        return self._pair_profiles(np.atleast_2d(us), ctx.pattern.points,
                                   r_grid) / 3.0

    def incr_at_data(self, ctx, r_grid):
        return 3.0 * self.local_at_data(ctx, r_grid)

    def incr_at(self, ctx, us, r_grid):
        return 3.0 * self.local_at(ctx, us, r_grid)


class VG(LocalStat):
    """Number of points with a neighbor within r; local ``1{d(u, x) <= r}``."""

    name = "vg"

    def totals(self, ctx, r_grid):
        return self.local_at_data(ctx, r_grid)[ctx.free_idx].sum(axis=0)

    def local_at_data(self, ctx, r_grid):
        _, d1, _ = _nn_info(ctx.pattern)
        return (d1[:, None] <= r_grid[None, :]).astype(float)

    def local_at(self, ctx, us, r_grid):
        d = _min_dist(us, ctx.pattern.points)
        return (d[:, None] <= r_grid[None, :]).astype(float)

    def incr_at(self, ctx, us, r_grid):
        us = np.atleast_2d(us)
        n_r = len(r_grid)
        base = self.local_at(ctx, us, r_grid)
        pts = ctx.pattern.points
        _, d1, _ = _nn_info(ctx.pattern)
        i, j, d = _close_pairs(us, pts, float(r_grid[-1]))
        # recaptured points: x_j within r of u but with no r-close neighbor yet
        start = np.searchsorted(r_grid, d, side="left")
        end = np.searchsorted(r_grid, d1[j], side="left")
        return base + _interval_matrix(i, start, end, len(us), n_r)

    def incr_at_data(self, ctx, r_grid):
        p = ctx.pattern
        n_r = len(r_grid)
        base = self.local_at_data(ctx, r_grid)
        nn1, d1, d2 = _nn_info(p)
        i, j, d = _close_pairs(p.points, p.points, float(r_grid[-1]),
                               exclude_self=True)
        dstar = np.where(nn1[j] == i, d2[j], d1[j])
        start = np.searchsorted(r_grid, d, side="left")
        end = np.searchsorted(r_grid, dstar, side="left")
        return base + _interval_matrix(i, start, end, p.n, n_r)


class VGSat(LocalStat):
    """Geyer saturation statistic ``Σ_i min(sat, t(x_i, x_{-i}, r))``."""

    name = "vgs"

    def __init__(self, sat: float):
        if sat <= 0:
            raise ValueError("saturation must be positive")
        self.sat = float(sat)

    def totals(self, ctx, r_grid):
        return self.local_at_data(ctx, r_grid)[ctx.free_idx].sum(axis=0)

    def local_at_data(self, ctx, r_grid):
        pts = ctx.pattern.points
        t = _count_matrix(pts, pts, r_grid, exclude_self=True)
        return np.minimum(self.sat, t)

    def local_at(self, ctx, us, r_grid):
        t = _count_matrix(us, ctx.pattern.points, r_grid)
        return np.minimum(self.sat, t)

    def _sat_gain(self, ctx, us, r_grid, plus_one):
        """Σ over r-neighbors x_j of the saturation headroom of x_j."""
        p = ctx.pattern
        t_data = _count_matrix(p.points, p.points, r_grid, exclude_self=True)
        shift = 1.0 if plus_one else 0.0
        head = np.clip(self.sat - t_data + shift, 0.0, 1.0)
        exclude = us is None
        pts_q = p.points if exclude else np.atleast_2d(us)
        i, j, d = _close_pairs(pts_q, p.points, float(r_grid[-1]),
                               exclude_self=exclude)
        out = np.zeros((len(pts_q), len(r_grid)))
        if len(i) == 0:
            return out
        active = r_grid[None, :] >= d[:, None]
        contrib = head[j] * active
        np.add.at(out, i, contrib)
        return out

    def incr_at(self, ctx, us, r_grid):
        return self.local_at(ctx, us, r_grid) + self._sat_gain(ctx, us, r_grid,
                                                               plus_one=False)

    def incr_at_data(self, ctx, r_grid):
        return self.local_at_data(ctx, r_grid) + self._sat_gain(
            ctx, None, r_grid, plus_one=True)


def _min_dist(us, pts):
    from scipy.spatial.distance import cdist
    us = np.atleast_2d(us)
    if len(pts) == 0:
        return np.full(len(us), np.inf)
    out = np.empty(len(us))
    step = max(1, int(8e6 // max(len(pts), 1)))
    for k0 in range(0, len(us), step):
        k1 = min(k0 + step, len(us))
        d2 = cdist(us[k0:k1], pts, "sqeuclidean")
        out[k0:k1] = np.sqrt(d2.min(axis=1))
    return out


class KhatLocal(LocalStat):
    """Empirical K function as a sum of local contributions.

    The edge correction must be symmetric (``raw``, ``translation`` or
    ``border``); Ripley's isotropic weight is rejected here.
    """

    name = "khat"

    def __init__(self, correction: str = "translation"):
        if correction == "isotropic":
            raise ValueError("isotropic correction is asymmetric and has no "
                             "compensator; use translation")
        if correction not in ("raw", "translation", "border"):
            raise ValueError(f"unsupported K correction {correction!r}")
        self.correction = correction

    def totals(self, ctx, r_grid):
        return k_hat(ctx.pattern, r_grid, self.correction, domain=ctx.domain,
                     R=0.0 if ctx.split is None else ctx.split.R)

    # -- helpers ------------------------------------------------------------

    def _weighted_counts(self, ctx, us, r_grid, exclude_self):
        """t^w(u, x, r): edge-weighted counts of r-close pattern points."""
        p = ctx.pattern
        w = p.window
        if ctx.mode == "conditional" and ctx.domain == "restriction":
            sub = p.subset(ctx.free_idx)
            pts = sub.points
            win = ctx.split.free_window
            w_outer = None
        elif ctx.mode == "conditional":
            pts = p.points
            win = w
            w_outer = ctx.split.free_window
        else:
            pts = p.points
            win = w
            w_outer = None
        if self.correction == "raw":
            weights = None
        elif self.correction == "translation":
            def weights(i, j, d, us=us, pts=pts, win=win, w_outer=w_outer):
                return translation_weight(win, np.atleast_2d(us)[i] - pts[j],
                                          w_outer)
        else:
            weights = None  # border handled separately
        return _count_matrix(np.atleast_2d(us), pts, r_grid, weights=weights,
                             exclude_self=exclude_self)

    def _norms(self, ctx):
        """(n used in rho2, area divisor) for the active domain."""
        p = ctx.pattern
        if ctx.mode == "conditional" and ctx.domain == "restriction":
            return len(ctx.free_idx), ctx.split.free_window.area, p.window.area
        if ctx.mode == "conditional":
            return p.n, ctx.split.free_window.area, p.window.area
        return p.n, p.window.area, p.window.area

    # -- interface ----------------------------------------------------------

    def local_at(self, ctx, us, r_grid):
        if self.correction == "border":
            return self._border_local(ctx, us, r_grid, at_data=False)
        n, div_area, w_area = self._norms(ctx)
        tw = self._weighted_counts(ctx, us, r_grid, exclude_self=False)
        rho2 = (n + 1) * n / w_area ** 2
        return tw / (rho2 * div_area)

    def local_at_data(self, ctx, r_grid):
        if self.correction == "border":
            return self._border_local(ctx, None, r_grid, at_data=True)
        n, div_area, w_area = self._norms(ctx)
        if ctx.mode == "conditional" and ctx.domain == "restriction":
            us = ctx.pattern.points[ctx.free_idx]
        else:
            us = ctx.pattern.points
        tw = self._weighted_counts(ctx, us, r_grid, exclude_self=True)
        rho2 = n * (n - 1) / w_area ** 2
        out = tw / (rho2 * div_area)
        if ctx.mode == "conditional" and ctx.domain == "restriction":
            full = np.zeros((ctx.pattern.n, len(r_grid)))
            full[ctx.free_idx] = out
            return full
        return out

    def _border_local(self, ctx, us, r_grid, at_data):
        p = ctx.pattern
        n_r = len(r_grid)
        if ctx.mode == "conditional" and ctx.domain == "restriction":
            ref = p.subset(ctx.free_idx)
            win = ctx.split.free_window
            outer_pts = ref.points
        elif ctx.mode == "conditional":
            ref = p
            win = p.window
            outer_pts = p.points[ctx.free_idx]
        else:
            ref = p
            win = p.window
            outer_pts = p.points
        # eroded-domain point counts refer to the outer (summed-over) points
        tilecount = tail_counts(r_grid, win.boundary_distance(outer_pts))
        if at_data:
            us_eval = outer_pts
            n_plus = ref.n
        else:
            us_eval = np.atleast_2d(us)
            n_plus = ref.n + 1
            tilecount = tilecount + 1
        i, j, d = _close_pairs(us_eval, ref.points, float(r_grid[-1]),
                               exclude_self=at_data and ctx.domain != "reweighting")
        if at_data and ctx.domain == "reweighting":
            keep = d > 0
            i, j, d = i[keep], j[keep], d[keep]
        start = np.searchsorted(r_grid, d, side="left")
        bd = win.boundary_distance(us_eval)
        end = np.searchsorted(r_grid, bd[i], side="right")
        counts = _interval_matrix(i, start, end, len(us_eval), n_r)
        denom = n_plus * np.maximum(tilecount, 1).astype(float)
        out = win.area * counts / denom[None, :]
        out[:, tilecount == 0] = np.nan
        if at_data and ctx.mode == "conditional":
            full = np.zeros((p.n, n_r))
            full[ctx.free_idx] = out
            return full
        return out

    def incr_at_data(self, ctx, r_grid):
        """Exact increments with the standard count-based normalization."""
        p = ctx.pattern
        n = p.n
        if n < 3:
            raise ValueError("K increments need at least 3 points")
        khat = self.totals(ctx, r_grid)
        tw = self._weighted_counts(ctx, p.points, r_grid, exclude_self=True)
        w_area = p.window.area
        rho2_minus = (n - 1) * (n - 2) / w_area ** 2
        term = 2.0 * tw / (rho2_minus * w_area)
        scale = (rho2_minus - n * (n - 1) / w_area ** 2) / rho2_minus
        return scale * khat[None, :] + term


class GhatLocal(LocalStat):
    """Empirical G function as a sum of local contributions.

    ``hanisch`` uses Horvitz-Thompson weights with the conventional
    intensity estimate n/|W| (the variant with a tractable compensator);
    ``border`` is the classical border-corrected estimate.
    """

    name = "ghat"

    def __init__(self, correction: str = "hanisch"):
        if correction == "hanisch-d4":
            raise ValueError("the self-normalized Hanisch estimate has no "
                             "tractable compensator; use 'hanisch'")
        if correction not in ("hanisch", "border"):
            raise ValueError(f"unsupported G correction {correction!r}")
        self.correction = correction

    def totals(self, ctx, r_grid):
        return g_hat(ctx.pattern, r_grid, self.correction, domain=ctx.domain,
                     R=0.0 if ctx.split is None else ctx.split.R)

    def _domains(self, ctx):
        """(reference pattern, window, reweighting window, outer points)."""
        p = ctx.pattern
        if ctx.mode == "conditional" and ctx.domain == "restriction":
            sub = p.subset(ctx.free_idx)
            return sub, ctx.split.free_window, None, sub.points
        if ctx.mode == "conditional":
            return p, p.window, ctx.split.free_window, p.points[ctx.free_idx]
        return p, p.window, None, p.points

    def _ht_weight(self, win, w_free, bdist, d):
        """1{u in W ⊖ d} / |domain ∩ W ⊖ d| with the active domain."""
        ok = bdist >= d
        if w_free is None:
            area = eroded_area(win, d)
        else:
            area = _isect_area(w_free, win, d)
        with np.errstate(divide="ignore"):
            return np.where(ok & (area > 0), 1.0 / area, 0.0)

    def local_at(self, ctx, us, r_grid):
        ref, win, w_free, outer = self._domains(ctx)
        us = np.atleast_2d(us)
        d = _min_dist(us, ref.points)
        n_r = len(r_grid)
        if self.correction == "border":
            bdata = tail_counts(r_grid, win.boundary_distance(outer))
            start = np.searchsorted(r_grid, d, side="left")
            end = np.searchsorted(r_grid, win.boundary_distance(us), side="right")
            counts = _interval_matrix(np.arange(len(us)), start, end, len(us), n_r)
            return counts / (1.0 + bdata)[None, :]
        bd = win.boundary_distance(us)
        wt = self._ht_weight(win, w_free, bd, d) * win.area / (ref.n + 1)
        active = r_grid[None, :] >= d[:, None]
        return wt[:, None] * active

    def local_at_data(self, ctx, r_grid):
        ref, win, w_free, outer = self._domains(ctx)
        p = ctx.pattern
        n_r = len(r_grid)
        restricted = ctx.mode == "conditional" and ctx.domain == "restriction"
        if restricted:
            from .pattern import nn_distances as _nnd
            pts = ref.points
            nn = _nnd(ref) if ref.n >= 2 else np.full(ref.n, np.inf)
        else:
            _, nn, _ = _nn_info(p)
            pts = p.points
        if self.correction == "border":
            bdist = win.boundary_distance(pts)
            bdata = tail_counts(r_grid, win.boundary_distance(outer))
            start = np.searchsorted(r_grid, nn, side="left")
            end = np.searchsorted(r_grid, bdist, side="right")
            counts = _interval_matrix(np.arange(len(pts)), start, end,
                                      len(pts), n_r)
            out = counts / np.maximum(bdata, 1)[None, :].astype(float)
            out[:, bdata == 0] = np.nan
        else:
            bdist = win.boundary_distance(pts)
            wt = self._ht_weight(win, w_free, bdist, nn) * win.area / max(ref.n, 1)
            active = r_grid[None, :] >= nn[:, None]
            out = wt[:, None] * active
        if restricted:
            full = np.zeros((p.n, n_r))
            full[ctx.free_idx] = out
            return full
        return out

    # increments (unconditional, conventional Hanisch only)

    def _h_steps(self, ctx, d_at, bdist):
        win = ctx.pattern.window
        area = eroded_area(win, d_at)
        ok = (bdist >= d_at) & (area > 0)
        with np.errstate(divide="ignore"):
            return np.where(ok, 1.0 / area, 0.0)

    def incr_at(self, ctx, us, r_grid):
        """Δ_u G: own term, nearest-neighbor handovers, renormalization."""
        if self.correction != "hanisch" or ctx.mode == "conditional":
            raise NotImplementedError("G increments implemented for the "
                                      "unconditional Hanisch variant only")
        p = ctx.pattern
        us = np.atleast_2d(us)
        m, n_r = len(us), len(r_grid)
        if p.n == 0:
            return np.zeros((m, n_r))
        win = p.window
        _, d1, _ = _nn_info(p)
        bdist_pts = win.boundary_distance(p.points)
        ghat = self.totals(ctx, r_grid)
        du = _min_dist(us, p.points)
        wt_u = self._h_steps(ctx, du, win.boundary_distance(us))
        own = wt_u[:, None] * (r_grid[None, :] >= du[:, None])
        out = (win.area / (p.n + 1)) * own - ghat[None, :] / (p.n + 1)
        # points x_j whose nearest neighbor distance shrinks to |x_j - u|
        i, j, d = _close_pairs(us, p.points, float(np.max(d1)))
        keep = d < d1[j]
        i, j, d = i[keep], j[keep], d[keep]
        if len(i):
            w_new = self._h_steps(ctx, d, bdist_pts[j])
            w_old = self._h_steps(ctx, d1[j], bdist_pts[j])
            full = np.full(len(i), n_r)
            corr = _interval_matrix(i, np.searchsorted(r_grid, d, "left"),
                                    full, m, n_r, weights=w_new)
            corr -= _interval_matrix(i, np.searchsorted(r_grid, d1[j], "left"),
                                     full, m, n_r, weights=w_old)
            out = out + (win.area / (p.n + 1)) * corr
        return out

    def incr_at_data(self, ctx, r_grid):
        """Δ_{x_i} G = G(x) - G(x_{-i})."""
        if self.correction != "hanisch" or ctx.mode == "conditional":
            raise NotImplementedError("G increments implemented for the "
                                      "unconditional Hanisch variant only")
        p = ctx.pattern
        n, n_r = p.n, len(r_grid)
        if n < 3:
            raise ValueError("G increments need at least 3 points")
        win = p.window
        nn1, d1, d2 = _nn_info(p)
        bdist = win.boundary_distance(p.points)
        ghat = self.totals(ctx, r_grid)
        # unscaled Horvitz-Thompson profiles h(x_j, d, r) = w(d) 1{r >= d}
        own = self._h_steps(ctx, d1, bdist)[:, None] \
            * (r_grid[None, :] >= d1[:, None])
        t_all = own.sum(axis=0)
        # removing x_i hands the points with nn(j) = i over to their second
        # neighbor: h(x_j, d1_j) becomes h(x_j, d2_j)
        full = np.full(n, n_r)
        corr = _interval_matrix(nn1, np.searchsorted(r_grid, d2, "left"),
                                full, n, n_r, weights=self._h_steps(ctx, d2, bdist))
        corr -= _interval_matrix(nn1, np.searchsorted(r_grid, d1, "left"),
                                 full, n, n_r, weights=self._h_steps(ctx, d1, bdist))
        t_minus = t_all[None, :] - own + corr
        g_minus = (win.area / (n - 1.0)) * t_minus
        return ghat[None, :] - g_minus


class VA(LocalStat):
    """Normalized covered-area statistic ``|W ∩ ∪ B(x_i, r)| / |W|``.

    Not decomposable; only the increment-based (pseudo) diagnostics apply.
    """

    name = "va"
    decomposable = False
    needs_pixels = True

    def totals(self, ctx, r_grid):
        pix = ctx.pixels()
        d = pix.min_distance_field(ctx.pattern.points).ravel()
        covered = step_counts(r_grid, d)
        return covered * pix.cell_area / ctx.pattern.window.area

    def incr_at_data(self, ctx, r_grid):
        p = ctx.pattern
        pix = ctx.pixels()
        n_r = len(r_grid)
        if p.n == 0:
            return np.zeros((0, n_r))
        idx, d1, d2 = pix.two_nearest(p.points)
        rows = idx.ravel()
        start = np.searchsorted(r_grid, d1.ravel(), side="left")
        end = np.searchsorted(r_grid, d2.ravel(), side="left")
        mat = _interval_matrix(rows, start, end, p.n, n_r)
        return mat * pix.cell_area / p.window.area

    def incr_at(self, ctx, us, r_grid):
        p = ctx.pattern
        pix = ctx.pixels()
        us = np.atleast_2d(us)
        n_r = len(r_grid)
        dfield = pix.min_distance_field(p.points).ravel()
        centers = pix.centers()
        i, j, d = _close_pairs(us, centers, float(r_grid[-1]))
        start = np.searchsorted(r_grid, d, side="left")
        end = np.searchsorted(r_grid, dfield[j], side="left")
        mat = _interval_matrix(i, start, end, len(us), n_r)
        return mat * pix.cell_area / p.window.area

    def incr_data_sum(self, ctx, r_grid):
        if ctx.mode == "conditional":
            return super().incr_data_sum(ctx, r_grid)
        from .geometry import coverage_profile
        pix = ctx.pixels()
        counts = coverage_profile(ctx.pattern.points, r_grid, pix)
        singles = (counts == 1).sum(axis=0).astype(float)
        return singles * pix.cell_area / ctx.pattern.window.area

    def incr_weighted_sum(self, ctx, us, w, lam, r_grid):
        p = ctx.pattern
        pix = ctx.pixels()
        us = np.atleast_2d(us)
        n_r = len(r_grid)
        dfield = pix.min_distance_field(p.points)
        scale = 1.0 / p.window.area
        if _grid_matched(us, pix):
            prof = _uncovered_disc_integrals(
                pix, p.window, dfield, w, lam, r_grid,
                lambda k: dfield > r_grid[k])
            return prof * scale
        dflat = dfield.ravel()
        i, j, d = _close_pairs(us, pix.centers(), float(r_grid[-1]))
        start = np.searchsorted(r_grid, d, side="left")
        end = np.searchsorted(r_grid, dflat[j], side="left")
        prof = _interval_profile(start, end, n_r, weights=(w * lam)[i])
        return prof * pix.cell_area * scale


class FhatIncrement(LocalStat):
    """Empirical empty space function, increment diagnostics only."""

    name = "fhat"
    decomposable = False
    needs_pixels = True

    def __init__(self, correction: str = "raw"):
        if correction not in ("raw", "border"):
            raise ValueError(f"unsupported F correction {correction!r}")
        self.correction = correction

    def totals(self, ctx, r_grid):
        return f_hat(ctx.pattern, r_grid, ctx.pixels(), self.correction)

    def _den(self, ctx, r_grid):
        if self.correction == "raw":
            return np.full(len(r_grid), float(ctx.pixels().n_pixels))
        pix = ctx.pixels()
        bd = ctx.pattern.window.boundary_distance(pix.centers())
        return tail_counts(r_grid, bd).astype(float)

    def incr_at_data(self, ctx, r_grid):
        p = ctx.pattern
        pix = ctx.pixels()
        n_r = len(r_grid)
        if p.n == 0:
            return np.zeros((0, n_r))
        idx, d1, d2 = pix.two_nearest(p.points)
        rows = idx.ravel()
        start = np.searchsorted(r_grid, d1.ravel(), side="left")
        end = np.searchsorted(r_grid, d2.ravel(), side="left")
        if self.correction == "border":
            bd = p.window.boundary_distance(pix.centers())
            end = np.minimum(end, np.searchsorted(r_grid, bd, side="right"))
        mat = _interval_matrix(rows, start, end, p.n, n_r)
        den = self._den(ctx, r_grid)
        with np.errstate(invalid="ignore", divide="ignore"):
            out = mat / den[None, :]
        out[:, den == 0] = np.nan
        return out

    def incr_data_sum(self, ctx, r_grid):
        if ctx.mode == "conditional":
            return super().incr_data_sum(ctx, r_grid)
        from .geometry import coverage_profile
        pix = ctx.pixels()
        counts = coverage_profile(ctx.pattern.points, r_grid, pix)
        single = counts == 1
        if self.correction == "border":
            bd = ctx.pattern.window.boundary_distance(pix.centers())
            single = single & (bd[:, None] >= r_grid[None, :])
        num = single.sum(axis=0).astype(float)
        den = self._den(ctx, r_grid)
        with np.errstate(invalid="ignore", divide="ignore"):
            out = num / den
        out[den == 0] = np.nan
        return out

    def incr_at(self, ctx, us, r_grid):
        p = ctx.pattern
        pix = ctx.pixels()
        us = np.atleast_2d(us)
        n_r = len(r_grid)
        dfield = pix.min_distance_field(p.points).ravel()
        centers = pix.centers()
        i, j, d = _close_pairs(us, centers, float(r_grid[-1]))
        start = np.searchsorted(r_grid, d, side="left")
        end = np.searchsorted(r_grid, dfield[j], side="left")
        if self.correction == "border":
            bd = p.window.boundary_distance(centers)
            end = np.minimum(end, np.searchsorted(r_grid, bd[j], side="right"))
        mat = _interval_matrix(i, start, end, len(us), n_r)
        den = self._den(ctx, r_grid)
        with np.errstate(invalid="ignore", divide="ignore"):
            out = mat / den[None, :]
        out[:, den == 0] = np.nan
        return out

    def incr_weighted_sum(self, ctx, us, w, lam, r_grid):
        p = ctx.pattern
        pix = ctx.pixels()
        us = np.atleast_2d(us)
        n_r = len(r_grid)
        den = self._den(ctx, r_grid)
        dfield = pix.min_distance_field(p.points)
        if _grid_matched(us, pix):
            if self.correction == "border":
                bd = p.window.boundary_distance(pix.centers()).reshape(
                    pix.ny, pix.nx)
                masks = lambda k: (dfield > r_grid[k]) & (bd >= r_grid[k])
            else:
                masks = lambda k: dfield > r_grid[k]
            prof = _uncovered_disc_integrals(pix, p.window, dfield, w, lam,
                                             r_grid, masks) / pix.cell_area
        else:
            centers = pix.centers()
            dflat = dfield.ravel()
            i, j, d = _close_pairs(us, centers, float(r_grid[-1]))
            start = np.searchsorted(r_grid, d, side="left")
            end = np.searchsorted(r_grid, dflat[j], side="left")
            if self.correction == "border":
                bd = p.window.boundary_distance(centers)
                end = np.minimum(end, np.searchsorted(r_grid, bd[j], side="right"))
            prof = _interval_profile(start, end, n_r, weights=(w * lam)[i])
        with np.errstate(invalid="ignore", divide="ignore"):
            out = prof / den
        out[den == 0] = np.nan
        return out


def stat_by_name(name: str, **kw) -> LocalStat:
    name = name.lower()
    if name == "vs":
        return VS()
    if name == "vt":
        return VT()
    if name == "vg":
        return VG()
    if name in ("vgs", "vgsat"):
        return VGSat(kw.get("sat", 1.0))
    if name == "va":
        return VA()
    if name in ("khat", "k"):
        return KhatLocal(kw.get("correction", "translation"))
    if name in ("ghat", "g"):
        return GhatLocal(kw.get("correction", "hanisch"))
    if name in ("fhat", "f"):
        return FhatIncrement(kw.get("correction", "raw"))
    raise ValueError(f"unknown statistic {name!r}")


# --------------------------------------------------------------------------
# operations
# --------------------------------------------------------------------------


def _is_constant_intensity(model: GibbsModel) -> bool:
    return (len(model.trend.covariates) == 0 and model.trend.beta is not None
            and (model.interaction is None or model.interaction.phi == 0.0))


def compensator(stat: LocalStat, fitted_or_model, pattern=None, r_grid=None,
                mode="unconditional", nodes=None, pixel_grid=None,
                rule_m=64) -> np.ndarray:
    """Estimated compensator ``∫ s(u, x, r) λ̂(u, x) du``.

    When the fitted intensity is constant and the statistic is the pair
    count, the integral is evaluated in closed form (disc/window overlap
    areas); otherwise the integration rule is used.
    """
    if not stat.decomposable:
        raise ValueError(f"{stat.name} has no natural local decomposition; "
                         "use the pseudo diagnostics")
    ctx = _resolve(fitted_or_model, pattern, mode, nodes, pixel_grid, rule_m)
    r_grid = check_r_grid(r_grid if r_grid is not None else
                          _default_grid(ctx))
    whole_window = ctx.mode == "unconditional" or (ctx.split is not None
                                                   and ctx.split.R == 0.0)
    if (isinstance(stat, VS) and nodes is None and whole_window
            and _is_constant_intensity(ctx.model)):
        lam0 = float(np.exp(ctx.model.trend.beta[0]))
        return _vs_csr_compensator(ctx.pattern, r_grid, lam0)
    return _weighted_node_sum(stat.local_at, stat.local_at_data, ctx, r_grid)


def _default_grid(ctx):
    from .tables import default_r_grid
    return default_r_grid(ctx.pattern.window)


def _vs_csr_compensator(p: PointPattern, r_grid, lam0: float) -> np.ndarray:
    out = np.zeros(len(r_grid))
    pos = r_grid > 0
    if p.n and pos.any():
        rr = r_grid[pos]
        areas = np.zeros((p.n, len(rr)))
        for k, r in enumerate(rr):
            areas[:, k] = disc_window_area(p.points, r, p.window)
        out[pos] = 0.5 * lam0 * areas.sum(axis=0)
    return out


def _weighted_node_sum(at_free, at_data, ctx, r_grid) -> np.ndarray:
    rule = ctx.rule
    lam = ctx.lam()
    wl = rule.weights * lam
    out = np.zeros(len(r_grid))
    free = ~rule.is_data
    if free.any():
        vals = at_free(ctx, rule.nodes[free], r_grid)
        out += wl[free] @ vals
    if rule.is_data.any():
        vals = at_data(ctx, r_grid)[rule.data_index]
        out += wl[rule.is_data] @ vals
    return out


def residual(stat: LocalStat, fitted_or_model, pattern=None, r_grid=None,
             mode="unconditional", nodes=None, pixel_grid=None,
             rule_m=64) -> np.ndarray:
    """Empirical statistic minus its estimated compensator."""
    ctx = _resolve(fitted_or_model, pattern, mode, nodes, pixel_grid, rule_m)
    r_grid = check_r_grid(r_grid if r_grid is not None else _default_grid(ctx))
    emp = stat.totals(ctx, r_grid)
    comp = compensator(stat, fitted_or_model, pattern, r_grid, mode, nodes,
                       ctx.pixel_grid, rule_m)
    return emp - comp


innovation = residual  # at the true parameter the residual is the innovation


def _pseudo_sum_ctx(stat, ctx, r_grid):
    if stat.subset_order == 3:
        return float(math.factorial(3)) * stat.totals(ctx, r_grid)
    return stat.incr_data_sum(ctx, r_grid)


def pseudo_sum(stat: LocalStat, pattern_or_fm, r_grid=None,
               mode="unconditional", pixel_grid=None) -> np.ndarray:
    """``Σ_i Δ_{x_i} S(x, r)`` (over free points in conditional mode).

    Subset-count statistics of order k use the closed form ``k! S``.
    """
    if isinstance(pattern_or_fm, FittedModel):
        ctx = _resolve(pattern_or_fm, None, None, None, pixel_grid)
    else:
        if mode != "unconditional":
            raise ValueError("conditional pseudo-sums need a fitted model "
                             "(the split depends on the interaction range)")
        ctx = _Ctx(None, pattern_or_fm, mode, None, None, pixel_grid, "full")
    r_grid = check_r_grid(r_grid if r_grid is not None else _default_grid(ctx))
    return _pseudo_sum_ctx(stat, ctx, r_grid)


def pseudo_compensator(stat: LocalStat, fitted_or_model, pattern=None,
                       r_grid=None, mode="unconditional", nodes=None,
                       pixel_grid=None, rule_m=64) -> np.ndarray:
    """``∫ Δ_u S(x, r) λ̂(u, x) du`` over the active window.

    For subset-count statistics the closed-form multiples of the
    compensator are used (twice for pair counts, 3! times for triple
    counts).  For the standard-normalization K the closed form
    ``2 C K̂ - [2/(n-2) ∫ λ̂] K̂`` applies and needs ``n > 2``.
    """
    ctx = _resolve(fitted_or_model, pattern, mode, nodes, pixel_grid, rule_m)
    r_grid = check_r_grid(r_grid if r_grid is not None else _default_grid(ctx))
    if stat.subset_order is not None:
        scale = float(math.factorial(stat.subset_order))
        return scale * compensator(stat, fitted_or_model, pattern, r_grid,
                                   mode, nodes, ctx.pixel_grid, rule_m)
    if isinstance(stat, KhatLocal):
        n = ctx.pattern.n
        if n <= 2:
            raise ValueError("the K pseudo-compensator needs more than 2 points")
        comp = compensator(stat, fitted_or_model, pattern, r_grid, mode,
                           nodes, ctx.pixel_grid, rule_m)
        khat = stat.totals(ctx, r_grid)
        lam_tot = float((ctx.rule.weights * ctx.lam()).sum())
        return 2.0 * comp - (2.0 / (n - 2.0)) * lam_tot * khat
    rule = ctx.rule
    lam = ctx.lam()
    wl = rule.weights * lam
    out = np.zeros(len(r_grid))
    free = ~rule.is_data
    if free.any():
        out += stat.incr_weighted_sum(ctx, rule.nodes[free], wl[free], r_grid)
    if rule.is_data.any():
        vals = stat.incr_at_data(ctx, r_grid)[rule.data_index]
        out += (vals * wl[rule.is_data][:, None]).sum(axis=0)
    return out


def pseudo_residual(stat: LocalStat, fitted_or_model, pattern=None,
                    r_grid=None, mode="unconditional", nodes=None,
                    pixel_grid=None, rule_m=64) -> np.ndarray:
    """Pseudo-sum minus pseudo-compensator.

    For subset-count statistics this equals ``k!`` times the plain residual.
    """
    ctx = _resolve(fitted_or_model, pattern, mode, nodes, pixel_grid, rule_m)
    r_grid = check_r_grid(r_grid if r_grid is not None else _default_grid(ctx))
    if stat.subset_order == 3:
        return 6.0 * residual(stat, fitted_or_model, pattern, r_grid, mode,
                              nodes, ctx.pixel_grid, rule_m)
    psum = _pseudo_sum_ctx(stat, ctx, r_grid)
    pcom = pseudo_compensator(stat, fitted_or_model, pattern, r_grid, mode,
                              nodes, ctx.pixel_grid, rule_m)
    return psum - pcom


def poincare_variance(stat: LocalStat, fitted_or_model, pattern=None,
                      r_grid=None, mode="unconditional", flavor="residual",
                      nodes=None, pixel_grid=None, rule_m=64) -> np.ndarray:
    """Leading variance term ``∫ s² λ̂ du`` (or ``∫ (Δ_u S)² λ̂`` for
    ``flavor="pseudo"``)."""
    if flavor not in ("residual", "pseudo"):
        raise ValueError("flavor must be 'residual' or 'pseudo'")
    if flavor == "residual" and not stat.decomposable:
        raise ValueError(f"{stat.name} has no local decomposition; use "
                         "flavor='pseudo'")
    ctx = _resolve(fitted_or_model, pattern, mode, nodes, pixel_grid, rule_m)
    r_grid = check_r_grid(r_grid if r_grid is not None else _default_grid(ctx))
    if flavor == "residual":
        at_free = lambda c, us, r: stat.local_at(c, us, r) ** 2
        at_data = lambda c, r: stat.local_at_data(c, r) ** 2
    else:
        at_free = lambda c, us, r: stat.incr_at(c, us, r) ** 2
        at_data = lambda c, r: stat.incr_at_data(c, r) ** 2
    return _weighted_node_sum(at_free, at_data, ctx, r_grid)


def standardized(residual_col, variance_col) -> np.ndarray:
    """Residual over the square root of its variance surrogate.

    ``0/0`` and ``x/0`` are undefined (NaN); genuinely negative variances
    raise.
    """
    res = np.asarray(residual_col, dtype=float)
    var = np.asarray(variance_col, dtype=float)
    if np.any(var < -1e-12):
        raise ValueError("variance surrogate is negative")
    var = np.where(var < 0, 0.0, var)
    out = np.full(res.shape, np.nan)
    ok = var > 0
    out[ok] = res[ok] / np.sqrt(var[ok])
    if np.any(~ok & np.isfinite(res) & (res != 0)):
        import warnings
        warnings.warn("nonzero residual with zero variance surrogate; "
                      "values flagged undefined", RuntimeWarning)
    return out


def smooth(col, r_grid, bandwidth=None) -> np.ndarray:
    """Nadaraya-Watson smoothing with a Gaussian kernel over r.

    Undefined entries carry no weight; an all-undefined input stays
    undefined.
    """
    col = np.asarray(col, dtype=float)
    r = np.asarray(r_grid, dtype=float)
    if bandwidth is None:
        bandwidth = 0.05 * float(r[-1])
    ok = np.isfinite(col)
    if not ok.any():
        return np.full_like(col, np.nan)
    if bandwidth <= 0:
        return col.copy()
    w = np.exp(-0.5 * ((r[:, None] - r[None, ok]) / bandwidth) ** 2)
    den = w.sum(axis=1)
    out = np.full_like(col, np.nan)
    good = den > 0
    out[good] = (w[good] @ col[ok]) / den[good]
    return out


def mc_innovation_variance(stat: LocalStat, model: GibbsModel, window: Window,
                           r_grid, n_sims: int, seed: int = 0,
                           mcmc=None, rule_m: int = 64,
                           pixel_n: int = 128, n_jobs: int = 1) -> np.ndarray:
    """Monte Carlo variance of the innovation under a known model.

    Simulates ``n_sims`` patterns, evaluates the innovation (residual at the
    true parameter; the increment-based version for statistics without a
    local decomposition) and returns the empirical pointwise variance.
    """
    sims = _simulate_many(model, window, n_sims, seed, mcmc, n_jobs)
    r_grid = check_r_grid(r_grid)
    rows = np.array([_innovation_for(stat, model, p, r_grid, rule_m, pixel_n)
                     for p in sims])
    return rows.var(axis=0, ddof=1)


def _innovation_for(stat, model, p, r_grid, rule_m, pixel_n):
    if stat.needs_pixels:
        # matching grids route the pixel statistics through the FFT path
        pix = PixelGrid(p.window, pixel_n)
        rule = uniform_rule(p.window, pixel_n)
    else:
        pix = None
        rule = uniform_rule(p.window, rule_m)
    if stat.decomposable:
        return residual(stat, model, p, r_grid, nodes=rule, pixel_grid=pix)
    return pseudo_residual(stat, model, p, r_grid, nodes=rule, pixel_grid=pix)


def _simulate_many(model, window, n_sims, seed, mcmc, n_jobs):
    from .simulate import McmcConfig, sample_gibbs_many, sample_poisson
    if model.is_poisson:
        children = np.random.SeedSequence(seed).spawn(n_sims)
        return [sample_poisson(model.trend, window, c) for c in children]
    cfg = mcmc if mcmc is not None else McmcConfig(seed=seed)
    cfg = McmcConfig(cfg.n_steps, cfg.birth_prob, seed, cfg.max_points)
    return sample_gibbs_many(model, window, cfg, n_sims, n_jobs=n_jobs)
