"""Samplers: inhomogeneous Poisson by thinning, Gibbs models by birth-death MH.

All randomness flows from explicit integer seeds through
``numpy.random.SeedSequence``, so identical inputs give identical patterns and
replicate streams are independent of execution order.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from joblib import Parallel, delayed

from . import _mh
from .geometry import PixelGrid, Window
from .models import (AreaInteraction, FirstOrder, GeyerSat, GibbsModel,
                     SoftCore, Strauss)
from .pattern import PointPattern

__all__ = ["McmcConfig", "sample_poisson", "sample_gibbs", "sample_gibbs_many"]


@dataclass(frozen=True)
class McmcConfig:
    """Birth-death chain settings; burn-in is included in ``n_steps``."""

    n_steps: int = 100_000
    birth_prob: float = 0.5
    seed: int = 0
    max_points: int = 20_000

    def __post_init__(self):
        if not 0.0 < self.birth_prob < 1.0:
            raise ValueError("birth_prob must lie strictly between 0 and 1")
        if self.n_steps < 0:
            raise ValueError("n_steps must be nonnegative")


def _intensity_fn(fo):
    if isinstance(fo, FirstOrder):
        return lambda x, y: np.exp(fo.log_intensity(np.column_stack([x, y])))
    if np.isscalar(fo):
        return lambda x, y: np.full(np.shape(x), float(fo))
    return fo


def sample_poisson(fo, w: Window, seed=0, max_intensity=None,
                   bound_grid=512) -> PointPattern:
    """Poisson process with intensity ``fo`` by dominated thinning.

    ``fo`` may be a constant, a callable ``(x, y) -> rate`` or a
    :class:`FirstOrder` with coefficients.  The dominating rate is the grid
    maximum of the intensity inflated by 5% unless ``max_intensity`` is
    given.
    """
    rng = np.random.default_rng(seed)
    const = None
    if np.isscalar(fo):
        const = float(fo)
    elif isinstance(fo, FirstOrder) and not fo.covariates:
        if fo.beta is None:
            raise ValueError("first order coefficients are not set")
        const = float(np.exp(fo.beta[0]))
    if const is not None:
        # homogeneous: no thinning needed
        if not np.isfinite(const) or const < 0:
            raise ValueError("intensity must be finite and nonnegative")
        n = rng.poisson(const * w.area)
        xs = rng.uniform(w.x_min, w.x_max, n)
        ys = rng.uniform(w.y_min, w.y_max, n)
        return PointPattern(np.column_stack([xs, ys]), w)
    fn = _intensity_fn(fo)
    if max_intensity is None:
        grid = PixelGrid(w, bound_grid)
        xx, yy = np.meshgrid(grid.xs, grid.ys)
        vals = np.asarray(fn(xx.ravel(), yy.ravel()), dtype=float)
        if not np.all(np.isfinite(vals)):
            raise ValueError("intensity must be finite on the window")
        if np.any(vals < 0):
            raise ValueError("intensity must be nonnegative")
        max_intensity = float(vals.max()) * 1.05
    if max_intensity == 0.0:
        return PointPattern(np.empty((0, 2)), w)
    n_prop = rng.poisson(max_intensity * w.area)
    xs = rng.uniform(w.x_min, w.x_max, n_prop)
    ys = rng.uniform(w.y_min, w.y_max, n_prop)
    p_keep = np.asarray(fn(xs, ys), dtype=float) / max_intensity
    if np.any(p_keep > 1.0 + 1e-12):
        raise ValueError("dominating intensity is below the true maximum")
    keep = rng.uniform(size=n_prop) < p_keep
    return PointPattern(np.column_stack([xs[keep], ys[keep]]), w)


def _fast_kind(model: GibbsModel):
    inter = model.interaction
    if inter is None:
        return _mh.KIND_POISSON, 0.0, 1.0, 0.0
    phi = inter.phi
    if phi is None:
        raise ValueError("interaction parameter is not set")
    if isinstance(inter, Strauss):
        return _mh.KIND_STRAUSS, inter.r, 1.0, phi
    if isinstance(inter, GeyerSat):
        return _mh.KIND_GEYER, inter.r, inter.sat, phi
    if isinstance(inter, SoftCore):
        return _mh.KIND_SOFTCORE, inter.cutoff, 1.0, phi
    return None


class _Ctx:
    """Minimal pattern stand-in for the slow sampling path."""

    def __init__(self, points, window):
        self.points = points
        self.window = window

    @property
    def n(self):
        return len(self.points)


def sample_gibbs(model: GibbsModel, w: Window, cfg: McmcConfig,
                 grid: PixelGrid = None, init: PointPattern = None) -> PointPattern:
    """Draw one pattern from a Gibbs model by birth-death Metropolis-Hastings.

    Birth at a uniform location is accepted with probability
    ``min(1, λ(u, x) |W| / (n+1))``; a uniformly chosen death with
    ``min(1, n / (λ(x_i, x_{-i}) |W|))``.  The chain starts from a Poisson
    draw of the first order term (or ``init``) and runs ``cfg.n_steps``
    steps.
    """
    inter = model.interaction
    if isinstance(inter, Strauss) and inter.phi is not None and inter.phi > 0:
        raise ValueError("Strauss models with phi > 0 have no valid density; "
                         "simulation refused")
    if isinstance(inter, AreaInteraction) and grid is None:
        grid = PixelGrid(w, 256)
    ss = np.random.SeedSequence(cfg.seed)
    s_init, s_chain = ss.spawn(2)
    if init is None:
        init = sample_poisson(model.trend, w, s_init)
    coef = model.trend.poly_coeffs()
    fast = _fast_kind(model) if coef is not None else None
    if fast is not None:
        kind, r, sat, phi = fast
        kseed = int(s_chain.generate_state(1, dtype=np.uint32)[0])
        xs, ys, overflow = _mh.bd_chain(
            kseed, cfg.n_steps, cfg.birth_prob,
            np.ascontiguousarray(init.points[:, 0]),
            np.ascontiguousarray(init.points[:, 1]),
            w.x_min, w.x_max, w.y_min, w.y_max,
            coef, kind, r, sat, phi, cfg.max_points)
        if overflow:
            raise RuntimeError("chain exceeded max_points; model may be unstable")
        return PointPattern(np.column_stack([xs, ys]), w)
    return _sample_gibbs_py(model, w, cfg, grid, init,
                            np.random.default_rng(s_chain))


def _sample_gibbs_py(model, w, cfg, grid, init, rng):
    pts = list(map(tuple, init.points))
    log_area = np.log(w.area)
    inter = model.interaction
    phi = 0.0 if inter is None else inter.phi
    for _ in range(cfg.n_steps):
        n = len(pts)
        if rng.uniform() < cfg.birth_prob:
            u = np.array([rng.uniform(w.x_min, w.x_max),
                          rng.uniform(w.y_min, w.y_max)])
            ctx = _Ctx(np.asarray(pts).reshape(n, 2), w)
            loglam = float(model.trend.log_intensity(u[None, :])[0])
            if inter is not None and phi != 0.0:
                d = float(inter.delta_free(u[None, :], ctx, grid)[0])
                if d != 0.0:
                    loglam += phi * d
            if np.log(rng.uniform()) < loglam + log_area - np.log(n + 1.0):
                if n + 1 > cfg.max_points:
                    raise RuntimeError("chain exceeded max_points")
                pts.append((u[0], u[1]))
        else:
            if n == 0:
                continue
            i = int(rng.integers(n))
            xi = np.asarray(pts[i])
            rest = _Ctx(np.asarray(pts[:i] + pts[i + 1:]).reshape(n - 1, 2), w)
            loglam = float(model.trend.log_intensity(xi[None, :])[0])
            if inter is not None and phi != 0.0:
                d = float(inter.delta_free(xi[None, :], rest, grid)[0])
                if d != 0.0:
                    loglam += phi * d
            if np.log(rng.uniform()) < np.log(float(n)) - loglam - log_area:
                pts.pop(i)
    return PointPattern(np.asarray(pts).reshape(len(pts), 2), w)


def sample_gibbs_many(model: GibbsModel, w: Window, cfg: McmcConfig,
                      n_rep: int, grid: PixelGrid = None,
                      n_jobs: int = 1) -> list:
    """Independent replicate chains with per-replicate seed streams."""
    children = np.random.SeedSequence(cfg.seed).spawn(n_rep)
    cfgs = [McmcConfig(cfg.n_steps, cfg.birth_prob,
                       int(c.generate_state(1)[0]), cfg.max_points)
            for c in children]
    if n_jobs == 1:
        return [sample_gibbs(model, w, c, grid) for c in cfgs]
    out = Parallel(n_jobs=n_jobs)(
        delayed(sample_gibbs)(model, w, c, grid) for c in cfgs)
    return list(out)
