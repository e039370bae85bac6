"""Gibbs point process models and their conditional intensities.

A model couples a log-linear first order term ``log λ(u) = β·Z(u)`` with at
most one interaction potential ``V`` carrying a canonical parameter ``φ``:

    f(x) ∝ [∏ λ(x_i)] exp(φ V(x))

Normalizing constants are never computed; they cancel in every conditional
intensity ratio.  One-point increments ``Δ_u V`` are evaluated locally, and
agree with a global recompute of ``V(x ∪ u) − V(x)`` (exactly for the
combinatorial potentials, to the same pixel grid for area interaction).
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .geometry import PixelGrid, Window, _stamp_counts
from .pattern import BorderSplit, PointPattern

__all__ = [
    "Covariate",
    "monomial",
    "polynomial_covariates",
    "FirstOrder",
    "Strauss",
    "GeyerSat",
    "AreaInteraction",
    "SoftCore",
    "Triplet",
    "GibbsModel",
    "potential",
    "delta_potential",
    "cond_intensity",
    "second_order_cond_intensity",
    "softcore_cutoff",
]

# monomial exponents of the cubic basis used by the fast simulation kernel
CUBIC_BASIS = ((0, 0), (1, 0), (0, 1), (2, 0), (1, 1), (0, 2),
               (3, 0), (2, 1), (1, 2), (0, 3))


@dataclass(frozen=True)
class Covariate:
    """A named real-valued field ``Z(x, y)`` over the window."""

    name: str
    fn: Callable[[np.ndarray, np.ndarray], np.ndarray]
    exponents: Optional[tuple] = None  # set for monomials x^i y^j

    def __call__(self, x, y):
        return self.fn(np.asarray(x, float), np.asarray(y, float))


def monomial(i: int, j: int) -> Covariate:
    name = "1" if i == j == 0 else f"x^{i}*y^{j}"
    return Covariate(name, lambda x, y, i=i, j=j: x ** i * y ** j, (i, j))


def polynomial_covariates(degree: int):
    """All monomials of total degree 1..degree (the constant is implicit)."""
    return tuple(monomial(i, j)
                 for d in range(1, degree + 1)
                 for i, j in ((d - k, k) for k in range(d + 1)))


class FirstOrder:
    """Log-linear first order term.  The constant covariate is implicit."""

    def __init__(self, covariates=(), beta=None):
        self.covariates = tuple(covariates)
        self.beta = None if beta is None else np.asarray(beta, dtype=float)
        if self.beta is not None and len(self.beta) != 1 + len(self.covariates):
            raise ValueError("beta must have length 1 + number of covariates")

    @classmethod
    def constant(cls, log_level: float) -> "FirstOrder":
        return cls((), [float(log_level)])

    def basis(self, xy) -> np.ndarray:
        """Design matrix ``Z(u)``, one row per location, column 0 constant."""
        xy = np.atleast_2d(np.asarray(xy, dtype=float))
        cols = [np.ones(len(xy))]
        cols += [np.asarray(c(xy[:, 0], xy[:, 1]), dtype=float) for c in self.covariates]
        return np.column_stack(cols)

    def log_intensity(self, xy) -> np.ndarray:
        if self.beta is None:
            raise ValueError("first order coefficients are not set")
        return self.basis(xy) @ self.beta

    def with_beta(self, beta) -> "FirstOrder":
        return FirstOrder(self.covariates, beta)

    def poly_coeffs(self):
        """Coefficients over the cubic monomial basis, or ``None``.

        Only available when every covariate is a monomial of total degree
        <= 3; used to route simulation through the compiled kernel.
        """
        if self.beta is None:
            return None
        coef = np.zeros(len(CUBIC_BASIS))
        coef[0] = self.beta[0]
        for b, cov in zip(self.beta[1:], self.covariates):
            if cov.exponents is None or sum(cov.exponents) > 3:
                return None
            coef[CUBIC_BASIS.index(cov.exponents)] += b
        return coef

    @property
    def names(self):
        return ("1",) + tuple(c.name for c in self.covariates)


def _count_within(us, pts, r, weights=None):
    """For each row of ``us``, the (weighted) count of ``pts`` within ``r``."""
    us = np.atleast_2d(np.asarray(us, float))
    pts = np.atleast_2d(np.asarray(pts, float))
    m, n = len(us), len(pts)
    out = np.zeros(m)
    if n == 0 or m == 0:
        return out
    r2 = r * r
    step = max(1, int(4e6 // max(n, 1)))
    for k0 in range(0, m, step):
        k1 = min(k0 + step, m)
        d2 = ((us[k0:k1, None, :] - pts[None, :, :]) ** 2).sum(axis=2)
        mask = d2 <= r2
        out[k0:k1] = mask.sum(axis=1) if weights is None else mask @ weights
    return out


def _pair_dists(pts):
    from scipy.spatial.distance import pdist
    return pdist(pts) if len(pts) > 1 else np.empty(0)


def _adjacency(pts, r):
    from scipy.spatial.distance import squareform
    n = len(pts)
    if n < 2:
        return np.zeros((n, n), dtype=bool)
    a = squareform(_pair_dists(pts) <= r)
    return a


@dataclass(frozen=True)
class Strauss:
    """Pairwise interaction counting r-close pairs."""

    r: float
    phi: Optional[float] = None

    kind = "strauss"

    @property
    def range(self) -> float:
        return self.r

    def potential(self, p: PointPattern, grid=None) -> float:
        return float((_pair_dists(p.points) <= self.r).sum())

    def delta_free(self, us, p: PointPattern, grid=None) -> np.ndarray:
        return _count_within(us, p.points, self.r)

    def delta_data(self, p: PointPattern, grid=None) -> np.ndarray:
        return _adjacency(p.points, self.r).sum(axis=1).astype(float)


@dataclass(frozen=True)
class GeyerSat:
    """Geyer saturation interaction; ``sat=1`` counts points with a close neighbor."""

    r: float
    sat: float = 1.0
    phi: Optional[float] = None

    kind = "geyer"

    @property
    def range(self) -> float:
        return 2.0 * self.r

    def _t(self, p: PointPattern) -> np.ndarray:
        return _adjacency(p.points, self.r).sum(axis=1).astype(float)

    def potential(self, p: PointPattern, grid=None) -> float:
        return float(np.minimum(self.sat, self._t(p)).sum())

    def delta_free(self, us, p: PointPattern, grid=None) -> np.ndarray:
        us = np.atleast_2d(np.asarray(us, float))
        if p.n == 0:
            return np.zeros(len(us))
        t = self._t(p)
        gain = np.clip(self.sat - t, 0.0, 1.0)
        own = _count_within(us, p.points, self.r)
        others = _count_within(us, p.points, self.r, weights=gain)
        return np.minimum(self.sat, own) + others

    def delta_data(self, p: PointPattern, grid=None) -> np.ndarray:
        a = _adjacency(p.points, self.r)
        t = a.sum(axis=1).astype(float)
        gain = np.clip(self.sat - t + 1.0, 0.0, 1.0)
        return np.minimum(self.sat, t) + a @ gain


@dataclass(frozen=True)
class AreaInteraction:
    """Union-of-discs interaction, ``V = -|W ∩ ∪ B(x_i, r)|`` (pixel-measured)."""

    r: float
    phi: Optional[float] = None

    kind = "area"

    @property
    def range(self) -> float:
        return 2.0 * self.r

    def _require_grid(self, grid):
        if grid is None:
            raise ValueError("area interaction requires a pixel grid")
        return grid

    def potential(self, p: PointPattern, grid: PixelGrid = None) -> float:
        grid = self._require_grid(grid)
        counts = _stamp_counts(p.points, self.r, grid)
        return -float((counts > 0).sum()) * grid.cell_area

    def delta_free(self, us, p: PointPattern, grid: PixelGrid = None) -> np.ndarray:
        grid = self._require_grid(grid)
        us = np.atleast_2d(np.asarray(us, float))
        dfield = grid.min_distance_field(p.points)
        out = np.empty(len(us))
        for k, (x, y) in enumerate(us):
            out[k] = -self._uncovered_count(x, y, dfield, grid) * grid.cell_area
        return out

    def _uncovered_count(self, x, y, dfield, grid: PixelGrid) -> int:
        r = self.r
        ix0 = max(0, int(np.floor((x - r - grid.window.x_min) / grid.dx - 0.5)))
        ix1 = min(grid.nx, int(np.ceil((x + r - grid.window.x_min) / grid.dx + 0.5)))
        iy0 = max(0, int(np.floor((y - r - grid.window.y_min) / grid.dy - 0.5)))
        iy1 = min(grid.ny, int(np.ceil((y + r - grid.window.y_min) / grid.dy + 0.5)))
        if ix0 >= ix1 or iy0 >= iy1:
            return 0
        dx2 = (grid.xs[ix0:ix1] - x) ** 2
        dy2 = (grid.ys[iy0:iy1] - y) ** 2
        inside = dy2[:, None] + dx2[None, :] <= r * r
        return int((inside & (dfield[iy0:iy1, ix0:ix1] > r)).sum())

    def delta_data(self, p: PointPattern, grid: PixelGrid = None) -> np.ndarray:
        grid = self._require_grid(grid)
        if p.n == 0:
            return np.zeros(0)
        idx, d1, d2 = grid.two_nearest(p.points)
        solo = (d1 <= self.r) & (d2 > self.r)
        counts = np.bincount(idx[solo].ravel(), minlength=p.n)
        return -counts.astype(float) * grid.cell_area


@dataclass(frozen=True)
class SoftCore:
    """Inverse fourth power pair potential with a hard cutoff.

    ``V = -Σ_{i<j} |x_i - x_j|^{-4} 1{d <= cutoff}`` and the canonical
    parameter is ``φ = σ⁴``, so that each pair contributes
    ``-(σ/d)⁴`` to the log density.
    """

    cutoff: float
    sigma2: Optional[float] = None

    kind = "softcore"

    @property
    def phi(self):
        return None if self.sigma2 is None else float(self.sigma2) ** 2

    @property
    def range(self) -> float:
        return self.cutoff

    def potential(self, p: PointPattern, grid=None) -> float:
        d = _pair_dists(p.points)
        d = d[d <= self.cutoff]
        return -float((d ** -4.0).sum())

    def delta_free(self, us, p: PointPattern, grid=None) -> np.ndarray:
        us = np.atleast_2d(np.asarray(us, float))
        out = np.zeros(len(us))
        if p.n == 0:
            return out
        for k0 in range(0, len(us), 512):
            k1 = min(k0 + 512, len(us))
            d2 = ((us[k0:k1, None, :] - p.points[None, :, :]) ** 2).sum(axis=2)
            contrib = np.where(d2 <= self.cutoff ** 2, d2 ** -2.0, 0.0)
            out[k0:k1] = -contrib.sum(axis=1)
        return out

    def delta_data(self, p: PointPattern, grid=None) -> np.ndarray:
        from scipy.spatial.distance import squareform
        if p.n < 2:
            return np.zeros(p.n)
        d = squareform(_pair_dists(p.points))
        np.fill_diagonal(d, np.inf)
        contrib = np.where(d <= self.cutoff, d ** -4.0, 0.0)
        return -contrib.sum(axis=1)


def softcore_cutoff(sigma2: float, eps: float) -> float:
    """Interaction cutoff R solving ``(σ/R)⁴ = eps`` for the soft core."""
    return math.sqrt(sigma2) * eps ** -0.25


@dataclass(frozen=True)
class Triplet:
    """Third order interaction counting r-close triangles (all sides <= r)."""

    r: float
    phi: Optional[float] = None

    kind = "triplet"

    @property
    def range(self) -> float:
        return 2.0 * self.r

    def potential(self, p: PointPattern, grid=None) -> float:
        a = _adjacency(p.points, self.r).astype(np.int64)
        return float((a @ a * a).sum()) / 6.0

    def delta_free(self, us, p: PointPattern, grid=None) -> np.ndarray:
        us = np.atleast_2d(np.asarray(us, float))
        out = np.zeros(len(us))
        if p.n < 2:
            return out
        a = _adjacency(p.points, self.r)
        r2 = self.r ** 2
        for k, u in enumerate(us):
            nbr = np.nonzero(((p.points - u) ** 2).sum(axis=1) <= r2)[0]
            if len(nbr) >= 2:
                out[k] = a[np.ix_(nbr, nbr)].sum() / 2.0
        return out

    def delta_data(self, p: PointPattern, grid=None) -> np.ndarray:
        out = np.zeros(p.n)
        for i in range(p.n):
            out[i] = self.delta_free(p.points[i], p.drop(i), grid)[0]
        return out


_INTERACTIONS = {c.kind: c for c in (Strauss, GeyerSat, AreaInteraction, SoftCore, Triplet)}


class GibbsModel:
    """First order trend plus at most one interaction term."""

    def __init__(self, trend: FirstOrder, interaction=None):
        self.trend = trend
        self.interaction = interaction

    @property
    def is_poisson(self) -> bool:
        return self.interaction is None or self.interaction.phi == 0.0

    @property
    def interaction_range(self) -> float:
        return 0.0 if self.interaction is None else self.interaction.range

    @property
    def phi(self):
        return None if self.interaction is None else self.interaction.phi

    def with_params(self, beta, phi=None) -> "GibbsModel":
        trend = self.trend.with_beta(beta)
        inter = self.interaction
        if inter is not None and phi is not None:
            if isinstance(inter, SoftCore):
                inter = dataclasses.replace(inter, sigma2=math.sqrt(max(phi, 0.0)))
            else:
                inter = dataclasses.replace(inter, phi=float(phi))
        return GibbsModel(trend, inter)

    def log_trend(self, xy) -> np.ndarray:
        return self.trend.log_intensity(xy)

    def log_cond_intensity(self, us, p: PointPattern, grid=None,
                           split: BorderSplit = None) -> np.ndarray:
        """``log λ(u, x)`` at locations ``us`` (assumed not in the pattern).

        With ``split`` the conditional (border-conditioned) version is
        returned: ``-inf`` outside the free window, and the increment is
        evaluated against the full pattern.
        """
        us = np.atleast_2d(np.asarray(us, float))
        if not np.all(p.window.contains(us)):
            raise ValueError("locations must lie inside the window")
        eta = self.trend.log_intensity(us)
        if self.interaction is not None:
            phi = self.interaction.phi
            if phi is None:
                raise ValueError("interaction parameter is not set")
            if phi != 0.0:
                eta = eta + phi * self.interaction.delta_free(us, p, grid)
        if split is not None:
            eta = np.where(split.free_window.contains(us), eta, -np.inf)
        return eta

    def cond_intensity(self, us, p: PointPattern, grid=None,
                       split: BorderSplit = None) -> np.ndarray:
        return np.exp(self.log_cond_intensity(us, p, grid, split))

    def cond_intensity_at_data(self, p: PointPattern, grid=None,
                               split: BorderSplit = None) -> np.ndarray:
        """``λ(x_i, x)`` for the data points, i.e. ``λ(x_i, x_{-i})``."""
        eta = self.trend.log_intensity(p.points)
        if self.interaction is not None:
            phi = self.interaction.phi
            if phi is None:
                raise ValueError("interaction parameter is not set")
            if phi != 0.0:
                eta = eta + phi * self.interaction.delta_data(p, grid)
        if split is not None:
            eta = np.where(split.free_window.contains(p.points), eta, -np.inf)
        return np.exp(eta)

    def log_density(self, p: PointPattern, grid=None) -> float:
        """Unnormalized log density of the pattern (for MCMC ratios)."""
        out = float(self.trend.log_intensity(p.points).sum()) if p.n else 0.0
        if self.interaction is not None:
            phi = self.interaction.phi
            if phi is None:
                raise ValueError("interaction parameter is not set")
            if phi != 0.0:
                out += phi * self.interaction.potential(p, grid)
        return out

    def to_dict(self) -> dict:
        d = {"trend": _trend_to_dict(self.trend)}
        if self.interaction is not None:
            d["interaction"] = interaction_to_dict(self.interaction)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "GibbsModel":
        trend = _trend_from_dict(d["trend"])
        inter = interaction_from_dict(d["interaction"]) if d.get("interaction") else None
        return cls(trend, inter)


def _trend_to_dict(trend: FirstOrder) -> dict:
    monos = [(0, 0)]
    for c in trend.covariates:
        if c.exponents is None:
            raise ValueError(f"covariate {c.name!r} is not serializable")
        monos.append(list(c.exponents))
    return {
        "monomials": [list(m) for m in monos],
        "log_coeff": None if trend.beta is None else [float(b) for b in trend.beta],
    }


def _trend_from_dict(d: dict) -> FirstOrder:
    monos = [tuple(m) for m in d["monomials"]]
    if monos[0] != (0, 0):
        raise ValueError("first trend monomial must be the constant (0, 0)")
    covs = tuple(monomial(i, j) for i, j in monos[1:])
    return FirstOrder(covs, d.get("log_coeff"))


def interaction_to_dict(inter) -> dict:
    d = {"kind": inter.kind}
    if inter.kind in ("strauss", "geyer", "area", "triplet"):
        d["r"] = inter.r
        if inter.kind == "geyer":
            d["sat"] = inter.sat
        if inter.phi is not None:
            d["phi"] = float(inter.phi)
            d["gamma"] = float(np.exp(inter.phi))
    else:  # softcore
        d["cutoff"] = inter.cutoff
        if inter.sigma2 is not None:
            d["sigma2"] = float(inter.sigma2)
    return d


def interaction_from_dict(d: dict):
    kind = d["kind"]
    if kind not in _INTERACTIONS:
        raise ValueError(f"unknown interaction kind {kind!r}")
    phi = d.get("phi")
    if phi is None and d.get("gamma") is not None:
        phi = float(np.log(d["gamma"]))
    if kind == "strauss":
        return Strauss(d["r"], phi)
    if kind == "geyer":
        return GeyerSat(d["r"], d.get("sat", 1.0), phi)
    if kind == "area":
        return AreaInteraction(d["r"], phi)
    if kind == "triplet":
        return Triplet(d["r"], phi)
    return SoftCore(d["cutoff"], d.get("sigma2"))


def potential(interaction, p: PointPattern, grid: PixelGrid = None) -> float:
    """Value of the interaction potential ``V(x)``."""
    return interaction.potential(p, grid)


def delta_potential(interaction, p: PointPattern, u, grid: PixelGrid = None) -> float:
    """One-point increment ``Δ_u V(x)`` for a location ``u`` not in ``x``."""
    return float(interaction.delta_free(np.asarray(u, float), p, grid)[0])


def cond_intensity(model: GibbsModel, u, p: PointPattern, grid=None,
                   split: BorderSplit = None) -> float:
    """Papangelou conditional intensity ``λ(u, x)`` at a single location.

    If ``u`` coincides with a pattern point the leave-one-out convention
    ``λ(x_i, x) = λ(x_i, x_{-i})`` applies.
    """
    u = np.asarray(u, dtype=float)
    hit = np.nonzero((p.points == u).all(axis=1))[0] if p.n else []
    if len(hit):
        return float(model.cond_intensity_at_data(p, grid, split)[hit[0]])
    return float(model.cond_intensity(u, p, grid, split)[0])


def second_order_cond_intensity(model: GibbsModel, u, v, p: PointPattern,
                                grid=None) -> float:
    """``λ₂(u, v, x) = λ(u, x) λ(v, x ∪ {u})``; symmetric in ``(u, v)``."""
    u = np.asarray(u, float)
    v = np.asarray(v, float)
    if np.all(u == v):
        raise ValueError("second order intensity requires u != v")
    return cond_intensity(model, u, p, grid) * cond_intensity(model, v, p.add(u), grid)
