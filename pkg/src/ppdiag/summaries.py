"""Edge-corrected empirical summary functions K, G and F.

Supported corrections:

* ``k_hat`` -- ``raw``, ``translation`` (Ohser-Stoyan), ``isotropic``
  (Ripley) and ``border``;
* ``g_hat`` -- ``hanisch`` (Horvitz-Thompson weights with the conventional
  intensity estimate n/|W|), ``hanisch-d4`` (self-normalized) and
  ``border``;
* ``f_hat`` -- ``raw`` and ``border`` (pixel based).

Each supports three domains for border-conditioned model diagnostics:
``full`` (the default), ``restriction`` (recompute on the eroded window,
discarding border points) and ``reweighting`` (keep border points as
neighbors, with Horvitz-Thompson weights adjusted to the eroded domain).

Undefined values (empty denominators) are returned as NaN.
"""

from __future__ import annotations

import numpy as np

from ._accum import interval_counts, step_counts, tail_counts
from .geometry import PixelGrid, Window, erode
from .pattern import PointPattern, nn_distances, split_border
from .tables import check_r_grid

__all__ = ["k_hat", "g_hat", "f_hat", "translation_weight", "isotropic_weight",
           "eroded_area"]

K_CORRECTIONS = ("raw", "translation", "isotropic", "border")
G_CORRECTIONS = ("hanisch", "hanisch-d4", "border")
F_CORRECTIONS = ("raw", "border")
DOMAINS = ("full", "restriction", "reweighting")


def translation_weight(w: Window, dxy: np.ndarray, w_outer: Window = None) -> np.ndarray:
    """Ohser-Stoyan weight for pair displacements ``dxy``.

    With ``w_outer`` given, the weight is the two-domain version for pairs
    with the first point in ``w_outer`` and the second in ``w``:
    ``|w_outer| / |w_outer ∩ (w - z)|``.
    """
    dxy = np.atleast_2d(dxy)
    if w_outer is None:
        ox = w.side_x - np.abs(dxy[:, 0])
        oy = w.side_y - np.abs(dxy[:, 1])
        area = w.area
    else:
        ox = (np.minimum(w_outer.x_max, w.x_max - dxy[:, 0])
              - np.maximum(w_outer.x_min, w.x_min - dxy[:, 0]))
        oy = (np.minimum(w_outer.y_max, w.y_max - dxy[:, 1])
              - np.maximum(w_outer.y_min, w.y_min - dxy[:, 1]))
        area = w_outer.area
    denom = np.clip(ox, 0.0, None) * np.clip(oy, 0.0, None)
    with np.errstate(divide="ignore"):
        return np.where(denom > 0, area / denom, np.inf)


def isotropic_weight(w: Window, centers: np.ndarray, t: np.ndarray) -> np.ndarray:
    """Ripley weight: circle circumference over arc length inside ``w``.

    ``centers`` are the reference points, ``t`` the pair distances.
    """
    centers = np.atleast_2d(centers)
    t = np.asarray(t, dtype=float)
    dl = centers[:, 0] - w.x_min
    dr = w.x_max - centers[:, 0]
    db = centers[:, 1] - w.y_min
    dt = w.y_max - centers[:, 1]

    def angle(d):
        return np.arccos(np.clip(d / t, -1.0, 1.0)) * (d < t)

    al, ar, ab, at = angle(dl), angle(dr), angle(db), angle(dt)
    exterior = 2.0 * (al + ar + ab + at)
    for ax, ay in ((al, ab), (al, at), (ar, ab), (ar, at)):
        exterior -= np.maximum(0.0, ax + ay - np.pi / 2.0)
    return 2.0 * np.pi / (2.0 * np.pi - exterior)


def eroded_area(w: Window, d) -> np.ndarray:
    """Area of ``W ⊖ d`` (zero once a side collapses)."""
    d = np.asarray(d, dtype=float)
    return np.clip(w.side_x - 2 * d, 0.0, None) * np.clip(w.side_y - 2 * d, 0.0, None)


def _pairs(outer_pts, inner_pts, r_max, same=False):
    """Close pairs (distance <= r_max) between two point sets.

    Returns (i, j, d): indices into outer/inner and the distance.  With
    ``same=True`` self pairs are removed.
    """
    m, n = len(outer_pts), len(inner_pts)
    if m == 0 or n == 0:
        return (np.empty(0, int), np.empty(0, int), np.empty(0))
    ii, jj, dd = [], [], []
    step = max(1, int(4e6 // max(n, 1)))
    for k0 in range(0, m, step):
        k1 = min(k0 + step, m)
        d2 = ((outer_pts[k0:k1, None, :] - inner_pts[None, :, :]) ** 2).sum(axis=2)
        mask = d2 <= r_max * r_max
        if same:
            rows = np.arange(k0, k1)
            mask[rows - k0, rows] = False
        i, j = np.nonzero(mask)
        ii.append(i + k0)
        jj.append(j)
        dd.append(np.sqrt(d2[mask]))
    return np.concatenate(ii), np.concatenate(jj), np.concatenate(dd)


def _k_restrict_args(p, domain, R):
    """Outer/inner point sets and the effective window for each domain."""
    if domain == "full":
        return p.points, p.points, p.window, True
    split = split_border(p, R)
    free = p.points[split.free_idx]
    if domain == "restriction":
        return free, free, split.free_window, True
    return free, p.points, split.free_window, False


def k_hat(p: PointPattern, r_grid, correction: str = "translation",
          domain: str = "full", R: float = 0.0) -> np.ndarray:
    """Empirical K function with the requested edge correction."""
    r_grid = check_r_grid(r_grid)
    if correction not in K_CORRECTIONS:
        raise ValueError(f"unknown K correction {correction!r}")
    if domain not in DOMAINS:
        raise ValueError(f"unknown domain {domain!r}")
    if p.n < 2:
        raise ValueError("K undefined for fewer than 2 points")
    w = p.window
    r_max = float(r_grid[-1])

    if correction == "border":
        return _k_border(p, r_grid, domain, R)

    outer, inner, w_eff, same = _k_restrict_args(p, domain, R)
    if domain == "restriction":
        n_out = len(outer)
        if n_out < 2:
            return np.full(len(r_grid), np.nan)
        norm = w_eff.area / (n_out * (n_out - 1))
        w_pair = w_eff
        w_outer = None
    elif domain == "reweighting":
        norm = w.area ** 2 / (p.n * (p.n - 1) * w_eff.area)
        w_pair = w
        w_outer = w_eff
    else:
        norm = w.area / (p.n * (p.n - 1))
        w_pair = w
        w_outer = None

    # self pairs in the reweighting case: outer points are a subset of inner
    i, j, d = _pairs(outer, inner, r_max, same=same)
    if domain == "reweighting":
        keep = d > 0
        i, j, d = i[keep], j[keep], d[keep]
    if correction == "raw":
        e = np.ones(len(d))
    elif correction == "translation":
        e = translation_weight(w_pair, outer[i] - inner[j], w_outer)
    else:  # isotropic: the weight is unchanged under reweighting
        e = isotropic_weight(w_pair, outer[i], d)
    return norm * step_counts(r_grid, d, weights=e)


def _k_border(p: PointPattern, r_grid, domain, R):
    w = p.window
    r_max = float(r_grid[-1])
    if domain == "full":
        outer, inner, ww, same = p.points, p.points, w, True
        n_norm, area = p.n, w.area
        bdist = w.boundary_distance(outer)
    elif domain == "restriction":
        split = split_border(p, R)
        outer = inner = p.points[split.free_idx]
        ww, same = split.free_window, True
        n_norm, area = len(outer), ww.area
        if n_norm < 2:
            return np.full(len(r_grid), np.nan)
        bdist = ww.boundary_distance(outer)
    else:
        split = split_border(p, R)
        outer, inner, same = p.points[split.free_idx], p.points, False
        n_norm, area = p.n, w.area
        bdist = w.boundary_distance(outer)
    i, j, d = _pairs(outer, inner, r_max, same=same)
    if domain == "reweighting":
        keep = d > 0
        i, j, d = i[keep], j[keep], d[keep]
    num = interval_counts(r_grid, d, bdist[i])
    den = tail_counts(r_grid, bdist).astype(float)
    with np.errstate(invalid="ignore", divide="ignore"):
        out = area * num / (n_norm * den)
    out[den == 0] = np.nan
    return out


def g_hat(p: PointPattern, r_grid, correction: str = "hanisch",
          domain: str = "full", R: float = 0.0) -> np.ndarray:
    """Empirical nearest-neighbor distance distribution function."""
    r_grid = check_r_grid(r_grid)
    if correction not in G_CORRECTIONS:
        raise ValueError(f"unknown G correction {correction!r}")
    if domain not in DOMAINS:
        raise ValueError(f"unknown domain {domain!r}")
    min_n = 1 if correction == "border" else 2
    if p.n < min_n:
        raise ValueError("G undefined for this few points")
    w = p.window

    if domain == "restriction":
        split = split_border(p, R)
        sub = p.subset(split.free_idx)
        return g_hat(sub, r_grid, correction, "full", 0.0)

    d = nn_distances(p) if p.n >= 2 else np.full(p.n, np.inf)
    if domain == "reweighting":
        split = split_border(p, R)
        sel = split.free_idx
        w_free = split.free_window
    else:
        sel = np.arange(p.n)
        w_free = None
    bdist = w.boundary_distance(p.points[sel])
    dsel = d[sel]

    if correction == "border":
        num = interval_counts(r_grid, dsel, bdist)
        den = tail_counts(r_grid, bdist).astype(float)
        with np.errstate(invalid="ignore", divide="ignore"):
            out = num / den
        out[den == 0] = np.nan
        return out

    ok = bdist >= dsel
    if domain == "reweighting":
        denom_area = _isect_area(w_free, w, dsel)
    else:
        denom_area = eroded_area(w, dsel)
    with np.errstate(divide="ignore"):
        ht = np.where(ok & (denom_area > 0), 1.0 / denom_area, 0.0)
    dhat = step_counts(r_grid, dsel, weights=ht)
    if correction == "hanisch":
        return (w.area / p.n) * dhat
    rho = ht.sum()
    if rho == 0:
        return np.full(len(r_grid), np.nan)
    return dhat / rho


def _isect_area(w_free: Window, w: Window, d):
    """Area of ``w_free ∩ (w ⊖ d)``; for concentric rectangles the erosion
    of the larger clipped to the smaller."""
    d = np.asarray(d, dtype=float)
    ox = (np.minimum(w_free.x_max, w.x_max - d) - np.maximum(w_free.x_min, w.x_min + d))
    oy = (np.minimum(w_free.y_max, w.y_max - d) - np.maximum(w_free.y_min, w.y_min + d))
    return np.clip(ox, 0.0, None) * np.clip(oy, 0.0, None)


def f_hat(p: PointPattern, r_grid, grid: PixelGrid,
          correction: str = "border", domain: str = "full", R: float = 0.0) -> np.ndarray:
    """Empirical empty space function from a pixel grid."""
    r_grid = check_r_grid(r_grid)
    if correction not in F_CORRECTIONS:
        raise ValueError(f"unknown F correction {correction!r}")
    if domain == "restriction":
        split = split_border(p, R)
        sub = p.subset(split.free_idx)
        return f_hat(sub, r_grid, PixelGrid(split.free_window, grid.nx, grid.ny),
                     correction, "full", 0.0)
    w = grid.window
    dfield = grid.min_distance_field(p.points).ravel()
    if correction == "raw":
        return step_counts(r_grid, dfield) / grid.n_pixels
    centers = grid.centers()
    bdist = w.boundary_distance(centers)
    num = interval_counts(r_grid, dfield, bdist)
    den = tail_counts(r_grid, bdist).astype(float)
    with np.errstate(invalid="ignore", divide="ignore"):
        out = num / den
    out[den == 0] = np.nan
    return out
