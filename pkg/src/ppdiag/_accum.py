"""Accumulation helpers for step functions on a distance grid.

Statistics here are right-continuous in r with closed-ball conventions: an
item at threshold ``a`` is counted at every grid value ``r >= a``.
"""

import numpy as np


def step_counts(r_grid, at, weights=None):
    """Sum of weights of items with ``at_k <= r``, for every grid ``r``."""
    at = np.asarray(at, dtype=float)
    n_r = len(r_grid)
    idx = np.searchsorted(r_grid, at, side="left")
    diff = np.zeros(n_r + 1)
    if weights is None:
        np.add.at(diff, idx, 1.0)
    else:
        np.add.at(diff, idx, np.asarray(weights, dtype=float))
    return np.cumsum(diff[:n_r])


def interval_counts(r_grid, lo, hi, weights=None):
    """Sum of weights of items active while ``lo_k <= r <= hi_k``."""
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    n_r = len(r_grid)
    start = np.searchsorted(r_grid, lo, side="left")
    end = np.searchsorted(r_grid, hi, side="right")
    keep = start < end
    diff = np.zeros(n_r + 1)
    if weights is None:
        np.add.at(diff, start[keep], 1.0)
        np.add.at(diff, end[keep], -1.0)
    else:
        wgt = np.asarray(weights, dtype=float)[keep]
        np.add.at(diff, start[keep], wgt)
        np.add.at(diff, end[keep], -wgt)
    return np.cumsum(diff[:n_r])


def tail_counts(r_grid, at):
    """Number of items with ``at_k >= r``, for every grid ``r``."""
    s = np.sort(np.asarray(at, dtype=float))
    return len(s) - np.searchsorted(s, r_grid, side="left")
