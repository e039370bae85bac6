"""Monte Carlo envelopes: pointwise quantile bands under a null model."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from joblib import Parallel, delayed

from .geometry import Window
from .models import GibbsModel
from .simulate import McmcConfig, sample_gibbs, sample_poisson
from .tables import FunctionTable

__all__ = ["EnvelopeSpec", "envelope"]


@dataclass(frozen=True)
class EnvelopeSpec:
    """Envelope settings: replicate count, quantile pair, refitting, seed."""

    n_sims: int = 1000
    lo: float = 0.025
    hi: float = 0.975
    refit: bool = False
    seed: int = 0
    n_jobs: int = 1
    mcmc: McmcConfig = None

    def __post_init__(self):
        if not 0.0 < self.lo < self.hi < 1.0:
            raise ValueError("need 0 < lo < hi < 1")
        if self.n_sims < 19:
            raise ValueError("at least 19 simulations are required")


def _simulate(null_model: GibbsModel, window: Window, spec: EnvelopeSpec, child):
    if null_model.is_poisson:
        return sample_poisson(null_model.trend, window, child)
    base = spec.mcmc if spec.mcmc is not None else McmcConfig()
    cfg = McmcConfig(base.n_steps, base.birth_prob,
                     int(child.generate_state(1)[0]), base.max_points)
    return sample_gibbs(null_model, window, cfg)


def _one_replicate(diagnostic, null_model, window, spec, refit_fn, child):
    pat = _simulate(null_model, window, spec, child)
    model = refit_fn(pat) if (spec.refit and refit_fn is not None) else null_model
    return np.asarray(diagnostic(pat, model), dtype=float)


def envelope(diagnostic, null_model: GibbsModel, window: Window, r_grid,
             spec: EnvelopeSpec, refit_fn=None, data_pattern=None,
             data_model=None) -> FunctionTable:
    """Pointwise Monte Carlo envelope of a functional diagnostic.

    ``diagnostic(pattern, model) -> column`` is evaluated on ``n_sims``
    simulated patterns; with ``spec.refit`` the model handed to the
    diagnostic is ``refit_fn(pattern)`` instead of the null.  Quantiles are
    order statistics at ranks ``ceil(q n)``.  Failing replicates are
    dropped and counted; more than 5% drops is an error.
    """
    r_grid = np.asarray(r_grid, dtype=float)
    children = np.random.SeedSequence(spec.seed).spawn(spec.n_sims)
    if spec.n_jobs == 1:
        rows = []
        for child in children:
            try:
                rows.append(_one_replicate(diagnostic, null_model, window,
                                           spec, refit_fn, child))
            except Exception as e:  # noqa: BLE001 - replicate accounting
                rows.append(e)
    else:
        def guarded(child):
            try:
                return _one_replicate(diagnostic, null_model, window, spec,
                                      refit_fn, child)
            except Exception as e:  # noqa: BLE001
                return e
        rows = list(Parallel(n_jobs=spec.n_jobs)(
            delayed(guarded)(c) for c in children))
    good = [r for r in rows if isinstance(r, np.ndarray)]
    n_drop = spec.n_sims - len(good)
    if n_drop > 0.05 * spec.n_sims:
        raise RuntimeError(f"{n_drop}/{spec.n_sims} replicates failed; "
                           f"first error: {next(r for r in rows if not isinstance(r, np.ndarray))}")
    if n_drop:
        warnings.warn(f"dropped {n_drop} failing replicates", RuntimeWarning)
    sims = np.vstack(good)
    n_kept = sims.shape[0]
    srt = np.sort(sims, axis=0)  # NaNs sort to the end
    valid = (~np.isnan(sims)).sum(axis=0)
    cols = np.arange(sims.shape[1])
    lo_col = np.full(sims.shape[1], np.nan)
    hi_col = np.full(sims.shape[1], np.nan)
    ok = valid > 0
    lo_idx = np.maximum(np.ceil(spec.lo * valid[ok]).astype(int) - 1, 0)
    hi_idx = np.maximum(np.ceil(spec.hi * valid[ok]).astype(int) - 1, 0)
    lo_col[ok] = srt[lo_idx, cols[ok]]
    hi_col[ok] = srt[hi_idx, cols[ok]]
    table = FunctionTable(r_grid, meta={"n_sims": n_kept, "dropped": n_drop,
                                        "lo": spec.lo, "hi": spec.hi})
    if data_pattern is not None:
        table["data"] = np.asarray(diagnostic(data_pattern, data_model
                                              if data_model is not None
                                              else null_model), dtype=float)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        table["mean"] = np.nanmean(sims, axis=0)
    table["lo"] = lo_col
    table["hi"] = hi_col
    return table
