"""Command line interface: simulate, fit, diag, envelope, score-test.

All commands read a JSON run configuration (schema-validated, unknown keys
rejected) and honor ``--seed``, ``--out`` and ``--threads`` /
``PPDIAG_THREADS``.  Exit codes: 0 success, 2 configuration error,
3 numerical failure, 4 I/O error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import warnings

import numpy as np

from . import diagnostics as dg
from . import io as ppio
from .envelopes import EnvelopeSpec, envelope
from .fit import FitError, fit_mple
from .geometry import PixelGrid, Window
from .models import GibbsModel, interaction_from_dict
from .pattern import PointPattern
from .simulate import McmcConfig, sample_gibbs, sample_poisson
from .tables import FunctionTable, default_r_grid
from .trend import (CovariateField, GaussianKernel, UniformDiscKernel,
                    cox_score_test, smoothed_residual_field, threshold_profile)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3
EXIT_IO = 4

_WINDOW_SCHEMA = {
    "type": "object",
    "properties": {k: {"type": "number"} for k in
                   ("x_min", "x_max", "y_min", "y_max")},
    "required": ["x_min", "x_max", "y_min", "y_max"],
    "additionalProperties": False,
}

_TREND_SCHEMA = {
    "type": "object",
    "properties": {
        "monomials": {"type": "array",
                      "items": {"type": "array", "items": {"type": "integer"},
                                "minItems": 2, "maxItems": 2}},
        "log_coeff": {"type": ["array", "null"], "items": {"type": "number"}},
    },
    "required": ["monomials"],
    "additionalProperties": False,
}

_INTERACTION_SCHEMA = {
    "type": ["object", "null"],
    "properties": {
        "kind": {"enum": ["strauss", "geyer", "area", "softcore", "triplet"]},
        "r": {"type": "number"},
        "sat": {"type": "number"},
        "phi": {"type": "number"},
        "gamma": {"type": "number"},
        "cutoff": {"type": "number"},
        "sigma2": {"type": "number"},
    },
    "required": ["kind"],
    "additionalProperties": False,
}

_COVARIATE_SCHEMA = {
    "type": "object",
    "properties": {
        "monomial": {"type": "array", "items": {"type": "integer"},
                     "minItems": 2, "maxItems": 2},
        "raster": {"type": "string"},
    },
    "additionalProperties": False,
}

_DIAG_SCHEMA = {
    "type": "object",
    "properties": {
        "stat": {"enum": ["vs", "vt", "vg", "vgs", "va", "khat", "ghat",
                          "fhat", "k", "g", "f"]},
        "kind": {"enum": ["compensator", "residual", "standardized",
                          "pseudo", "standardized-pseudo"]},
        "correction": {"type": "string"},
        "sat": {"type": "number"},
        "smooth": {"type": "boolean"},
        "bandwidth": {"type": "number"},
    },
    "required": ["stat", "kind"],
    "additionalProperties": False,
}

_CONFIG_SCHEMA = {
    "type": "object",
    "properties": {
        "window": _WINDOW_SCHEMA,
        "model": {
            "type": "object",
            "properties": {"trend": _TREND_SCHEMA,
                           "interaction": _INTERACTION_SCHEMA},
            "required": ["trend"],
            "additionalProperties": False,
        },
        "fit": {
            "type": "object",
            "properties": {"m": {"type": ["integer", "null"]},
                           "mode": {"enum": ["unconditional", "conditional"]}},
            "additionalProperties": False,
        },
        "r_grid": {
            "type": "object",
            "properties": {"n": {"type": "integer", "minimum": 2},
                           "r_max": {"type": ["number", "null"]}},
            "additionalProperties": False,
        },
        "pixel_grid": {
            "type": "object",
            "properties": {"n": {"type": "integer", "minimum": 8}},
            "additionalProperties": False,
        },
        "mcmc": {
            "type": "object",
            "properties": {"n_steps": {"type": "integer", "minimum": 0},
                           "birth_prob": {"type": "number"}},
            "additionalProperties": False,
        },
        "envelope": {
            "type": "object",
            "properties": {"n_sims": {"type": "integer", "minimum": 19},
                           "lo": {"type": "number"},
                           "hi": {"type": "number"},
                           "refit": {"type": "boolean"}},
            "additionalProperties": False,
        },
        "diagnostics": {"type": "array", "items": _DIAG_SCHEMA},
        "score_test": {
            "type": "object",
            "properties": {
                "kind": {"enum": ["cox", "threshold", "hotspot"]},
                "covariate": _COVARIATE_SCHEMA,
                "z_grid": {"type": "object",
                           "properties": {"n": {"type": "integer"},
                                          "lo": {"type": "number"},
                                          "hi": {"type": "number"}},
                           "additionalProperties": False},
                "kernel": {"type": "object",
                           "properties": {"kind": {"enum": ["gaussian", "disc"]},
                                          "sigma": {"type": "number"},
                                          "h": {"type": "number"}},
                           "required": ["kind"],
                           "additionalProperties": False},
                "out_grid": {"type": "object",
                             "properties": {"n": {"type": "integer"}},
                             "additionalProperties": False},
            },
            "required": ["kind"],
            "additionalProperties": False,
        },
        "seed": {"type": "integer"},
    },
    "additionalProperties": False,
}


class ConfigError(ValueError):
    pass


def load_config(path: str) -> dict:
    import jsonschema
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except json.JSONDecodeError as e:
        raise ConfigError(f"invalid JSON in {path}: {e}") from e
    try:
        jsonschema.validate(cfg, _CONFIG_SCHEMA)
    except jsonschema.ValidationError as e:
        raise ConfigError(f"configuration error: {e.message}") from e
    return cfg


def _window(cfg) -> Window:
    if "window" not in cfg:
        raise ConfigError("a window section is required")
    return Window.from_dict(cfg["window"])


def _model(cfg) -> GibbsModel:
    if "model" not in cfg:
        raise ConfigError("a model section is required")
    return GibbsModel.from_dict(cfg["model"])


def _r_grid(cfg, window):
    rg = cfg.get("r_grid", {})
    return default_r_grid(window, rg.get("n", 513), rg.get("r_max"))


def _pixel_grid(cfg, window) -> PixelGrid:
    n = cfg.get("pixel_grid", {}).get("n", 256)
    return PixelGrid(window, n)


def _seed(cfg, args) -> int:
    if args.seed is not None:
        return args.seed
    return cfg.get("seed", 0)


def _threads(args) -> int:
    if args.threads is not None:
        return args.threads
    return int(os.environ.get("PPDIAG_THREADS", "1"))


def _outdir(args) -> str:
    out = args.out or "."
    os.makedirs(out, exist_ok=True)
    return out


def _covariate(spec: dict, name="Z") -> CovariateField:
    if "monomial" in spec:
        i, j = spec["monomial"]
        return CovariateField(fn=lambda x, y: x ** i * y ** j,
                              name=f"x^{i}y^{j}")
    if "raster" in spec:
        field, grid = ppio.read_raster(spec["raster"])
        return CovariateField(raster=field, window=grid.window, name=name)
    raise ConfigError("covariate needs 'monomial' or 'raster'")


def cmd_simulate(args) -> int:
    cfg = load_config(args.config)
    w = _window(cfg)
    model = _model(cfg)
    seed = _seed(cfg, args)
    if model.trend.beta is None:
        raise ConfigError("simulation needs trend coefficients (log_coeff)")
    if model.is_poisson:
        pat = sample_poisson(model.trend, w, seed)
    else:
        mc = cfg.get("mcmc", {})
        mcfg = McmcConfig(mc.get("n_steps", 100_000),
                          mc.get("birth_prob", 0.5), seed)
        pat = sample_gibbs(model, w, mcfg, grid=_pixel_grid(cfg, w))
    out = os.path.join(_outdir(args), "pattern.csv")
    ppio.write_pattern(out, pat, {"seed": seed, "model": model.to_dict()})
    print(f"wrote {pat.n} points to {out}")
    return EXIT_OK


def cmd_fit(args) -> int:
    cfg = load_config(args.config)
    pat, _ = ppio.read_pattern(args.pattern)
    model = _model(cfg)
    fit_cfg = cfg.get("fit", {})
    fm = fit_mple(pat, model, mode=fit_cfg.get("mode", "unconditional"),
                  m=fit_cfg.get("m"),
                  grid=_pixel_grid(cfg, pat.window))
    out = os.path.join(_outdir(args), "fitted.json")
    ppio.write_fitted(out, fm)
    conv = fm.to_dict()["convergence"]
    print(f"fitted in {conv['iterations']} iterations, "
          f"gradient norm {conv['gradient_norm']:.3e}, "
          f"log pseudo-likelihood {fm.log_pl:.6g}")
    names = fm.model.trend.names
    for nm, b in zip(names, fm.beta):
        print(f"  beta[{nm}] = {b:.6g}")
    if fm.phi is not None:
        print(f"  phi = {fm.phi:.6g} (gamma = {np.exp(fm.phi):.6g})")
    print(f"wrote {out}")
    return EXIT_OK


def _diag_columns(entry: dict, fm, pat, r_grid, pix) -> FunctionTable:
    stat = dg.stat_by_name(entry["stat"], correction=entry.get("correction")
                           or _default_corr(entry["stat"]),
                           sat=entry.get("sat", 1.0))
    kind = entry["kind"]
    t = FunctionTable(r_grid, meta={"stat": stat.name, "kind": kind})
    ctxkw = dict(pixel_grid=pix)
    if kind in ("compensator", "residual", "standardized"):
        emp = stat.totals(dg._resolve(fm, None, None, None, pix), r_grid)
        comp = dg.compensator(stat, fm, r_grid=r_grid, **ctxkw)
        t["emp"] = emp
        t["comp"] = comp
        if kind != "compensator":
            t["res"] = emp - comp
        if kind == "standardized":
            var = dg.poincare_variance(stat, fm, r_grid=r_grid, **ctxkw)
            t["var"] = var
            t["stdres"] = dg.standardized(emp - comp, var)
    else:
        psum = dg.pseudo_sum(stat, fm, r_grid, pixel_grid=pix)
        pcom = dg.pseudo_compensator(stat, fm, r_grid=r_grid, **ctxkw)
        t["psum"] = psum
        t["pcomp"] = pcom
        t["pres"] = psum - pcom
        if kind == "standardized-pseudo":
            var = dg.poincare_variance(stat, fm, r_grid=r_grid,
                                       flavor="pseudo", **ctxkw)
            t["pvar"] = var
            t["stdres"] = dg.standardized(psum - pcom, var)
    if entry.get("smooth"):
        target = "stdres" if "stdres" in t else ("pres" if "pres" in t else "res")
        if target in t:
            t["smoothed"] = dg.smooth(t[target], r_grid,
                                      entry.get("bandwidth"))
    return t


def _default_corr(stat_name: str) -> str:
    return {"khat": "translation", "k": "translation",
            "ghat": "hanisch", "g": "hanisch",
            "fhat": "border", "f": "border"}.get(stat_name, "translation")


def cmd_diag(args) -> int:
    cfg = load_config(args.config)
    pat, _ = ppio.read_pattern(args.pattern)
    entries = cfg.get("diagnostics", [])
    if not entries:
        print("no diagnostics requested")
        return EXIT_OK
    w = pat.window
    r_grid = _r_grid(cfg, w)
    if r_grid[-1] > w.shortest_side / 4 + 1e-12:
        warnings.warn("r grid reaches beyond a quarter of the window side; "
                      "edge corrections become unstable", RuntimeWarning)
    pix = _pixel_grid(cfg, w)
    out = _outdir(args)
    for fitted_path in args.fitted:
        fm = ppio.read_fitted(fitted_path, pat)
        tag = os.path.splitext(os.path.basename(fitted_path))[0]
        for entry in entries:
            t = _diag_columns(entry, fm, pat, r_grid, pix)
            name = f"{entry['stat']}_{entry['kind']}_{tag}.csv"
            t.to_csv(os.path.join(out, name))
            print(f"wrote {os.path.join(out, name)}")
    return EXIT_OK


def cmd_envelope(args) -> int:
    cfg = load_config(args.config)
    pat, _ = ppio.read_pattern(args.pattern)
    entries = cfg.get("diagnostics", [])
    if not entries:
        raise ConfigError("envelope needs a diagnostics entry")
    entry = entries[0]
    w = pat.window
    r_grid = _r_grid(cfg, w)
    pix = _pixel_grid(cfg, w)
    model = _model(cfg)
    fit_cfg = cfg.get("fit", {})
    mode = fit_cfg.get("mode", "unconditional")
    m = fit_cfg.get("m")
    fm0 = fit_mple(pat, model, mode=mode, m=m, grid=pix)
    env_cfg = cfg.get("envelope", {})
    spec = EnvelopeSpec(env_cfg.get("n_sims", 1000),
                        env_cfg.get("lo", 0.025), env_cfg.get("hi", 0.975),
                        env_cfg.get("refit", True), _seed(cfg, args),
                        _threads(args),
                        McmcConfig(cfg.get("mcmc", {}).get("n_steps", 100_000),
                                   cfg.get("mcmc", {}).get("birth_prob", 0.5)))

    def diag_fn(pattern, fitted):
        return _diag_columns(entry, fitted, pattern, r_grid, pix)[_env_col(entry)]

    def refit_fn(pattern):
        return fit_mple(pattern, model, mode=mode, m=m, grid=pix)

    table = envelope(diag_fn, fm0.model, w, r_grid, spec, refit_fn=refit_fn,
                     data_pattern=pat, data_model=fm0)
    out = os.path.join(_outdir(args),
                       f"envelope_{entry['stat']}_{entry['kind']}.csv")
    table.to_csv(out)
    print(f"wrote {out} ({table.meta['n_sims']} replicates, "
          f"{table.meta['dropped']} dropped)")
    return EXIT_OK


def _env_col(entry) -> str:
    kind = entry["kind"]
    return {"compensator": "comp", "residual": "res",
            "standardized": "stdres", "pseudo": "pres",
            "standardized-pseudo": "stdres"}[kind]


def cmd_score_test(args) -> int:
    cfg = load_config(args.config)
    pat, _ = ppio.read_pattern(args.pattern)
    st = cfg.get("score_test")
    if st is None:
        raise ConfigError("a score_test section is required")
    out = _outdir(args)
    kind = st["kind"]
    if kind == "cox":
        Z = _covariate(st.get("covariate", {"monomial": [1, 0]}))
        T, S = cox_score_test(pat, Z)
        res = {"T": T, "S": S, "n": pat.n}
        path = os.path.join(out, "score_cox.json")
        with open(path, "w") as fh:
            json.dump(res, fh, indent=2)
            fh.write("\n")
        print(f"T = {T:.4f} (S = {S:.6g}); wrote {path}")
        return EXIT_OK
    if kind == "threshold":
        Z = _covariate(st.get("covariate", {"monomial": [1, 0]}))
        zg = st.get("z_grid", {})
        zvals = Z.at_points(pat.points)
        lo = zg.get("lo", float(np.min(zvals)) if pat.n else 0.0)
        hi = zg.get("hi", float(np.max(zvals)) if pat.n else 1.0)
        z_grid = np.linspace(lo, hi, zg.get("n", 101))
        fm = None
        if "model" in cfg:
            fit_cfg = cfg.get("fit", {})
            fm = fit_mple(pat, _model(cfg), mode=fit_cfg.get("mode", "unconditional"),
                          m=fit_cfg.get("m"), grid=_pixel_grid(cfg, pat.window))
        t = threshold_profile(pat, fm, Z, z_grid)
        path = os.path.join(out, "score_threshold.csv")
        t.to_csv(path)
        print(f"wrote {path}")
        return EXIT_OK
    # hotspot
    kspec = st.get("kernel", {"kind": "gaussian", "sigma": 0.05})
    if kspec["kind"] == "gaussian":
        kern = GaussianKernel(kspec.get("sigma", 0.05))
    else:
        kern = UniformDiscKernel(kspec.get("h", 0.05))
    n_out = st.get("out_grid", {}).get("n", 64)
    fm = None
    if "model" in cfg:
        fit_cfg = cfg.get("fit", {})
        fm = fit_mple(pat, _model(cfg), mode=fit_cfg.get("mode", "unconditional"),
                      m=fit_cfg.get("m"), grid=_pixel_grid(cfg, pat.window))
    rf = smoothed_residual_field(pat, fm, kern, PixelGrid(pat.window, n_out))
    ppio.write_raster(os.path.join(out, "residual_field.asc"), rf.field, rf.grid)
    ppio.write_raster(os.path.join(out, "residual_tfield.asc"), rf.t_field,
                      rf.grid)
    with open(os.path.join(out, "score_hotspot.json"), "w") as fh:
        json.dump({"max_t": rf.max_t}, fh, indent=2)
        fh.write("\n")
    print(f"max T = {rf.max_t:.4f}; wrote rasters to {out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="ppdiag",
                                 description="spatial point process "
                                             "diagnostics")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, pattern=False, fitted=False):
        if pattern:
            p.add_argument("pattern", help="pattern CSV (with JSON sidecar)")
        if fitted:
            p.add_argument("fitted", nargs="+", help="fitted model JSON files")
        p.add_argument("--config", required=True, help="run configuration JSON")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument("--threads", type=int, default=None,
                       help="worker count (default: PPDIAG_THREADS or 1)")

    common(sub.add_parser("simulate", help="draw a pattern from a model"))
    common(sub.add_parser("fit", help="maximum pseudo-likelihood fit"),
           pattern=True)
    common(sub.add_parser("diag", help="diagnostic function tables"),
           pattern=True, fitted=True)
    common(sub.add_parser("envelope", help="Monte Carlo envelope"),
           pattern=True)
    common(sub.add_parser("score-test", help="first order score tests"),
           pattern=True)
    return ap


_HANDLERS = {
    "simulate": cmd_simulate,
    "fit": cmd_fit,
    "diag": cmd_diag,
    "envelope": cmd_envelope,
    "score-test": cmd_score_test,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _HANDLERS[args.command](args)
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as e:
        print(f"i/o error: {e}", file=sys.stderr)
        return EXIT_IO
    except (FitError, ValueError, ArithmeticError, RuntimeError) as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
