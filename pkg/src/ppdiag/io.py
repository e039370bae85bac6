"""File formats: pattern CSV with JSON sidecar, ASCII rasters, model JSON."""

from __future__ import annotations

import json
import os

import numpy as np

from .fit import FittedModel, make_quadrature
from .geometry import PixelGrid, Window
from .models import GibbsModel
from .pattern import PointPattern, split_border

__all__ = ["write_pattern", "read_pattern", "sidecar_path",
           "write_raster", "read_raster", "write_fitted", "read_fitted"]


def sidecar_path(csv_path: str) -> str:
    base, _ = os.path.splitext(csv_path)
    return base + ".json"


def write_pattern(path: str, p: PointPattern, meta: dict = None) -> None:
    """Pattern CSV (`x,y` header, full float precision) plus a JSON sidecar
    carrying the window and any provenance."""
    with open(path, "w") as fh:
        fh.write("x,y\n")
        for x, y in p.points:
            fh.write(f"{float(x)!r},{float(y)!r}\n")
    side = {"window": p.window.to_dict(), "n": p.n}
    if meta:
        side.update(meta)
    with open(sidecar_path(path), "w") as fh:
        json.dump(side, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_pattern(path: str, window: Window = None):
    """Read a pattern CSV; the window comes from the sidecar unless given.

    Returns ``(pattern, sidecar_dict)``.
    """
    meta = {}
    if window is None:
        with open(sidecar_path(path)) as fh:
            meta = json.load(fh)
        window = Window.from_dict(meta["window"])
    pts = []
    with open(path) as fh:
        header = fh.readline().strip()
        if header.split(",")[:2] != ["x", "y"]:
            raise ValueError(f"expected 'x,y' header in {path}")
        for line in fh:
            line = line.strip()
            if line:
                x, y = line.split(",")[:2]
                pts.append((float(x), float(y)))
    return PointPattern(np.asarray(pts, dtype=float).reshape(len(pts), 2),
                        window), meta


def write_raster(path: str, field: np.ndarray, grid: PixelGrid) -> None:
    """ASCII raster: ncols, nrows, cellsize, xll, yll header then row-major
    values starting from the top row."""
    field = np.asarray(field, dtype=float)
    if field.shape != (grid.ny, grid.nx):
        raise ValueError("field shape does not match the grid")
    if abs(grid.dx - grid.dy) > 1e-9 * max(grid.dx, grid.dy):
        raise ValueError("raster output needs square cells")
    with open(path, "w") as fh:
        fh.write(f"ncols {grid.nx}\n")
        fh.write(f"nrows {grid.ny}\n")
        fh.write(f"cellsize {grid.dx!r}\n")
        fh.write(f"xll {grid.window.x_min!r}\n")
        fh.write(f"yll {grid.window.y_min!r}\n")
        for row in field[::-1]:
            fh.write(" ".join(repr(float(v)) for v in row) + "\n")


def read_raster(path: str):
    """Read a raster written by :func:`write_raster`.

    Returns ``(field, grid)`` with the field in bottom-up row order.
    """
    header = {}
    rows = []
    with open(path) as fh:
        for line in fh:
            parts = line.split()
            if not parts:
                continue
            if parts[0] in ("ncols", "nrows", "cellsize", "xll", "yll"):
                header[parts[0]] = float(parts[1])
            else:
                rows.append([float(v) for v in parts])
    nx, ny = int(header["ncols"]), int(header["nrows"])
    cell = header["cellsize"]
    w = Window(header["xll"], header["xll"] + nx * cell,
               header["yll"], header["yll"] + ny * cell)
    field = np.asarray(rows, dtype=float)[::-1]
    if field.shape != (ny, nx):
        raise ValueError("raster body does not match its header")
    return field, PixelGrid(w, nx, ny)


def write_fitted(path: str, fm: FittedModel) -> None:
    with open(path, "w") as fh:
        json.dump(fm.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_fitted(path: str, pattern: PointPattern) -> FittedModel:
    """Rebuild a fitted model against its data pattern."""
    with open(path) as fh:
        d = json.load(fh)
    model = GibbsModel.from_dict(d["model"])
    mode = d.get("mode", "unconditional")
    m = d["quadrature"]["m"]
    split = None
    if mode == "conditional":
        split = split_border(pattern, model.interaction_range)
        q = make_quadrature(pattern, m, window=split.free_window,
                            data_idx=split.free_idx)
    else:
        q = make_quadrature(pattern, m)
    conv = d.get("convergence", {})
    return FittedModel(model, pattern, q, mode, split,
                       d.get("log_pseudo_likelihood", float("nan")),
                       conv.get("iterations", 0),
                       conv.get("gradient_norm", float("nan")),
                       conv.get("converged", True))
