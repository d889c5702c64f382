"""Terrain height fields: analytic built-ins and bilinear height grids."""

from __future__ import annotations

import math
from pathlib import Path

import numpy as np

from .errors import ConfigError, DecodeError


class Terrain:
    name = "terrain"

    def height(self, x: float, z: float) -> float:
        raise NotImplementedError

    def heights(self, points2d: np.ndarray) -> np.ndarray:
        pts = np.asarray(points2d, dtype=np.float64)
        return np.array([self.height(float(p[0]), float(p[1])) for p in pts])


class AnalyticTerrain(Terrain):
    def __init__(self, name: str, fn):
        self.name = name
        self._fn = fn

    def height(self, x: float, z: float) -> float:
        return float(self._fn(x, z))


class GridTerrain(Terrain):
    """Regular height grid with bilinear interpolation, clamped at edges."""

    def __init__(self, origin, cell: float, grid: np.ndarray, name: str = "grid"):
        grid = np.asarray(grid, dtype=np.float64)
        if grid.ndim != 2 or cell <= 0:
            raise ConfigError("grid terrain needs a 2-D grid and positive cell size")
        self.origin = (float(origin[0]), float(origin[1]))
        self.cell = float(cell)
        self.grid = grid  # indexed [iz, ix]
        self.name = name

    def height(self, x: float, z: float) -> float:
        nx = self.grid.shape[1]
        nz = self.grid.shape[0]
        fx = (x - self.origin[0]) / self.cell
        fz = (z - self.origin[1]) / self.cell
        fx = min(max(fx, 0.0), nx - 1.0)
        fz = min(max(fz, 0.0), nz - 1.0)
        ix, iz = int(fx), int(fz)
        ix1, iz1 = min(ix + 1, nx - 1), min(iz + 1, nz - 1)
        tx, tz = fx - ix, fz - iz
        h00 = self.grid[iz, ix]
        h10 = self.grid[iz, ix1]
        h01 = self.grid[iz1, ix]
        h11 = self.grid[iz1, ix1]
        return float(
            (1 - tz) * ((1 - tx) * h00 + tx * h10) + tz * ((1 - tx) * h01 + tx * h11)
        )


def _smoothstep(e0: float, e1: float, t: float) -> float:
    u = min(max((t - e0) / (e1 - e0), 0.0), 1.0)
    return u * u * (3.0 - 2.0 * u)


def _pulse(t: float) -> float:
    t -= math.floor(t)
    return _smoothstep(0.30, 0.42, t) * (1.0 - _smoothstep(0.58, 0.70, t))


def _rocky(x: float, z: float) -> float:
    return (
        0.06 * math.sin(1.7 * x) * math.cos(1.3 * z)
        + 0.04 * math.sin(3.1 * x + 0.7) * math.sin(2.3 * z + 1.9)
        + 0.02 * math.cos(5.3 * x - 1.1) * math.cos(4.1 * z)
    )


def _obstacles(x: float, z: float) -> float:
    return 0.35 * _pulse(x / 3.0) * _pulse(z / 3.0)


BUILTIN_TERRAINS = {
    "flat": lambda: AnalyticTerrain("flat", lambda x, z: 0.0),
    "rocky": lambda: AnalyticTerrain("rocky", _rocky),
    "obstacles": lambda: AnalyticTerrain("obstacles", _obstacles),
    # the ceiling scene constrains the character through a forced crouch
    # gait; its floor is flat
    "ceiling": lambda: AnalyticTerrain("ceiling", lambda x, z: 0.0),
}


def save_grid_terrain(path, terrain: GridTerrain) -> None:
    with open(path, "w") as fh:
        fh.write("strider-terrain v1\n")
        fh.write(f"origin {terrain.origin[0]!r} {terrain.origin[1]!r}\n")
        fh.write(f"cell {terrain.cell!r}\n")
        fh.write(f"dims {terrain.grid.shape[1]} {terrain.grid.shape[0]}\n")
        for row in terrain.grid:
            fh.write(" ".join(repr(float(v)) for v in row) + "\n")


def load_grid_terrain(path) -> GridTerrain:
    with open(path) as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    if not lines or lines[0] != "strider-terrain v1":
        raise DecodeError(f"{path}: not a strider terrain file")
    header = {}
    for ln in lines[1:4]:
        key, *vals = ln.split()
        header[key] = vals
    try:
        origin = (float(header["origin"][0]), float(header["origin"][1]))
        cell = float(header["cell"][0])
        nx, nz = int(header["dims"][0]), int(header["dims"][1])
    except (KeyError, IndexError, ValueError) as exc:
        raise DecodeError(f"{path}: bad terrain header: {exc}") from exc
    rows = [[float(v) for v in ln.split()] for ln in lines[4 : 4 + nz]]
    grid = np.array(rows)
    if grid.shape != (nz, nx):
        raise DecodeError(f"{path}: grid shape {grid.shape} != dims ({nz}, {nx})")
    return GridTerrain(origin, cell, grid, name=Path(path).stem)


def load_terrain(ref: str) -> Terrain:
    """Resolve a terrain reference: a built-in name or a grid-file path."""
    if ref in BUILTIN_TERRAINS:
        return BUILTIN_TERRAINS[ref]()
    if Path(ref).exists():
        return load_grid_terrain(ref)
    raise ConfigError(f"unknown terrain {ref!r} (builtins: {sorted(BUILTIN_TERRAINS)})")
