"""Agmon distance fields on grids: fast marching and a graph oracle."""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np

from ..errors import GridTooCoarse
from ..fields import GridSpec, ScalarField
from . import _kernels

FAST_MARCHING = "fast-marching"
DIJKSTRA = "dijkstra-oracle"

# nodes within this many grid spacings of the source are initialised exactly
DEFAULT_INIT_NODES = 10
_INIT_SUBSTEPS = 16


@dataclass(frozen=True, eq=False)
class DistanceField:
    """Gridded Agmon distance to ``source``."""

    field: ScalarField
    source: tuple
    solver: str
    potential: str = ""
    thickened: bool = False
    init_radius: float = 0.0

    @property
    def grid(self) -> GridSpec:
        return self.field.grid

    @property
    def values(self) -> np.ndarray:
        return self.field.values

    def at(self, x) -> float:
        return self.field.at(x)

    def interpolate(self, points) -> np.ndarray:
        return self.field.interpolate(points)

    def header(self) -> dict:
        g = self.grid
        return {
            "dims": list(g.shape),
            "h": list(g.h),
            "box": {"lo": list(g.lo), "hi": list(g.hi)},
            "source": list(self.source),
            "solver": self.solver,
            "potential": self.potential,
            "thickened": self.thickened,
            "dtype": "<f8",
            "order": "C",
        }

    def to_csv(self, path) -> None:
        pts = self.grid.points()
        d = self.grid.dimension
        cols = [f"x{k}" for k in range(d)] + ["rho"]
        data = np.column_stack([pts, self.values.ravel()])
        np.savetxt(path, data, fmt="%.17g", delimiter=",", header=",".join(cols), comments="")

    def to_binary(self, path) -> None:
        """One JSON header line, then the values as little-endian float64, row-major."""
        with open(path, "wb") as fh:
            fh.write(json.dumps(self.header(), sort_keys=True).encode() + b"\n")
            fh.write(np.ascontiguousarray(self.values, dtype="<f8").tobytes())


def read_binary(path) -> DistanceField:
    raw = Path(path).read_bytes()
    cut = raw.index(b"\n")
    head = json.loads(raw[:cut])
    grid = GridSpec(tuple(head["box"]["lo"]), tuple(head["box"]["hi"]), tuple(head["h"]))
    vals = np.frombuffer(raw[cut + 1:], dtype="<f8").reshape(head["dims"])
    return DistanceField(ScalarField(grid, vals.copy()), tuple(head["source"]), head["solver"],
                         head.get("potential", ""), head.get("thickened", False))


def _snap(grid: GridSpec, source) -> tuple:
    if source is None:
        source = np.zeros(grid.dimension)
    idx = grid.nearest_index(source)
    return idx, tuple(float(c) for c in grid.node(idx))


def _segment_lengths(v: ScalarField, src: np.ndarray, pts: np.ndarray) -> np.ndarray:
    """Trapezoidal ∫√(2V) along straight segments src → pts (V interpolated)."""
    s = np.linspace(0.0, 1.0, _INIT_SUBSTEPS + 1)
    w = np.full(s.size, 1.0 / _INIT_SUBSTEPS)
    w[[0, -1]] *= 0.5
    samples = src[None, None, :] + s[None, :, None] * (pts - src)[:, None, :]
    vals = v.interpolate(samples)
    return np.sqrt(2.0 * vals) @ w * np.linalg.norm(pts - src, axis=1)


def solve_eikonal(v: ScalarField, source=None, *, init_radius: float | None = None,
                  potential: str = "", thickened: bool = False) -> DistanceField:
    """Fast-marching solution of |∇ρ|² = 2V with ρ(source) = 0.

    The source is snapped to the nearest node. Nodes within ``init_radius``
    (default 10 grid spacings) take the straight-segment length from the
    source; the front is marched outward from that ball.
    """
    grid = v.grid
    vals = v.values.ravel()
    if np.any(vals < 1.0 - 1e-12):
        raise ValueError("eikonal solver needs V >= 1 on the grid")
    idx, src = _snap(grid, source)
    if init_radius is None:
        init_radius = DEFAULT_INIT_NODES * max(grid.h)
    pts = grid.points()
    dist = np.linalg.norm(pts - np.asarray(src), axis=1)
    fixed = dist <= init_radius * (1 + 1e-12)
    init = np.zeros(grid.size)
    sel = np.flatnonzero(fixed & (dist > 0))
    if sel.size:
        init[sel] = _segment_lengths(v, np.asarray(src), pts[sel])
    f = np.sqrt(2.0 * vals)
    u, status, accepted = _kernels.fast_march(
        f, np.array(grid.shape, np.int64), np.array(grid.h), init, fixed)
    if status != _kernels.FMM_OK:
        raise GridTooCoarse("fast marching accepted a value below the current front")
    return DistanceField(ScalarField(grid, u), src, FAST_MARCHING, potential, thickened,
                         float(init_radius))


@lru_cache(maxsize=None)
def stencil(radius: int, dimension: int):
    """Primitive lattice offsets with max-norm ≤ radius and their midpoint corners."""
    offs = [o for o in itertools.product(range(-radius, radius + 1), repeat=dimension)
            if any(o) and math.gcd(*(abs(c) for c in o)) == 1]
    offs = np.array(offs, np.int64)
    corners = np.zeros((len(offs), 2**dimension, dimension), np.int64)
    ncorn = np.zeros(len(offs), np.int64)
    for e, o in enumerate(offs):
        choices = [[c // 2] if c % 2 == 0 else [(c - 1) // 2, (c + 1) // 2] for c in o]
        cs = list(itertools.product(*choices))
        ncorn[e] = len(cs)
        corners[e, :len(cs)] = cs
    return offs, corners, ncorn


def default_stencil_radius(dimension: int) -> int:
    return {1: 1, 2: 3, 3: 3}[dimension]


def dijkstra_oracle(v: ScalarField, source=None, *, stencil_radius: int | None = None,
                    potential: str = "", thickened: bool = False) -> DistanceField:
    """Shortest paths on the grid graph with long-range primitive edges.

    With ``stencil_radius=1`` this is the 3^d − 1 neighbour graph.
    """
    grid = v.grid
    if stencil_radius is None:
        stencil_radius = default_stencil_radius(grid.dimension)
    idx, src = _snap(grid, source)
    offs, corners, ncorn = stencil(int(stencil_radius), grid.dimension)
    flat_src = int(np.ravel_multi_index(idx, grid.shape))
    u = _kernels.stencil_dijkstra(v.values.ravel().astype(float), np.array(grid.shape, np.int64),
                                  np.array(grid.h), flat_src, offs, corners, ncorn)
    return DistanceField(ScalarField(grid, u), src, DIJKSTRA, potential, thickened)


# ---------------------------------------------------------------------------
# diagnostics


def oracle_gap(a: DistanceField, b: DistanceField, exclude_radius: float = 0.0) -> dict:
    """Gap between two fields on the same grid, relative to ``b``.

    ``pointwise`` is max |a−b|/b over nodes with b > 0 outside
    ``exclude_radius``; ``maxnorm`` is ‖a−b‖∞ / ‖b‖∞ over the same nodes.
    """
    if a.grid != b.grid:
        raise ValueError("fields live on different grids")
    av, bv = a.values.ravel(), b.values.ravel()
    r = np.linalg.norm(a.grid.points() - np.asarray(b.source), axis=1)
    m = (bv > 0) & (r > exclude_radius)
    diff = np.abs(av[m] - bv[m])
    return {"pointwise": float(np.max(diff / bv[m])),
            "maxnorm": float(np.max(diff) / np.max(np.abs(bv[m]))),
            "nodes": int(m.sum())}


def _upwind_gradient_sq(u: np.ndarray, h) -> np.ndarray:
    """Godunov upwind |∇u|² at interior nodes (boundary entries are nan)."""
    g2 = np.zeros_like(u)
    inner = np.ones(u.shape, bool)
    for k in range(u.ndim):
        fwd = np.full(u.shape, -np.inf)
        bwd = np.full(u.shape, -np.inf)
        sl = [slice(None)] * u.ndim
        sl_a, sl_b = list(sl), list(sl)
        sl_a[k], sl_b[k] = slice(1, None), slice(None, -1)
        bwd[tuple(sl_a)] = u[tuple(sl_a)] - u[tuple(sl_b)]
        fwd[tuple(sl_b)] = u[tuple(sl_b)] - u[tuple(sl_a)]
        dk = np.maximum(np.maximum(bwd, fwd), 0.0) / h[k]
        g2 += dk**2
        edge = [slice(None)] * u.ndim
        edge[k] = 0
        inner[tuple(edge)] = False
        edge[k] = -1
        inner[tuple(edge)] = False
    return np.where(inner, g2, np.nan)


def eikonal_residual(rho: DistanceField, v: ScalarField, exclude_radius: float | None = None):
    """Relative residual | |∇ρ|² − 2V | / 2V at interior nodes away from the source.

    Nodes within ``exclude_radius`` (default: the solver's initialisation
    radius plus one spacing, at least 2h) of the source are skipped.
    """
    if exclude_radius is None:
        exclude_radius = max(rho.init_radius, max(rho.grid.h)) + max(rho.grid.h)
    g2 = _upwind_gradient_sq(rho.values, rho.grid.h).ravel()
    two_v = 2.0 * v.values.ravel()
    r = np.linalg.norm(rho.grid.points() - np.asarray(rho.source), axis=1)
    m = np.isfinite(g2) & (r > exclude_radius)
    return np.abs(g2[m] - two_v[m]) / two_v[m]


def lower_bound_violation(rho: DistanceField, v: ScalarField) -> float:
    """max over nodes of √2|x − s| − 2h·√(2V) − ρ(x); ≤ 0 when the bound holds."""
    x = rho.grid.points()
    r = np.linalg.norm(x - np.asarray(rho.source), axis=1)
    slack = 2 * max(rho.grid.h) * np.sqrt(2 * v.values.ravel())
    return float(np.max(math.sqrt(2) * r - slack - rho.values.ravel()))


def lipschitz_excess(rho: DistanceField, v: ScalarField) -> float:
    """max over axis-adjacent pairs of |Δρ| − max(√(2V)) · h, relative to h."""
    u = rho.values
    f = np.sqrt(2 * v.values)
    worst = -np.inf
    for k in range(u.ndim):
        a = [slice(None)] * u.ndim
        b = [slice(None)] * u.ndim
        a[k], b[k] = slice(1, None), slice(None, -1)
        du = np.abs(u[tuple(a)] - u[tuple(b)])
        bound = np.maximum(f[tuple(a)], f[tuple(b)]) * rho.grid.h[k]
        worst = max(worst, float(np.max((du - bound) / rho.grid.h[k])))
    return worst
