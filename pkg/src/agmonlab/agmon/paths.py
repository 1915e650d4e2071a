"""Piecewise-linear paths: length and action functionals, minimisers, time changes."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, replace

import numpy as np
from scipy.linalg import solve_banded

from ..errors import DomainTooSmall, NoConvergence
from ..fields import GridSpec, Potential, ball_offsets, discretize
from .distance import DistanceField


@dataclass(frozen=True, eq=False)
class Geodesic:
    """Nodes γ(s_0), …, γ(s_N) with γ(0) = y and γ(1) = x."""

    nodes: np.ndarray
    s: np.ndarray
    length: float
    x: tuple
    y: tuple
    converged: bool = True
    iterations: int = 0


@dataclass(frozen=True, eq=False)
class TimedPath:
    """Nodes q(t_0), …, q(t_N) on [0, T] with q(0) = x and q(T) = 0."""

    nodes: np.ndarray
    times: np.ndarray
    T: float
    action: float

    @property
    def x(self) -> np.ndarray:
        return self.nodes[0]

    def kinetic(self) -> float:
        """∫|q̇|² dt (exact for piecewise-linear paths)."""
        return kinetic_integral(self.nodes, self.times)


@dataclass(frozen=True)
class PathOptions:
    n_interior: int = 128
    max_iter: int = 2000
    tol: float = 1e-10
    armijo: float = 1e-4
    shrink: float = 0.5
    max_backtracks: int = 40


def _as_nodes(path) -> np.ndarray:
    nodes = path.nodes if hasattr(path, "nodes") else path
    nodes = np.asarray(nodes, float)
    if nodes.ndim == 1:
        nodes = nodes[:, None]
    return nodes


def _speed(p: Potential, nodes: np.ndarray) -> np.ndarray:
    return np.sqrt(2.0 * p(nodes))


def path_length(p: Potential, path) -> float:
    """Trapezoidal 𝓛_V = Σ ½(√(2V(a)) + √(2V(b)))·|b − a| over the segments.

    Depends only on node positions, not on their parameter values.
    """
    nodes = _as_nodes(path)
    if len(nodes) < 2:
        raise ValueError("a path needs at least two nodes")
    f = _speed(p, nodes)
    seg = np.linalg.norm(np.diff(nodes, axis=0), axis=1)
    return float(np.sum(0.5 * (f[:-1] + f[1:]) * seg))


def kinetic_integral(nodes, times) -> float:
    nodes = _as_nodes(nodes)
    dt = np.diff(np.asarray(times, float))
    if dt.size == 0:
        return 0.0
    return float(np.sum(np.sum(np.diff(nodes, axis=0) ** 2, axis=1) / dt))


def action(p: Potential, q) -> float:
    """Trapezoidal 𝓐_V = ∫ ½|q̇|² + V(q) dt; the kinetic part is exact per segment."""
    nodes = _as_nodes(q)
    times = np.asarray(q.times, float)
    if len(nodes) < 2:
        return 0.0
    dt = np.diff(times)
    if np.any(dt <= 0):
        raise ValueError("path times must be strictly increasing")
    v = p(nodes)
    return float(0.5 * kinetic_integral(nodes, times) + np.sum(0.5 * (v[:-1] + v[1:]) * dt))


def make_geodesic(p: Potential, nodes, converged=True, iterations=0) -> Geodesic:
    nodes = _as_nodes(nodes)
    f = _speed(p, nodes)
    seg = np.linalg.norm(np.diff(nodes, axis=0), axis=1)
    cum = np.concatenate([[0.0], np.cumsum(0.5 * (f[:-1] + f[1:]) * seg)])
    total = cum[-1]
    s = cum / total if total > 0 else np.linspace(0.0, 1.0, len(nodes))
    return Geodesic(nodes, s, float(total), tuple(nodes[-1]), tuple(nodes[0]),
                    converged, iterations)


def straight_path(y, x, n_interior: int = 128) -> np.ndarray:
    y, x = np.atleast_1d(np.asarray(y, float)), np.atleast_1d(np.asarray(x, float))
    s = np.linspace(0.0, 1.0, n_interior + 2)[:, None]
    return y + s * (x - y)


def _respace(p: Potential, nodes: np.ndarray) -> np.ndarray:
    """Redistribute nodes at constant trapezoidal metric speed along the polyline."""
    f = _speed(p, nodes)
    seg = np.linalg.norm(np.diff(nodes, axis=0), axis=1)
    cum = np.concatenate([[0.0], np.cumsum(0.5 * (f[:-1] + f[1:]) * seg)])
    if cum[-1] <= 0:
        return nodes
    target = np.linspace(0.0, cum[-1], len(nodes))
    out = np.empty_like(nodes)
    for k in range(nodes.shape[1]):
        out[:, k] = np.interp(target, cum, nodes[:, k])
    out[0], out[-1] = nodes[0], nodes[-1]
    return out


def _length_and_grad(p: Potential, nodes: np.ndarray):
    f = _speed(p, nodes)
    grad_f = p.gradient(nodes) / f[:, None]
    e = np.diff(nodes, axis=0)
    le = np.linalg.norm(e, axis=1)
    safe = np.where(le > 0, le, 1.0)
    u = e / safe[:, None]
    w = 0.5 * (f[:-1] + f[1:])
    L = float(np.sum(w * le))
    g = np.zeros_like(nodes)
    g[:-1] += 0.5 * grad_f[:-1] * le[:, None] - w[:, None] * u
    g[1:] += 0.5 * grad_f[1:] * le[:, None] + w[:, None] * u
    # drop the tangential component: parametrisation is fixed by respacing
    t = nodes[2:] - nodes[:-2]
    tn = np.linalg.norm(t, axis=1)
    t = t / np.where(tn > 0, tn, 1.0)[:, None]
    gi = g[1:-1]
    gi = gi - np.sum(gi * t, axis=1)[:, None] * t
    return L, gi


def _precondition(g: np.ndarray) -> np.ndarray:
    """Apply the inverse of the discrete H¹ operator tridiag(−1, 2, −1)."""
    n = len(g)
    ab = np.zeros((3, n))
    ab[0, 1:] = -1.0
    ab[1, :] = 2.0
    ab[2, :-1] = -1.0
    return solve_banded((1, 1), ab, g)


def minimize_path(p: Potential, x, y=None, init=None, opts: PathOptions | None = None) -> Geodesic:
    """Local minimiser of the discrete length from y to x (γ(0)=y, γ(1)=x).

    Normal-gradient descent, H¹-preconditioned, with Armijo backtracking;
    nodes are respaced to constant metric speed after every sweep.
    Raises NoConvergence carrying the best iterate when the sweep budget runs out.
    """
    opts = opts or PathOptions()
    x = np.atleast_1d(np.asarray(x, float))
    y = np.zeros_like(x) if y is None else np.atleast_1d(np.asarray(y, float))
    if np.array_equal(x, y):
        nodes = np.repeat(x[None, :], opts.n_interior + 2, axis=0)
        return Geodesic(nodes, np.linspace(0, 1, len(nodes)), 0.0, tuple(x), tuple(y), True, 0)
    if init is None:
        nodes = straight_path(y, x, opts.n_interior)
    else:
        nodes = _as_nodes(init).copy()
        if not (np.allclose(nodes[0], y) and np.allclose(nodes[-1], x)):
            raise ValueError("initial path must run from y to x")
        nodes[0], nodes[-1] = y, x
    nodes = _respace(p, nodes)
    L, g = _length_and_grad(p, nodes)
    step = 1.0
    for it in range(1, opts.max_iter + 1):
        if nodes.shape[1] == 1 or not np.any(g):
            return make_geodesic(p, nodes, True, it)
        d = -_precondition(g)
        slope = float(np.sum(g * d))
        if slope >= 0:
            return make_geodesic(p, nodes, True, it)
        step = min(1.0, 4.0 * step)
        for _ in range(opts.max_backtracks):
            trial = nodes.copy()
            trial[1:-1] += step * d
            Lt = path_length(p, trial)
            if Lt <= L + opts.armijo * step * slope:
                break
            step *= opts.shrink
        else:
            return make_geodesic(p, nodes, True, it)
        trial = _respace(p, trial)
        Ln, g = _length_and_grad(p, trial)
        change = abs(L - Ln)
        nodes, L = trial, Ln
        if change <= opts.tol * max(1.0, L):
            return make_geodesic(p, nodes, True, it)
    best = make_geodesic(p, nodes, False, opts.max_iter)
    raise NoConvergence(f"path minimisation did not settle in {opts.max_iter} sweeps", best)


def check_clearance(path, grid: GridSpec, nodes_margin: float = 2.0) -> bool:
    """Warn and return False if any path node lies within 2h of the grid boundary."""
    nodes = _as_nodes(path)
    lo, hi, h = np.array(grid.lo), np.array(grid.hi), np.array(grid.h)
    close = np.any((nodes - lo < nodes_margin * h) | (hi - nodes < nodes_margin * h))
    if close:
        warnings.warn("geodesic passes within 2h of the grid boundary; the box may be too small",
                      RuntimeWarning, stacklevel=2)
    return not close


def jacobi_reparametrize(p: Potential, gamma: Geodesic, rho_x: float | None = None) -> TimedPath:
    """Time change of a constant-speed geodesic from 0 to x into an action path.

    τ(s) = ∫₀^s ρ/(2V(γ)) dr, T = τ(1), q(t) = γ(σ(T − t)). With ``rho_x``
    omitted the geodesic's own length is used.
    """
    nodes = gamma.nodes
    if gamma.length == 0:
        return TimedPath(nodes[-1:].copy(), np.zeros(1), 0.0, 0.0)
    rho = gamma.length if rho_x is None else float(rho_x)
    inv = rho / (2.0 * p(nodes))
    tau = np.concatenate([[0.0], np.cumsum(0.5 * (inv[:-1] + inv[1:]) * np.diff(gamma.s))])
    T = float(tau[-1])
    times = T - tau[::-1]
    times[0] = 0.0
    q = TimedPath(nodes[::-1].copy(), times, T, 0.0)
    return replace(q, action=action(p, q))


def rescale_time(p: Potential, q: TimedPath, factor: float) -> TimedPath:
    """Same geometry traversed on the horizon factor·T."""
    r = TimedPath(q.nodes, q.times * factor, q.T * factor, 0.0)
    return replace(r, action=action(p, r))


def minimize_action(p: Potential, x, opts: PathOptions | None = None, init=None):
    """Minimiser (T(x), q_x) of the action over paths from x to 0 and horizons T.

    Returns (TimedPath, Geodesic).
    """
    x = np.atleast_1d(np.asarray(x, float))
    gamma = minimize_path(p, x, np.zeros_like(x), init=init, opts=opts)
    return jacobi_reparametrize(p, gamma), gamma


def sphere_points(dimension: int, radius: float, n: int = 256) -> np.ndarray:
    if dimension == 1:
        return np.array([[-radius], [radius]])
    offs = ball_offsets(dimension, 1.0, n, n_shells=1)
    r = np.linalg.norm(offs, axis=1)
    return radius * offs[r > 0.5] / r[r > 0.5, None]


def confinement_floor(p: Potential, R0: float, grid: GridSpec | None = None) -> float:
    """a(R0) = inf_{|z| ≥ R0} V(z): exact for radial nondecreasing V, else a grid minimum."""
    if p.is_radial and p.monotone:
        return float(p.profile(np.asarray(R0, float)))
    if grid is None:
        raise ValueError("a grid is needed to bound V outside R0 for this potential")
    pts = grid.points()
    mask = np.linalg.norm(pts, axis=1) >= R0
    if not mask.any():
        raise DomainTooSmall(f"no grid nodes with |z| >= {R0}")
    return float(np.min(discretize(p, grid).values.ravel()[mask]))


def travel_time_bound(p: Potential, x, R0: float, R1: float, rho_field: DistanceField,
                      rho_x: float | None = None) -> float:
    """(1/(2a(R0)) + max_{|z|=R0} ρ(z) / (√8·R1)) · ρ(x), an upper bound on T(x)."""
    x = np.atleast_1d(np.asarray(x, float))
    if not (R1 > R0 > 0):
        raise ValueError("need R1 > R0 > 0")
    if np.linalg.norm(x) < R1 * (1 - 1e-12):
        raise ValueError("need |x| >= R1")
    grid = rho_field.grid
    if R0 < 2 * max(grid.h):
        raise DomainTooSmall(f"sphere |z| = {R0} is not resolved by spacing {max(grid.h)}")
    sph = sphere_points(grid.dimension, R0)
    vals = rho_field.interpolate(sph)
    if not np.all(np.isfinite(vals)):
        raise DomainTooSmall(f"sphere |z| = {R0} leaves the distance grid")
    if rho_x is None:
        rho_x = float(rho_field.interpolate(x[None, :])[0])
        if not math.isfinite(rho_x):
            raise DomainTooSmall("query point lies outside the distance grid")
    a = confinement_floor(p, R0, grid)
    return (1.0 / (2.0 * a) + float(np.max(vals)) / (math.sqrt(8.0) * R1)) * rho_x
