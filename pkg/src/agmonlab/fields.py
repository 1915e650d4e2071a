"""Potentials, the ball-supremum transform and gridded scalar fields."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from .errors import EnvelopeViolation, PotentialBelowOne

# relative slack for the V >= 1 and envelope checks (round-off only)
_CHECK_RTOL = 1e-12
_GOLDEN = (1.0 + math.sqrt(5.0)) / 2.0


@dataclass(frozen=True)
class Envelope:
    """Polynomial envelope a²/2·|x|^{2n} − b ≤ V(x) ≤ A²/2·|x|^{2m} + B."""

    a: float
    b: float
    A: float
    B: float
    n: float
    m: float

    def __post_init__(self):
        if not (self.m >= self.n > 0):
            raise ValueError(f"envelope needs m >= n > 0, got n={self.n}, m={self.m}")
        if self.a <= 0 or self.A <= 0:
            raise ValueError("envelope needs a, A > 0")
        if self.b < 0 or self.B < 0:
            raise ValueError("envelope needs b, B >= 0")

    def lower(self, r):
        return 0.5 * self.a**2 * np.asarray(r, float) ** (2 * self.n) - self.b

    def upper(self, r):
        return 0.5 * self.A**2 * np.asarray(r, float) ** (2 * self.m) + self.B

    def decay_rates(self, r):
        """Return the (lower, upper) rate functions a/(n+1)|x|^{n+1}, A/(m+1)|x|^{m+1}."""
        r = np.asarray(r, float)
        return (self.a / (self.n + 1) * r ** (self.n + 1),
                self.A / (self.m + 1) * r ** (self.m + 1))


@dataclass(frozen=True, eq=False)
class Potential:
    """A continuous potential V ≥ 1 on R^d.

    ``func`` maps an array of shape (..., d) to shape (...). ``grad`` is
    optional; without it gradients are taken by central differences.
    For radial potentials ``profile`` gives V as a function of |x|, and
    ``monotone`` declares that profile nondecreasing.
    """

    name: str
    dimension: int
    func: Callable[[np.ndarray], np.ndarray]
    grad: Optional[Callable[[np.ndarray], np.ndarray]] = None
    is_radial: bool = False
    profile: Optional[Callable[[np.ndarray], np.ndarray]] = None
    monotone: bool = False
    envelope: Optional[Envelope] = None
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.dimension not in (1, 2, 3):
            raise ValueError(f"dimension must be 1, 2 or 3, got {self.dimension}")
        if self.is_radial and self.profile is None:
            raise ValueError("radial potentials need a profile")

    def __call__(self, x) -> np.ndarray:
        x = self._points(x)
        v = np.asarray(self.func(x), dtype=float)
        self._check(x, v)
        return v

    def _points(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.ndim == 0 or x.shape[-1] != self.dimension:
            raise ValueError(
                f"points must have trailing dimension {self.dimension}, got shape {x.shape}")
        if not np.all(np.isfinite(x)):
            raise ValueError("potential queried at a non-finite point")
        return x

    def _check(self, x, v):
        if np.any(v < 1.0 - _CHECK_RTOL):
            bad = np.unravel_index(np.argmin(v), v.shape) if v.ndim else ()
            raise PotentialBelowOne(
                f"{self.name}: V = {float(np.min(v))!r} < 1 at x = {x[bad].tolist()}")
        if self.envelope is not None:
            r = np.linalg.norm(x, axis=-1)
            lo, hi = self.envelope.lower(r), self.envelope.upper(r)
            slack = _CHECK_RTOL * np.maximum(1.0, np.abs(v))
            if np.any(lo > v + slack) or np.any(v > hi + slack):
                raise EnvelopeViolation(f"{self.name}: potential leaves its declared envelope")

    def gradient(self, x) -> np.ndarray:
        x = self._points(x)
        if self.grad is not None:
            return np.asarray(self.grad(x), dtype=float)
        step = 1e-6 * np.maximum(1.0, np.abs(x))
        g = np.empty_like(x)
        for k in range(self.dimension):
            e = np.zeros(self.dimension)
            e[k] = 1.0
            hk = step[..., k:k + 1]
            g[..., k] = (self.func(x + hk * e) - self.func(x - hk * e)) / (2 * hk[..., 0])
        return g


def eval(p: Potential, x) -> float:  # noqa: A001 - mirrors the operation name
    """Evaluate V at a single point, raising PotentialBelowOne if V(x) < 1."""
    x = np.asarray(x, dtype=float).reshape(-1)
    return float(p(x))


# ---------------------------------------------------------------------------
# built-in potentials


def constant(value: float = 1.0, dimension: int = 3) -> Potential:
    value = float(value)
    return Potential(
        name=f"constant({value:g})",
        dimension=dimension,
        func=lambda x: np.full(x.shape[:-1], value),
        grad=lambda x: np.zeros_like(x),
        is_radial=True,
        profile=lambda r: np.full(np.shape(r), value),
        monotone=True,
        params={"value": value},
    )


def radial_polynomial(coefficients: Sequence[Sequence[float]], dimension: int = 3,
                      envelope: Optional[Envelope] = None) -> Potential:
    """V(x) = Σ_k c_k |x|^{p_k} from (power, coefficient) pairs."""
    terms = [(float(pw), float(c)) for pw, c in coefficients]
    if not terms:
        raise ValueError("radial_polynomial needs at least one term")
    for pw, _ in terms:
        if pw < 0:
            raise ValueError("radial powers must be nonnegative")

    def profile(r):
        r = np.asarray(r, dtype=float)
        out = np.zeros_like(r)
        for pw, c in terms:
            out = out + (c if pw == 0 else c * r**pw)
        return out

    def dprofile(r):
        out = np.zeros_like(r)
        for pw, c in terms:
            if pw > 0:
                out = out + c * pw * r ** (pw - 1)
        return out

    def func(x):
        # even powers straight from |x|² so lattice points evaluate exactly
        r2 = np.sum(x * x, axis=-1)
        out = np.zeros(x.shape[:-1])
        for pw, c in terms:
            if pw == 0:
                out = out + c
            elif pw % 2 == 0:
                out = out + c * r2 ** int(pw // 2)
            else:
                out = out + c * np.sqrt(r2) ** pw
        return out

    def grad(x):
        r = np.linalg.norm(x, axis=-1)
        safe = np.where(r > 0, r, 1.0)
        return (dprofile(r) / safe)[..., None] * x

    label = " + ".join(f"{c:g}|x|^{pw:g}" if pw else f"{c:g}" for pw, c in terms)
    return Potential(
        name=f"radial({label})",
        dimension=dimension,
        func=func,
        grad=grad,
        is_radial=True,
        profile=profile,
        monotone=all(c >= 0 for pw, c in terms if pw > 0),
        envelope=envelope,
        params={"coefficients": [[pw, c] for pw, c in terms]},
    )


def coordinate_polynomial(terms: Sequence[Sequence], dimension: int = 3,
                          envelope: Optional[Envelope] = None) -> Potential:
    """V(x) = Σ c·Π_i |x_i|^{e_i} from (coefficient, exponents) pairs."""
    parsed = []
    for c, exps in terms:
        exps = tuple(float(e) for e in exps)
        if len(exps) != dimension:
            raise ValueError(f"term exponents {exps} do not match dimension {dimension}")
        if any(e < 0 for e in exps):
            raise ValueError("exponents must be nonnegative")
        parsed.append((float(c), exps))

    def func(x):
        ax = np.abs(x)
        out = np.zeros(x.shape[:-1])
        for c, exps in parsed:
            t = np.full(x.shape[:-1], c)
            for i, e in enumerate(exps):
                if e:
                    t = t * ax[..., i] ** e
            out = out + t
        return out

    def grad(x):
        ax = np.abs(x)
        g = np.zeros_like(x)
        for c, exps in parsed:
            for k, ek in enumerate(exps):
                if ek == 0:
                    continue
                t = c * ek * ax[..., k] ** (ek - 1) * np.sign(x[..., k])
                for i, e in enumerate(exps):
                    if i != k and e:
                        t = t * ax[..., i] ** e
                g[..., k] += t
        return g

    return Potential(
        name="poly(" + " + ".join(f"{c:g}*{list(e)}" for c, e in parsed) + ")",
        dimension=dimension,
        func=func,
        grad=grad,
        envelope=envelope,
        params={"terms": [[c, list(e)] for c, e in parsed]},
    )


def harmonic(dimension: int = 1) -> Potential:
    """V(x) = 1 + |x|²/2, with its polynomial envelope (a=A=1, n=m=1, b=0, B=1)."""
    return radial_polynomial([(0, 1.0), (2, 0.5)], dimension,
                             envelope=Envelope(a=1.0, b=0.0, A=1.0, B=1.0, n=1, m=1))


# named presets used by the acceptance suite and the config file
PRESETS = {
    "constant": lambda d: constant(1.0, d),
    "radial_quadratic": lambda d: radial_polynomial([(0, 1.0), (2, 1.0)], d),
    "harmonic": harmonic,
    "anisotropic": lambda d: coordinate_polynomial(
        [(1.0, [0] * d)] + [(0.5 * (k + 1), [2 if i == k else 0 for i in range(d)])
                            for k in range(d)], d),
}


def build_potential(name: str, dimension: int, **params) -> Potential:
    """Construct a potential from its config name and parameters."""
    env = params.pop("envelope", None)
    envelope = Envelope(**env) if env else None
    if name in PRESETS and not params:
        p = PRESETS[name](dimension)
        if envelope is not None:
            p = _with_envelope(p, envelope)
        return p
    if name == "constant":
        return constant(params.get("value", 1.0), dimension)
    if name == "radial_polynomial":
        return radial_polynomial(params["coefficients"], dimension, envelope)
    if name == "coordinate_polynomial":
        return coordinate_polynomial(params["terms"], dimension, envelope)
    raise ValueError(f"unknown potential {name!r}")


def _with_envelope(p: Potential, envelope: Envelope) -> Potential:
    return Potential(p.name, p.dimension, p.func, p.grad, p.is_radial, p.profile,
                     p.monotone, envelope, dict(p.params))


# ---------------------------------------------------------------------------
# ball supremum


def ball_offsets(dimension: int, radius: float = 1.0, n_points: int = 512,
                 n_shells: int = 8) -> np.ndarray:
    """Deterministic sample of the closed ball: center, shells, and axis points.

    In 2D and 3D points are spread over ``n_shells`` concentric shells in
    proportion to shell area, each shell rotated by a golden-angle offset.
    The 2d points ±radius·e_i are always included.
    """
    if radius <= 0:
        raise ValueError("radius must be positive")
    pts = [np.zeros((1, dimension))]
    if dimension == 1:
        pts.append(np.linspace(-radius, radius, max(n_points, 2))[:, None])
        return np.concatenate(pts)
    radii = radius * np.arange(1, n_shells + 1) / n_shells
    w = radii ** (dimension - 1)
    counts = np.maximum(4, np.round(n_points * w / w.sum()).astype(int))
    for k, (rk, nk) in enumerate(zip(radii, counts)):
        if dimension == 2:
            ang = 2 * np.pi * (np.arange(nk) / nk + k / _GOLDEN)
            pts.append(rk * np.stack([np.cos(ang), np.sin(ang)], axis=1))
        else:
            i = np.arange(nk)
            z = 1.0 - (2 * i + 1) / nk
            phi = 2 * np.pi * (i / _GOLDEN + k / _GOLDEN**2)
            s = np.sqrt(1 - z * z)
            pts.append(rk * np.stack([s * np.cos(phi), s * np.sin(phi), z], axis=1))
    eye = np.eye(dimension)
    pts.append(radius * np.concatenate([eye, -eye]))
    return np.concatenate(pts)


def sup_ball(p: Potential, x, radius: float = 1.0, n_points: int = 512) -> np.ndarray:
    """sup_{|y−x| ≤ radius} V(y), for one point or an array of points (..., d).

    Exact for radial potentials with nondecreasing profile; sampled otherwise.
    """
    if radius <= 0:
        raise ValueError("radius must be positive")
    x = p._points(x)
    if p.is_radial and p.monotone:
        r = np.linalg.norm(x, axis=-1) + radius
        v = np.asarray(p.profile(r), float)
        if np.any(v < 1.0 - _CHECK_RTOL):
            raise PotentialBelowOne(f"{p.name}: ball supremum below 1")
        return v
    offs = ball_offsets(p.dimension, radius, n_points)
    flat = x.reshape(-1, p.dimension)
    out = np.empty(len(flat))
    chunk = max(1, 200_000 // len(offs))
    for s in range(0, len(flat), chunk):
        pts = flat[s:s + chunk, None, :] + offs[None, :, :]
        out[s:s + chunk] = p(pts).max(axis=1)
    return out.reshape(x.shape[:-1])


def thickened(p: Potential, radius: float = 1.0, n_points: int = 512) -> Potential:
    """The potential V∘(x) = sup_{|y−x| ≤ radius} V(y) as a Potential."""
    if p.is_radial and p.monotone:
        prof = p.profile
        return Potential(
            name=f"{p.name}_circ",
            dimension=p.dimension,
            func=lambda x: prof(np.linalg.norm(x, axis=-1) + radius),
            grad=(None if p.grad is None else _shifted_radial_grad(p, radius)),
            is_radial=True,
            profile=lambda r: prof(np.asarray(r, float) + radius),
            monotone=True,
            params={"base": p.name, "radius": radius},
        )
    return Potential(
        name=f"{p.name}_circ",
        dimension=p.dimension,
        func=lambda x: sup_ball(p, x, radius, n_points),
        params={"base": p.name, "radius": radius},
    )


def _shifted_radial_grad(p: Potential, radius: float):
    def grad(x):
        r = np.linalg.norm(x, axis=-1)
        safe = np.where(r > 0, r, 1.0)
        e = x / safe[..., None]
        # gradient of V at the point pushed out radially by `radius`
        y = x + radius * e
        y = np.where((r > 0)[..., None], y, 0.0)
        gy = p.grad(y)
        return np.where((r > 0)[..., None], np.sum(gy * e, axis=-1)[..., None] * e, 0.0)
    return grad


# ---------------------------------------------------------------------------
# grids and fields


@dataclass(frozen=True)
class GridSpec:
    """Axis-aligned box [lo, hi] with node coordinates lo + i·h."""

    lo: tuple
    hi: tuple
    h: tuple

    def __post_init__(self):
        lo = tuple(float(v) for v in np.atleast_1d(self.lo))
        hi = tuple(float(v) for v in np.atleast_1d(self.hi))
        h = np.atleast_1d(np.asarray(self.h, float))
        if h.size == 1:
            h = np.repeat(h, len(lo))
        h = tuple(float(v) for v in h)
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)
        object.__setattr__(self, "h", h)
        if not (len(lo) == len(hi) == len(h)) or len(lo) not in (1, 2, 3):
            raise ValueError("lo, hi and h must share a dimension of 1, 2 or 3")
        for k in range(len(lo)):
            if not h[k] > 0:
                raise ValueError(f"grid spacing h must be positive, got {h[k]}")
            if not (lo[k] <= 0.0 <= hi[k]):
                raise ValueError("grid box must contain the origin")
            steps = (hi[k] - lo[k]) / h[k]
            if abs(steps - round(steps)) > 1e-6:
                raise ValueError(f"axis {k}: (hi - lo)/h = {steps} is not an integer")

    @classmethod
    def cube(cls, half_width: float, h: float, dimension: int) -> "GridSpec":
        return cls((-half_width,) * dimension, (half_width,) * dimension, (h,) * dimension)

    @property
    def dimension(self) -> int:
        return len(self.lo)

    @property
    def shape(self) -> tuple:
        return tuple(int(round((hi - lo) / h)) + 1 for lo, hi, h in zip(self.lo, self.hi, self.h))

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    @property
    def axes(self) -> list:
        return [lo + np.arange(n) * h for lo, n, h in zip(self.lo, self.shape, self.h)]

    def points(self) -> np.ndarray:
        """All node coordinates, row-major (last axis fastest), shape (size, d)."""
        mesh = np.meshgrid(*self.axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)

    def nearest_index(self, x) -> tuple:
        x = np.asarray(x, float).reshape(-1)
        idx = []
        for k in range(self.dimension):
            i = int(round((x[k] - self.lo[k]) / self.h[k]))
            idx.append(min(max(i, 0), self.shape[k] - 1))
        return tuple(idx)

    def node(self, index) -> np.ndarray:
        return np.array([lo + i * h for lo, i, h in zip(self.lo, index, self.h)])

    def contains(self, x, margin: float = 0.0) -> bool:
        x = np.asarray(x, float).reshape(-1)
        return all(lo + margin <= v <= hi - margin for lo, hi, v in zip(self.lo, self.hi, x))

    def interior(self) -> "GridSpec":
        """The grid without its boundary nodes (Dirichlet unknowns)."""
        return GridSpec(tuple(l + h for l, h in zip(self.lo, self.h)),
                        tuple(u - h for u, h in zip(self.hi, self.h)), self.h)


@dataclass(frozen=True, eq=False)
class ScalarField:
    """One real value per grid node, stored with the grid's shape."""

    grid: GridSpec
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.size != self.grid.size:
            raise ValueError(f"field has {v.size} values for {self.grid.size} nodes")
        v = v.reshape(self.grid.shape)
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def interpolate(self, points, fill_value=np.nan) -> np.ndarray:
        """Multilinear interpolation; points outside the box get ``fill_value``."""
        pts = np.asarray(points, float)
        interp = RegularGridInterpolator(self.grid.axes, self.values, method="linear",
                                         bounds_error=False, fill_value=fill_value)
        return interp(pts.reshape(-1, self.grid.dimension)).reshape(pts.shape[:-1])

    def at(self, x) -> float:
        return float(self.values[self.grid.nearest_index(x)])


def discretize(p: Potential, g: GridSpec) -> ScalarField:
    """Sample V at every node of g."""
    if g.dimension != p.dimension:
        raise ValueError(f"grid dimension {g.dimension} != potential dimension {p.dimension}")
    return ScalarField(g, p(g.points()))
