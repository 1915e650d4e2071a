"""Decay profiles of ground states against Agmon distances, and envelope fits."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .agmon.distance import DistanceField
from .errors import EmptyWindow, GridMismatch
from .fields import Envelope
from .spectral import GroundStateField

UNDERFLOW_FLOOR = 1e-300
_LOG_SLACK = 1e-9


@dataclass(frozen=True, eq=False)
class DecayProfile:
    """Per-node join of ‖Φ(x)‖, ℓ(x), ρ(x), ρ∘(x) on the interior matter nodes.

    ``ratio_upper`` = −ln(‖Φ(x)‖/‖Φ(x₀)‖)/ρ(x) and ``ratio_lower`` =
    −ln(ℓ(x)/ℓ(x₀))/ρ∘(x), with x₀ the distance source; the normalisation
    constant of the state drops out. ``*_raw`` columns use the unscaled
    norms. Entries are nan where ρ = 0 or a norm is below the underflow floor.
    """

    x: np.ndarray
    norm: np.ndarray
    ell: np.ndarray
    rho: np.ndarray
    rho_circ: np.ndarray
    ratio_upper: np.ndarray
    ratio_lower: np.ndarray
    ratio_upper_raw: np.ndarray
    ratio_lower_raw: np.ndarray
    source: tuple

    @property
    def radius(self) -> np.ndarray:
        return np.linalg.norm(self.x - np.asarray(self.source), axis=1)

    @property
    def usable(self) -> np.ndarray:
        return (self.norm > UNDERFLOW_FLOOR) & (self.ell > UNDERFLOW_FLOOR) & (self.rho > 0)

    def window(self, lo: float, hi: float) -> np.ndarray:
        r = self.radius
        return self.usable & (r >= lo - 1e-12) & (r <= hi + 1e-12)

    def at(self, x) -> dict:
        i = int(np.argmin(np.linalg.norm(self.x - np.atleast_1d(x), axis=1)))
        cols = ("norm", "ell", "rho", "rho_circ", "ratio_upper", "ratio_lower",
                "ratio_upper_raw", "ratio_lower_raw")
        return {c: float(getattr(self, c)[i]) for c in cols}

    def columns(self) -> dict:
        d = self.x.shape[1]
        out = {("x" if d == 1 else f"x{k}"): self.x[:, k] for k in range(d)}
        for c in ("norm", "ell", "rho", "rho_circ", "ratio_upper", "ratio_lower",
                  "ratio_upper_raw", "ratio_lower_raw"):
            out[c] = getattr(self, c)
        return out

    def to_csv(self, path) -> None:
        cols = self.columns()
        np.savetxt(path, np.column_stack(list(cols.values())), fmt="%.17g", delimiter=",",
                   header=",".join(cols), comments="")


def _interior(values: np.ndarray) -> np.ndarray:
    return np.asarray(values[tuple(slice(1, -1) for _ in range(values.ndim))]).ravel()


def _ratio(num: np.ndarray, den: np.ndarray, ok: np.ndarray) -> np.ndarray:
    out = np.full(num.shape, np.nan)
    out[ok] = -np.log(num[ok]) / den[ok]
    return out


def build_profile(gs: GroundStateField, rho: DistanceField, rho_circ: DistanceField) -> DecayProfile:
    if not (gs.grid == rho.grid == rho_circ.grid):
        raise GridMismatch("ground state and distance fields live on different grids")
    if tuple(rho.source) != tuple(rho_circ.source):
        raise GridMismatch("distance fields have different sources")
    x = gs.nodes
    norm, ell = gs.norms, gs.ell
    r, rc = _interior(rho.values), _interior(rho_circ.values)
    i0 = gs.node_index(rho.source)
    n0, l0 = norm[i0], ell[i0]
    ok_u = (norm > UNDERFLOW_FLOOR) & (r > 0)
    ok_l = (ell > UNDERFLOW_FLOOR) & (rc > 0)
    return DecayProfile(
        x=x, norm=norm, ell=ell, rho=r, rho_circ=rc,
        ratio_upper=_ratio(norm / n0, r, ok_u),
        ratio_lower=_ratio(np.where(ok_l, ell, 1.0) / l0, rc, ok_l),
        ratio_upper_raw=_ratio(norm, r, ok_u),
        ratio_lower_raw=_ratio(np.where(ok_l, ell, 1.0), rc, ok_l),
        source=tuple(rho.source),
    )


@dataclass(frozen=True)
class SandwichFit:
    """Envelope constants c_ε ≤ ℓ e^{(1+ε)ρ∘} and ‖Φ‖ e^{(1−ε)ρ} ≤ C_ε over a window.

    Constants are kept as logarithms; ``c``/``C`` may under- or overflow.
    """

    eps: float
    log_c: float
    log_C: float
    upper_stable: bool
    lower_stable: bool
    window: tuple
    nodes: int

    @property
    def c(self) -> float:
        return math.exp(self.log_c) if self.log_c < 709 else math.inf

    @property
    def C(self) -> float:
        return math.exp(self.log_C) if self.log_C < 709 else math.inf

    @property
    def finite(self) -> bool:
        return math.isfinite(self.log_c) and math.isfinite(self.log_C)

    @property
    def passed(self) -> bool:
        return self.finite and self.upper_stable and self.lower_stable

    def as_dict(self) -> dict:
        return {"eps": self.eps, "c": self.c, "C": self.C, "log_c": self.log_c,
                "log_C": self.log_C, "upper_stable": self.upper_stable,
                "lower_stable": self.lower_stable, "passed": self.passed,
                "window": list(self.window), "nodes": self.nodes}


def _envelopes(profile: DecayProfile, eps: float, mask: np.ndarray):
    up = np.log(profile.norm[mask]) + (1 - eps) * profile.rho[mask]
    low = np.log(profile.ell[mask]) + (1 + eps) * profile.rho_circ[mask]
    return up, low


def fit_sandwich(profile: DecayProfile, eps: float, window=(2.0, 6.0)) -> SandwichFit:
    """Fit C_ε (max) and c_ε (min) over the window.

    A fit passes when both constants are finite and positive and each
    envelope is stable outward: the upper envelope's maximum over the
    outer half of the window does not exceed its maximum over the inner
    half, and the lower envelope's minimum over the outer half is not
    below its inner-half minimum. An offending envelope means the
    constant keeps drifting as |x| grows, i.e. the rate is wrong.
    """
    if not eps > 0:
        raise ValueError("eps must be positive")
    lo, hi = float(window[0]), float(window[1])
    mask = profile.window(lo, hi)
    if mask.sum() < 2:
        raise EmptyWindow(f"window [{lo}, {hi}] holds {int(mask.sum())} usable node(s)")
    up, low = _envelopes(profile, eps, mask)
    r = profile.radius[mask]
    mid = 0.5 * (lo + hi)
    inner, outer = r <= mid, r > mid
    if not inner.any() or not outer.any():
        raise EmptyWindow("window too narrow to compare its inner and outer halves")
    upper_stable = bool(up[outer].max() <= up[inner].max() + _LOG_SLACK)
    lower_stable = bool(low[outer].min() >= low[inner].min() - _LOG_SLACK)
    return SandwichFit(float(eps), float(low.min()), float(up.max()), upper_stable,
                       lower_stable, (lo, hi), int(mask.sum()))


def sandwich_holds(profile: DecayProfile, fit: SandwichFit) -> bool:
    """c e^{−(1+ε)ρ∘} ≤ ℓ ≤ ‖Φ‖ ≤ C e^{−(1−ε)ρ} at every window node (in logs)."""
    mask = profile.window(*fit.window)
    e = fit.eps
    ln_ell, ln_norm = np.log(profile.ell[mask]), np.log(profile.norm[mask])
    lower = fit.log_c - (1 + e) * profile.rho_circ[mask]
    upper = fit.log_C - (1 - e) * profile.rho[mask]
    return bool(np.all(lower <= ln_ell + _LOG_SLACK) and np.all(ln_ell <= ln_norm + _LOG_SLACK)
                and np.all(ln_norm <= upper + _LOG_SLACK))


def asymptotic_matching(rho: DistanceField, rho_circ: DistanceField, radii, band=None) -> list:
    """Per radius R, the range of ρ∘/ρ over nodes with ||x − x₀| − R| ≤ band (default h/2)."""
    if rho.grid != rho_circ.grid:
        raise GridMismatch("distance fields live on different grids")
    if band is None:
        band = 0.5 * max(rho.grid.h)
    pts = rho.grid.points()
    r = np.linalg.norm(pts - np.asarray(rho.source), axis=1)
    a, b = rho.values.ravel(), rho_circ.values.ravel()
    rows = []
    for R in radii:
        m = (np.abs(r - R) <= band) & (a > 0)
        if not m.any():
            raise EmptyWindow(f"no nodes near radius {R}")
        q = b[m] / a[m]
        rows.append({"radius": float(R), "ratio_max": float(q.max()), "ratio_min": float(q.min()),
                     "nodes": int(m.sum())})
    return rows


def envelope_bracket(profile: DecayProfile, envelope: Envelope, window=(2.0, 6.0),
                     tol: float = 0.05) -> dict:
    """Check a/(n+1)|x|^{n+1} − k₁ ≤ −ln‖Φ(x)‖ ≤ A/(m+1)|x|^{m+1} + k₂ over the window.

    k₁, k₂ are fitted on the inner half of the window; the bracket holds if
    they also serve the outer half up to ``tol``.
    """
    lo, hi = window
    mask = profile.window(lo, hi)
    if mask.sum() < 2:
        raise EmptyWindow(f"window [{lo}, {hi}] holds too few usable nodes")
    r = profile.radius[mask]
    y = -np.log(profile.norm[mask])
    rate_lo, rate_hi = envelope.decay_rates(r)
    inner = r <= 0.5 * (lo + hi)
    k1 = float(np.max(rate_lo[inner] - y[inner]))
    k2 = float(np.max(y[inner] - rate_hi[inner]))
    lower_ok = bool(np.all(rate_lo - k1 <= y + tol))
    upper_ok = bool(np.all(y <= rate_hi + k2 + tol))
    return {"k_lower": k1, "k_upper": k2, "lower_holds": lower_ok, "upper_holds": upper_ok,
            "holds": lower_ok and upper_ok}
