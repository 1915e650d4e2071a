"""Monte Carlo checks of the probabilistic lower-bound machinery.

Brownian paths use exact Gaussian increments on a uniform time grid.
Each batch of paths draws from its own stream, derived from
``SeedSequence(seed, spawn_key=(batch,))``, so results do not depend on
how batches are scheduled.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import eigh_tridiagonal
from scipy.special import zeta

from ._mc_kernels import count_survivors
from .agmon.paths import TimedPath, kinetic_integral
from .errors import GridExitRateHigh
from .fields import Potential, ScalarField
from .spectral import GroundStateField

# Broadie–Glasserman–Kou constant −ζ(1/2)/√(2π) for discretely monitored barriers
BGK_BETA = float(-zeta(0.5) / math.sqrt(2 * math.pi))


@dataclass(frozen=True)
class McConfig:
    dt: float = 1e-3
    paths: int = 1_000_000
    seed: int = 0
    dimension: int = 3
    batch_size: int = 65536

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.paths < 1:
            raise ValueError("need at least one path")
        if self.dimension not in (1, 2, 3):
            raise ValueError("dimension must be 1, 2 or 3")
        if self.batch_size < 1:
            raise ValueError("batch_size must be positive")


@dataclass(frozen=True)
class McEstimate:
    value: float
    stderr: float
    samples: int
    seed: int
    tag: str
    dt: float = 0.0
    extra: dict = field(default_factory=dict)

    def record(self) -> dict:
        return {"tag": self.tag, "value": self.value, "stderr": self.stderr, "M": self.samples,
                "dt": self.dt, "seed": self.seed, **self.extra}


def batch_rng(seed: int, batch: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(batch,))))


def _batches(cfg: McConfig):
    for b, start in enumerate(range(0, cfg.paths, cfg.batch_size)):
        yield b, min(cfg.batch_size, cfg.paths - start)


def _steps(T: float, dt: float):
    n = int(round(T / dt))
    return n, (T / n if n else 0.0)


def _binomial(hits: int, n: int, cfg: McConfig, tag: str, dt: float, **extra) -> McEstimate:
    p = hits / n
    return McEstimate(p, math.sqrt(p * (1 - p) / n), n, cfg.seed, tag, dt, extra)


def _survivors(offsets: np.ndarray, radius: float, cfg: McConfig, dt: float) -> int:
    """Count paths with |B_{t_i} − offsets[i]| ≤ radius at every step time t_1..t_n."""
    offsets = np.ascontiguousarray(offsets, dtype=float)
    total = 0
    for b, size in _batches(cfg):
        total += count_survivors(batch_rng(cfg.seed, b), size, offsets, radius * radius,
                                 math.sqrt(dt))
    return total


def _effective_radius(radius: float, dt: float, bridge_correction: bool) -> float:
    r = radius - BGK_BETA * math.sqrt(dt) if bridge_correction else radius
    if r <= 0:
        raise ValueError("time step too coarse for the barrier correction at this radius")
    return r


def ball_survival(T: float, cfg: McConfig, radius: float = 1.0,
                  bridge_correction: bool = True) -> McEstimate:
    """P[sup_{s≤T} |B_s| ≤ radius], discretely monitored with a shifted barrier."""
    if not T > 0:
        raise ValueError("T must be positive")
    n, dt = _steps(T, cfg.dt)
    n, dt = (1, T) if n == 0 else (n, dt)
    r = _effective_radius(radius, dt, bridge_correction)
    hits = _survivors(np.zeros((n, cfg.dimension)), r, cfg, dt)
    return _binomial(hits, cfg.paths, cfg, "ball_survival", dt, T=T, radius=radius)


def _path_at(q: TimedPath, t: np.ndarray) -> np.ndarray:
    return np.stack([np.interp(t, q.times, q.nodes[:, k]) for k in range(q.nodes.shape[1])],
                    axis=1)


def tube_probability(q: TimedPath, radius: float, cfg: McConfig,
                     bridge_correction: bool = True) -> McEstimate:
    """P[|B_s + q(0) − q(s)| ≤ radius for all step times s ≤ T]."""
    if not radius > 0:
        raise ValueError("radius must be positive")
    if q.nodes.shape[1] != cfg.dimension:
        raise ValueError("path and Monte Carlo dimensions differ")
    n, dt = _steps(q.T, cfg.dt)
    n, dt = (1, q.T) if n == 0 else (n, dt)
    t = dt * np.arange(1, n + 1)
    offsets = _path_at(q, t) - q.nodes[0]
    r = _effective_radius(radius, dt, bridge_correction)
    hits = _survivors(offsets, r, cfg, dt)
    return _binomial(hits, cfg.paths, cfg, "tube_probability", dt, T=q.T, radius=radius)


def dirichlet_tau(d: int, h: float = 1e-4) -> float:
    """Lowest Dirichlet eigenvalue of −½Δ on the unit ball in R^d (radial, cell-centred FD)."""
    if d not in (1, 2, 3):
        raise ValueError("d must be 1, 2 or 3")
    n = int(round(1.0 / h))
    r = (np.arange(n) + 0.5) * h
    faces = (np.arange(n) + 1) * h
    w = r ** (d - 1) * h             # mass
    flux = 0.5 * faces ** (d - 1) / h  # ½ r^{d-1} / h on internal faces
    diag = np.zeros(n)
    diag[:-1] += flux[:-1]
    diag[1:] += flux[:-1]
    diag[-1] += 0.5 * 1.0 / (0.5 * h)  # Dirichlet face at r = 1
    off = -flux[:-1]
    s = 1.0 / np.sqrt(w)
    vals = eigh_tridiagonal(diag * s * s, off * s[:-1] * s[1:], eigvals_only=True,
                            select="i", select_range=(0, 0))
    return float(vals[0])


def fk_ground_state(p: Potential, x, T: float, E_g: float, psi: ScalarField, cfg: McConfig,
                    max_exit_rate: float = 0.01) -> McEstimate:
    """e^{T·E_g}·E[exp(−∫₀^T V(x + B_s) ds)·ψ(x + B_T)], left-point rule for the integral.

    Paths that leave the ψ grid at any step time contribute zero.
    """
    x = np.atleast_1d(np.asarray(x, float))
    d = psi.grid.dimension
    if x.size != d or cfg.dimension != d:
        raise ValueError("point, grid and Monte Carlo dimensions differ")
    n, dt = _steps(T, cfg.dt)
    if n == 0:
        v = float(psi.interpolate(x[None, :])[0])
        return McEstimate(v, 0.0, cfg.paths, cfg.seed, "fk_ground_state", 0.0, {"T": T})
    lo, hi = np.array(psi.grid.lo), np.array(psi.grid.hi)
    s1 = s2 = 0.0
    exits = 0
    sd = math.sqrt(dt)
    for b, size in _batches(cfg):
        rng = batch_rng(cfg.seed, b)
        pos = np.repeat(x[None, :], size, axis=0)
        logw = np.zeros(size)
        inside = np.ones(size, bool)
        for _ in range(n):
            logw -= p(pos) * dt
            pos = pos + rng.standard_normal(pos.shape) * sd
            inside &= np.all((pos >= lo) & (pos <= hi), axis=1)
            # park exited paths at x so V stays finite; their weight is dropped
            pos[~inside] = x
        w = np.zeros(size)
        w[inside] = np.exp(logw[inside] + T * E_g) * psi.interpolate(pos[inside])
        s1 += float(w.sum())
        s2 += float(np.dot(w, w))
        exits += int((~inside).sum())
    M = cfg.paths
    rate = exits / M
    if rate > max_exit_rate:
        raise GridExitRateHigh(f"{100 * rate:.2f}% of paths left the wavefunction grid")
    mean = s1 / M
    var = max(s2 / M - mean * mean, 0.0)
    return McEstimate(mean, math.sqrt(var / M), M, cfg.seed, "fk_ground_state", dt,
                      {"T": T, "x": x.tolist(), "exit_rate": rate})


# ---------------------------------------------------------------------------
# lower-bound certificate


def alpha_constant(chi1: float, sup_norm: float) -> float:
    """α = χ(1)·exp(−‖Φ‖∞² / (2χ(1)²))."""
    if not chi1 > 0:
        raise ValueError("χ(1) must be positive")
    return chi1 * math.exp(-sup_norm**2 / (2 * chi1**2))


def alpha_from_ground_state(gs: GroundStateField) -> float:
    return alpha_constant(gs.chi(1.0), gs.sup_norm())


@dataclass(frozen=True, eq=False)
class CertificateInput:
    x: tuple
    q: TimedPath
    p: float
    alpha: float
    tau: float
    E_g: float
    c: float = 0.0
    C: float = 1.0
    g: float = 0.0

    def __post_init__(self):
        if not self.p > 1:
            raise ValueError("Hölder exponent p must exceed 1")
        x = np.atleast_1d(np.asarray(self.x, float))
        if not np.allclose(self.q.nodes[0], x) or not np.allclose(self.q.nodes[-1], 0.0):
            raise ValueError("certificate path must run from x to 0")


def certificate_value(ci: CertificateInput, vcirc: Potential) -> float:
    """α/C^{p−1}·exp(−(p/2)∫|q̇|² − ∫V∘(q) + T(E_g − pτ) − c(g² + g⁴/(p−1))(1∨T)).

    Only the g = 0 reduction (c = 0, C = 1) is a certified lower bound on ℓ(x).
    """
    q = ci.q
    kin = kinetic_integral(q.nodes, q.times)
    vc = vcirc(q.nodes)
    pot = float(np.sum(0.5 * (vc[:-1] + vc[1:]) * np.diff(q.times)))
    field_term = ci.c * (ci.g**2 + ci.g**4 / (ci.p - 1)) * max(1.0, q.T)
    expo = -0.5 * ci.p * kin - pot + q.T * (ci.E_g - ci.p * ci.tau) - field_term
    return ci.alpha / ci.C ** (ci.p - 1) * math.exp(expo)


@dataclass(frozen=True)
class GirsanovCheck:
    tube: McEstimate
    ball: McEstimate
    factor: float

    @property
    def rhs(self) -> float:
        return self.factor * self.ball.value

    def holds(self, slack: float = 0.95) -> bool:
        return self.tube.value >= slack * self.rhs


def girsanov_check(q: TimedPath, cfg: McConfig, radius: float = 1.0,
                   bridge_correction: bool = True) -> GirsanovCheck:
    """P̂[M_T] against e^{−½∫|q̇|²}·P̂[Q_T]."""
    tube = tube_probability(q, radius, cfg, bridge_correction)
    ball = ball_survival(q.T, cfg, radius, bridge_correction)
    factor = math.exp(-0.5 * kinetic_integral(q.nodes, q.times))
    return GirsanovCheck(tube, ball, factor)


def reversed_path(q: TimedPath) -> TimedPath:
    """t ↦ q(T − t)."""
    return TimedPath(q.nodes[::-1].copy(), q.T - q.times[::-1], q.T, q.action)


def straight_timed_path(x, T: float, n: int = 1000) -> TimedPath:
    """Constant-velocity path from x to 0 on [0, T] (action left unset)."""
    x = np.atleast_1d(np.asarray(x, float))
    t = np.linspace(0.0, T, n + 1)
    return TimedPath(x[None, :] * (1 - t / T)[:, None], t, T, float("nan"))


def jensen_overlap(gs: GroundStateField, f: float, mode: int = 0) -> np.ndarray:
    """(e^{−φ(f e_mode)}Ω, Φ_g(x)) per node, using the exact coherent coefficients.

    For a single real mode e^{−fφ}Ω has components e^{f²/2}(−f)^n/√n!.
    """
    if gs.basis is None:
        raise ValueError("ground state carries no Fock basis")
    occ = gs.basis.occupations()
    others = np.delete(occ, mode, axis=1)
    n = occ[:, mode]
    on_axis = ~np.any(others != 0, axis=1)
    coef = np.zeros(gs.fock_dim)
    nn = n[on_axis]
    logfact = np.array([math.lgamma(k + 1) for k in nn])
    coef[on_axis] = (np.exp(0.5 * f * f - 0.5 * logfact) * (-f) ** nn.astype(float))
    return gs.coefficients @ coef


def jensen_check(gs: GroundStateField, f: float, mode: int = 0) -> float:
    """min over nodes of overlap − ℓ·exp(−|f|·‖Φ‖∞/ℓ); nonnegative when the bound holds."""
    lhs = jensen_overlap(gs, f, mode)
    ell = gs.ell
    rhs = ell * np.exp(-abs(f) * gs.sup_norm() / ell)
    return float(np.min(lhs - rhs))
