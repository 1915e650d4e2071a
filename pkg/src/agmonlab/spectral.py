"""Exact diagonalisation: grid Schrödinger operators and truncated Nelson-type models."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy import integrate
from scipy.sparse.linalg import eigsh, splu

from .errors import DimensionOverflow, NoConvergence, PositivityViolation, QuadratureFailure
from .fields import GridSpec, Potential, ScalarField, discretize

DEFAULT_DIMENSION_CAP = 5_000_000


@dataclass(frozen=True, eq=False)
class FockBasis:
    """Occupancy basis of K boson modes, each truncated at n_max quanta.

    Basis index is mixed-radix in the occupations with mode 0 most
    significant; index 0 is the vacuum.
    """

    k: tuple
    eta: tuple
    nu: float
    n_max: int

    def __post_init__(self):
        k = tuple(float(v) for v in np.atleast_1d(self.k))
        eta = np.atleast_1d(np.asarray(self.eta, float))
        if eta.size == 1:
            eta = np.repeat(eta, len(k))
        eta = tuple(float(v) for v in eta)
        object.__setattr__(self, "k", k)
        object.__setattr__(self, "eta", eta)
        if len(eta) != len(k) or not k:
            raise ValueError("need one weight per mode and at least one mode")
        if any(v < 0 for v in k):
            raise ValueError("wavenumbers must be nonnegative")
        if any(not 0 <= e <= 1 for e in eta):
            raise ValueError("mode weights must lie in [0, 1]")
        if self.nu < 0:
            raise ValueError("boson mass must be nonnegative")
        if int(self.n_max) != self.n_max or self.n_max < 0:
            raise ValueError("n_max must be a nonnegative integer")
        if any(w <= 0 for w in self.omega):
            raise ValueError("a k = 0 mode needs a positive boson mass")

    @property
    def K(self) -> int:
        return len(self.k)

    @property
    def omega(self) -> np.ndarray:
        return np.sqrt(np.asarray(self.k) ** 2 + self.nu**2)

    @property
    def dim(self) -> int:
        return (int(self.n_max) + 1) ** self.K

    @property
    def vacuum_index(self) -> int:
        return 0

    def occupations(self) -> np.ndarray:
        """(dim, K) integer occupation table."""
        n = int(self.n_max) + 1
        idx = np.indices((n,) * self.K).reshape(self.K, -1).T
        return idx

    def total_number(self) -> np.ndarray:
        return self.occupations().sum(axis=1)

    def field_energy(self) -> np.ndarray:
        """Diagonal of dΓ(ω)."""
        return self.occupations() @ self.omega

    def annihilator(self, j: int) -> sp.csr_matrix:
        n = int(self.n_max) + 1
        a1 = sp.diags(np.sqrt(np.arange(1, n, dtype=float)), 1, shape=(n, n))
        mats = [sp.identity(n, format="csr")] * self.K
        mats[j] = a1
        out = mats[0]
        for m in mats[1:]:
            out = sp.kron(out, m, format="csr")
        return sp.csr_matrix(out)

    def field_operator(self, f) -> sp.csr_matrix:
        """φ(f) = Σ_j f_j (a_j + a_j†) for real mode amplitudes f_j."""
        f = np.atleast_1d(np.asarray(f, float))
        out = sp.csr_matrix((self.dim, self.dim))
        for j in range(self.K):
            if f[j] != 0:
                a = self.annihilator(j)
                out = out + f[j] * (a + a.T)
        return sp.csr_matrix(out)

    def as_dict(self) -> dict:
        return {"k": list(self.k), "eta": list(self.eta), "nu": self.nu, "n_max": int(self.n_max),
                "omega": self.omega.tolist()}


@dataclass(frozen=True, eq=False)
class SparseOperator:
    """Real symmetric CSR matrix on (interior matter nodes) ⊗ (Fock space).

    ``lower_bound`` is a guaranteed lower bound on the spectrum, used as
    the eigensolver shift.
    """

    matrix: sp.csr_matrix
    grid: GridSpec
    fock_dim: int = 1
    symmetric: bool = True
    lower_bound: float = 0.0
    basis: FockBasis | None = None
    coupling: float = 0.0

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @property
    def interior(self) -> GridSpec:
        return self.grid.interior()

    def asymmetry(self) -> float:
        d = self.matrix - self.matrix.T
        return float(abs(d).max()) if d.nnz else 0.0


def _laplacian_1d(n: int, h: float) -> sp.csr_matrix:
    main = np.full(n, 1.0 / h**2)
    off = np.full(n - 1, -0.5 / h**2)
    return sp.diags([off, main, off], [-1, 0, 1], format="csr")


def kinetic_matrix(grid: GridSpec) -> sp.csr_matrix:
    """−½Δ by central differences with homogeneous Dirichlet data, on interior nodes."""
    shape = [n - 2 for n in grid.shape]
    if min(shape) < 1:
        raise ValueError("grid has no interior nodes")
    out = None
    for k, (n, h) in enumerate(zip(shape, grid.h)):
        term = _laplacian_1d(n, h)
        for q, nq in enumerate(shape):
            if q < k:
                term = sp.kron(sp.identity(nq), term)
            elif q > k:
                term = sp.kron(term, sp.identity(nq))
        out = term if out is None else out + term
    return sp.csr_matrix(out)


def build_schrodinger(v: ScalarField) -> SparseOperator:
    """Finite-difference  −½Δ + V  with Dirichlet boundary on the interior of v's grid."""
    grid = v.grid
    vin = _interior_values(v)
    if np.any(vin < 1.0 - 1e-12):
        raise ValueError("Schrödinger operator needs V >= 1 on the grid")
    H = kinetic_matrix(grid) + sp.diags(vin.ravel())
    return SparseOperator(sp.csr_matrix(H), grid, 1, True, float(vin.min()))


def _interior_values(v: ScalarField) -> np.ndarray:
    sl = tuple(slice(1, -1) for _ in range(v.grid.dimension))
    return np.asarray(v.values[sl])


def couplings(basis: FockBasis, g: float, x: np.ndarray) -> np.ndarray:
    """Real mode couplings f_j(x), shape (len(x), K).

    g·η_j·√(2/ω_j)·cos(k_j x) for k_j > 0 and g·η_j/√ω_j for k_j = 0.
    """
    x = np.asarray(x, float).reshape(-1)
    om = basis.omega
    out = np.empty((x.size, basis.K))
    for j, (kj, ej) in enumerate(zip(basis.k, basis.eta)):
        if kj > 0:
            out[:, j] = g * ej * math.sqrt(2.0 / om[j]) * np.cos(kj * x)
        else:
            out[:, j] = g * ej / math.sqrt(om[j])
    return out


def build_nelson_toy(grid: GridSpec, p: Potential, basis: FockBasis, g: float,
                     cap: int = DEFAULT_DIMENSION_CAP) -> SparseOperator:
    """H_p ⊗ 1 + 1 ⊗ dΓ(ω) + Σ_j f_j(x)(a_j + a_j†) on a 1D matter grid."""
    if grid.dimension != 1:
        raise ValueError("the toy field model lives on a 1D matter grid")
    n_in = grid.shape[0] - 2
    total = n_in * basis.dim
    if total > cap:
        raise DimensionOverflow(f"{n_in} nodes x {basis.dim} Fock states = {total} > cap {cap}")
    hp = build_schrodinger(discretize(p, grid))
    F = basis.dim
    H = sp.kron(hp.matrix, sp.identity(F)) + sp.kron(sp.identity(n_in),
                                                      sp.diags(basis.field_energy()))
    x = grid.interior().axes[0]
    f = couplings(basis, g, x)
    for j in range(basis.K):
        a = basis.annihilator(j)
        H = H + sp.kron(sp.diags(f[:, j]), a + a.T)
    # dΓ(ω) + φ(f) ≥ −Σ f_j²/ω_j, and compression to the truncated space keeps it
    lb = hp.lower_bound - float(np.sum(np.max(f**2, axis=0) / basis.omega))
    return SparseOperator(sp.csr_matrix(H), grid, F, True, lb, basis, float(g))


def ground_state(H: SparseOperator, tol: float = 1e-8, seed: int = 0, maxiter: int | None = None,
                 refine_steps: int = 3):
    """Lowest eigenpair (E_g, ψ) with ‖ψ‖ = 1 and ‖Hψ − E_gψ‖ ≤ tol.

    Shift-invert Lanczos about the spectral lower bound, then a few steps
    of shifted inverse iteration, which keeps small tail entries accurate.
    """
    A = H.matrix.tocsc()
    n = A.shape[0]
    sigma = H.lower_bound - 1e-3 * max(1.0, abs(H.lower_bound))
    v0 = np.random.default_rng(seed).standard_normal(n)
    if n <= 2:
        w, V = np.linalg.eigh(A.toarray())
        E, psi = float(w[0]), V[:, 0]
    else:
        try:
            w, V = eigsh(A, k=1, sigma=sigma, which="LM", v0=v0, tol=0, maxiter=maxiter)
        except Exception as exc:  # ARPACK no-convergence and friends
            raise NoConvergence(f"eigensolver failed: {exc}") from exc
        E, psi = float(w[0]), V[:, 0]
        shift = E - 1e-3 * max(1.0, abs(E))
        lu = splu((A - shift * sp.identity(n, format="csc")).tocsc())
        for _ in range(refine_steps):
            psi = lu.solve(psi)
            psi /= np.linalg.norm(psi)
        E = float(psi @ (A @ psi))
    psi = psi / np.linalg.norm(psi)
    residual = float(np.linalg.norm(A @ psi - E * psi))
    if residual > tol:
        raise NoConvergence(f"ground-state residual {residual:.3e} exceeds {tol:.1e}")
    return E, psi, residual


@dataclass(frozen=True, eq=False)
class GroundStateField:
    """Ground-state coefficients Φ(x, f) on interior matter nodes.

    Normalised so that Σ_x h^d Σ_f Φ(x, f)² = 1, sign fixed so Σ_x ℓ(x) > 0.
    """

    grid: GridSpec
    coefficients: np.ndarray
    energy: float
    basis: FockBasis | None = None
    coupling: float = 0.0
    residual: float = 0.0
    phase: str = "global-sign"
    extra: dict = field(default_factory=dict)

    @property
    def fock_dim(self) -> int:
        return self.coefficients.shape[1]

    @property
    def nodes(self) -> np.ndarray:
        return self.grid.interior().points()

    @property
    def norms(self) -> np.ndarray:
        """‖Φ(x)‖ per interior node."""
        return np.linalg.norm(self.coefficients, axis=1)

    @property
    def ell(self) -> np.ndarray:
        """Vacuum overlap ℓ(x) = Φ(x, Ω) per interior node."""
        return self.coefficients[:, 0].copy()

    def chi(self, R: float) -> float:
        """χ(R) = min of ℓ over nodes with |x| ≤ R."""
        mask = np.linalg.norm(self.nodes, axis=1) <= R + 1e-12
        if not mask.any():
            raise ValueError(f"no nodes within radius {R}")
        return float(self.ell[mask].min())

    def sup_norm(self) -> float:
        return float(self.norms.max())

    def node_index(self, x) -> int:
        inner = self.grid.interior()
        idx = inner.nearest_index(x)
        return int(np.ravel_multi_index(idx, inner.shape))

    def as_scalar_field(self, which: str = "norm") -> ScalarField:
        """Norm or ℓ on the full matter grid, zero on the Dirichlet boundary."""
        vals = {"norm": self.norms, "ell": self.ell}[which]
        full = np.zeros(self.grid.shape)
        sl = tuple(slice(1, -1) for _ in range(self.grid.dimension))
        full[sl] = vals.reshape(self.grid.interior().shape)
        return ScalarField(self.grid, full)

    def metadata(self) -> dict:
        g = self.grid
        return {
            "E_g": self.energy,
            "residual": self.residual,
            "g": self.coupling,
            "basis": None if self.basis is None else self.basis.as_dict(),
            "grid": {"lo": list(g.lo), "hi": list(g.hi), "h": list(g.h)},
            "n_max": None if self.basis is None else int(self.basis.n_max),
            "phase": self.phase,
            **self.extra,
        }

    def to_csv(self, path) -> None:
        x = self.nodes
        cols = [f"x{k}" for k in range(x.shape[1])] if x.shape[1] > 1 else ["x"]
        data = np.column_stack([x, self.norms, self.ell])
        np.savetxt(path, data, fmt="%.17g", delimiter=",",
                   header=",".join(cols + ["norm", "ell"]), comments="")

    def write_metadata(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.metadata(), fh, indent=2, sort_keys=True)
            fh.write("\n")


def extract_field(H: SparseOperator, eigvec, energy: float, residual: float = 0.0) -> GroundStateField:
    """Reshape, normalise and sign-fix an eigenvector; raises PositivityViolation if some ℓ ≤ 0."""
    cell = float(np.prod(H.grid.h))
    n_in = H.dim // H.fock_dim
    c = np.asarray(eigvec, float).reshape(n_in, H.fock_dim)
    c = c / math.sqrt(float(np.sum(c**2)) * cell)
    if np.sum(c[:, 0]) < 0:
        c = -c
    gs = GroundStateField(H.grid, c, float(energy), H.basis, H.coupling, float(residual))
    bad = np.flatnonzero(c[:, 0] <= 0)
    if bad.size:
        raise PositivityViolation(
            f"vacuum overlap nonpositive at {bad.size} node(s), e.g. x = {gs.nodes[bad[0]].tolist()}")
    return gs


def solve_ground_state(H: SparseOperator, tol: float = 1e-8, seed: int = 0) -> GroundStateField:
    E, psi, res = ground_state(H, tol=tol, seed=seed)
    return extract_field(H, psi, E, res)


def number_weighted_norm(gs: GroundStateField, x=None, r: float = 1.0):
    """‖e^{r·dΓ(1)}Φ(x)‖; at one node (nearest to x) or per interior node when x is None."""
    if r < 0:
        raise ValueError("r must be nonnegative")
    if gs.basis is None:
        w = np.ones(gs.fock_dim)
    else:
        w = np.exp(r * gs.basis.total_number())
    vals = np.linalg.norm(gs.coefficients * w, axis=1)
    if x is None:
        return vals
    return float(vals[gs.node_index(x)])


def number_localization_constant(gs: GroundStateField, r: float = 1.0, delta: float = 0.5,
                                 window=None) -> float:
    """sup over the window of ‖e^{r dΓ(1)}Φ(x)‖ / ‖Φ(x)‖^δ."""
    weighted = number_weighted_norm(gs, None, r)
    norms = gs.norms
    mask = norms > 0
    if window is not None:
        rad = np.linalg.norm(gs.nodes, axis=1)
        mask &= (rad >= window[0]) & (rad <= window[1])
    return float(np.max(weighted[mask] / norms[mask] ** delta))


def renormalization_energy(Lambda: float, g: float, nu: float, eta=None,
                           epsabs: float = 1e-13, epsrel: float = 1e-13) -> float:
    """g² ∫_{|k|<Λ} η(k)² / (ω(k)(ω(k) + |k|²/2)) dk for radial η, ω = √(k² + ν²)."""
    if not Lambda > 0:
        raise ValueError("cutoff must be positive")
    if g == 0:
        return 0.0
    eta = (lambda k: 1.0) if eta is None else eta

    def integrand(k):
        om = math.sqrt(k * k + nu * nu)
        if om == 0.0:
            return 0.0 if k == 0 else 4 * math.pi * k / (1 + k / 2)
        return 4 * math.pi * k * k * eta(k) ** 2 / (om * (om + 0.5 * k * k))

    val, err, info = integrate.quad(integrand, 0.0, Lambda, epsabs=epsabs, epsrel=epsrel,
                                    limit=500, full_output=1)[:3]
    if err > max(1e-9, 1e-9 * abs(val)):
        raise QuadratureFailure(f"renormalisation integral error estimate {err:.2e}")
    return g * g * val


def field_bound_ratio(basis: FockBasis, f) -> float:
    """max over basis vectors Φ of ‖φ(f)Φ‖ / (2‖f/√(ω∧1)‖·‖(1+dΓ(ω))^{1/2}Φ‖)."""
    f = np.atleast_1d(np.asarray(f, float))
    scale = np.max(np.abs(f))
    if scale == 0:
        raise ValueError("field_bound_ratio needs a nonzero f")
    f = f / scale  # ratio is scale-free; avoids underflow for tiny f
    phi = basis.field_operator(f)
    col = np.sqrt(np.asarray(phi.multiply(phi).sum(axis=0)).ravel())
    rhs = 2 * np.linalg.norm(f / np.sqrt(np.minimum(basis.omega, 1.0))) * np.sqrt(
        1 + basis.field_energy())
    return float(np.max(col / rhs))


def truncation_convergence(grid: GridSpec, p: Potential, basis: FockBasis, g: float,
                           step: int = 2, tol_energy: float = 1e-4, tol_norm: float = 1e-3,
                           seed: int = 0, floor: float = 1e-10):
    """Compare ground states at n_max and n_max + step.

    Returns (gs, gs_bigger, report). The relative ‖Φ(x)‖ change is taken
    over nodes where ‖Φ(x)‖ ≥ floor · max‖Φ‖.
    """
    gs = solve_ground_state(build_nelson_toy(grid, p, basis, g), seed=seed)
    bigger = FockBasis(basis.k, basis.eta, basis.nu, int(basis.n_max) + step)
    gs2 = solve_ground_state(build_nelson_toy(grid, p, bigger, g), seed=seed)
    n1, n2 = gs.norms, gs2.norms
    mask = n2 >= floor * n2.max()
    dE = abs(gs.energy - gs2.energy)
    dn = float(np.max(np.abs(n1[mask] - n2[mask]) / n2[mask]))
    report = {"n_max": int(basis.n_max), "n_max_check": int(bigger.n_max),
              "E_g": gs.energy, "E_g_check": gs2.energy, "delta_E": dE,
              "max_rel_norm_change": dn,
              "passed": bool(dE <= tol_energy and dn <= tol_norm)}
    return gs, gs2, report
