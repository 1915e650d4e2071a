"""Experiment configuration: a TOML file with one table per pipeline stage.

Every key has an explicit default (see ``reference_config``). Unknown
sections or keys are rejected, and every value is validated before any
computation starts.
"""

from __future__ import annotations

import dataclasses
import sys
from dataclasses import dataclass, field
from pathlib import Path

import tomli_w

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .errors import ConfigError
from .fields import PRESETS, GridSpec, Potential, build_potential


@dataclass
class RunSection:
    seed: int = 0
    threads: int = 1


@dataclass
class PotentialSection:
    name: str = "harmonic"
    dimension: int = 1
    value: float = 1.0
    coefficients: list = field(default_factory=list)
    terms: list = field(default_factory=list)
    envelope: dict = field(default_factory=dict)


@dataclass
class GridSection:
    lo: float = -10.0
    hi: float = 10.0
    h: float = 0.01


@dataclass
class AgmonSection:
    solvers: list = field(default_factory=lambda: ["fast-marching", "dijkstra-oracle"])
    stencil_radius: int = 0
    init_radius: float = 0.0
    thickened: bool = True
    query_points: list = field(default_factory=lambda: [1.0, 2.0, 4.0])
    path_nodes: int = 128
    path_tol: float = 1e-10
    path_max_iter: int = 2000
    R0: float = 1.0
    R1: float = 2.0
    gap_tol: float = 0.03


@dataclass
class SpectralSection:
    model: str = "nelson"
    k: list = field(default_factory=lambda: [1.0])
    eta: list = field(default_factory=lambda: [1.0])
    nu: float = 1.0
    n_max: int = 8
    g: float = 0.2
    tol: float = 1e-8
    truncation_step: int = 2
    energy_tol: float = 1e-4
    norm_tol: float = 1e-3
    cap: int = 5_000_000


@dataclass
class McSection:
    dt: float = 1e-3
    paths: int = 1_000_000
    dimension: int = 3
    T: float = 1.0
    tube_point: list = field(default_factory=lambda: [1.0, 0.0, 0.0])
    tube_radius: float = 1.0
    fk_points: list = field(default_factory=lambda: [0.0, 1.0, 2.0])
    fk_T: float = 1.0
    fk_paths: int = 100_000
    certificate_points: list = field(default_factory=lambda: [1.0, 2.0, 3.0])
    p_values: list = field(default_factory=lambda: [1.05, 1.5, 3.0])


@dataclass
class VerifySection:
    eps: list = field(default_factory=lambda: [0.3])
    window: list = field(default_factory=lambda: [2.0, 6.0])
    match_radii: list = field(default_factory=lambda: [2.0, 4.0, 8.0])
    ground_state: str = ""
    number_r: float = 1.0
    number_delta: float = 0.5


@dataclass
class OutputSection:
    dir: str = "out"
    binary: bool = True


SECTIONS = {
    "run": RunSection,
    "potential": PotentialSection,
    "grid": GridSection,
    "agmon": AgmonSection,
    "spectral": SpectralSection,
    "mc": McSection,
    "verify": VerifySection,
    "output": OutputSection,
}


@dataclass
class ExperimentConfig:
    run: RunSection = field(default_factory=RunSection)
    potential: PotentialSection = field(default_factory=PotentialSection)
    grid: GridSection = field(default_factory=GridSection)
    agmon: AgmonSection = field(default_factory=AgmonSection)
    spectral: SpectralSection = field(default_factory=SpectralSection)
    mc: McSection = field(default_factory=McSection)
    verify: VerifySection = field(default_factory=VerifySection)
    output: OutputSection = field(default_factory=OutputSection)
    source: str = ""

    # -- derived objects -------------------------------------------------

    def build_potential(self) -> Potential:
        p = self.potential
        params = {}
        if p.name == "constant":
            params["value"] = p.value
        elif p.name == "radial_polynomial":
            params["coefficients"] = p.coefficients
        elif p.name == "coordinate_polynomial":
            params["terms"] = p.terms
        if p.envelope:
            params["envelope"] = dict(p.envelope)
        try:
            return build_potential(p.name, p.dimension, **params)
        except (ValueError, TypeError, KeyError) as exc:
            raise ConfigError(f"potential: {exc}") from exc

    def build_grid(self) -> GridSpec:
        d = self.potential.dimension
        lo, hi, h = (_vector(getattr(self.grid, k), d, f"grid.{k}") for k in ("lo", "hi", "h"))
        try:
            return GridSpec(tuple(lo), tuple(hi), tuple(h))
        except ValueError as exc:
            raise ConfigError(f"grid: {exc}") from exc

    def as_dict(self) -> dict:
        return {name: dataclasses.asdict(getattr(self, name)) for name in SECTIONS}


def _vector(v, d: int, key: str) -> list:
    vals = list(v) if isinstance(v, (list, tuple)) else [v] * d
    if len(vals) != d:
        raise ConfigError(f"{key}: expected {d} values, got {len(vals)}")
    return [float(x) for x in vals]


def _check_type(key: str, default, value):
    if isinstance(default, bool):
        ok = isinstance(value, bool)
    elif isinstance(default, int):
        ok = isinstance(value, int) and not isinstance(value, bool)
    elif isinstance(default, float):
        ok = isinstance(value, (int, float)) and not isinstance(value, bool)
        if ok:
            value = float(value) if not isinstance(value, list) else value
    elif isinstance(default, str):
        ok = isinstance(value, str)
    elif isinstance(default, list):
        ok = isinstance(value, list)
    elif isinstance(default, dict):
        ok = isinstance(value, dict)
    else:
        ok = True
    # grid bounds and spacing also accept per-axis lists
    if not ok and key.startswith("grid.") and isinstance(value, list):
        ok = True
    if not ok:
        raise ConfigError(f"{key}: expected {type(default).__name__}, got {value!r}")
    return value


def from_dict(data: dict, source: str = "") -> ExperimentConfig:
    cfg = ExperimentConfig(source=source)
    for name, table in data.items():
        if name not in SECTIONS:
            raise ConfigError(f"unknown section [{name}]")
        if not isinstance(table, dict):
            raise ConfigError(f"[{name}] must be a table")
        section = getattr(cfg, name)
        known = {f.name for f in dataclasses.fields(section)}
        for key, value in table.items():
            if key not in known:
                raise ConfigError(f"unknown key '{name}.{key}'")
            default = getattr(section, key)
            setattr(section, key, _check_type(f"{name}.{key}", default, value))
    validate(cfg)
    return cfg


def load(path) -> ExperimentConfig:
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from exc
    try:
        data = tomllib.loads(raw.decode())
    except (tomllib.TOMLDecodeError, UnicodeDecodeError) as exc:
        raise ConfigError(f"{path}: not valid TOML: {exc}") from exc
    return from_dict(data, str(path))


def _positive(key: str, v) -> None:
    vals = v if isinstance(v, list) else [v]
    for x in vals:
        if not (isinstance(x, (int, float)) and x > 0):
            raise ConfigError(f"{key} must be positive, got {v!r}")


def validate(cfg: ExperimentConfig) -> None:
    """Check every parameter; raises ConfigError naming the first bad key."""
    if cfg.potential.dimension not in (1, 2, 3):
        raise ConfigError("potential.dimension must be 1, 2 or 3")
    known = set(PRESETS) | {"radial_polynomial", "coordinate_polynomial"}
    if cfg.potential.name not in known:
        raise ConfigError(f"potential.name: unknown potential {cfg.potential.name!r}")
    _positive("grid.h", cfg.grid.h)
    cfg.build_grid()
    cfg.build_potential()
    a = cfg.agmon
    for s in a.solvers:
        if s not in ("fast-marching", "dijkstra-oracle"):
            raise ConfigError(f"agmon.solvers: unknown solver {s!r}")
    if a.stencil_radius < 0:
        raise ConfigError("agmon.stencil_radius must be >= 0 (0 selects the default)")
    if a.init_radius < 0:
        raise ConfigError("agmon.init_radius must be >= 0 (0 selects the default)")
    for q in a.query_points:
        # a bare number is a distance along the first axis
        if isinstance(q, list) and len(q) != cfg.potential.dimension:
            raise ConfigError(f"agmon.query_points: {q!r} does not have "
                              f"{cfg.potential.dimension} coordinates")
        if not isinstance(q, (list, int, float)) or isinstance(q, bool):
            raise ConfigError(f"agmon.query_points: bad entry {q!r}")
    _positive("agmon.path_nodes", a.path_nodes)
    _positive("agmon.path_tol", a.path_tol)
    _positive("agmon.path_max_iter", a.path_max_iter)
    _positive("agmon.gap_tol", a.gap_tol)
    if not a.R1 > a.R0 > 0:
        raise ConfigError("agmon.R0, agmon.R1: need R1 > R0 > 0")
    s = cfg.spectral
    if s.model not in ("schrodinger", "nelson"):
        raise ConfigError(f"spectral.model: expected 'schrodinger' or 'nelson', got {s.model!r}")
    if len(s.eta) not in (1, len(s.k)) or not s.k:
        raise ConfigError("spectral.eta: need one weight or one per mode in spectral.k")
    if s.nu < 0:
        raise ConfigError("spectral.nu must be >= 0")
    if s.n_max < 0:
        raise ConfigError("spectral.n_max must be >= 0")
    if any(k == 0 for k in s.k) and s.nu == 0:
        raise ConfigError("spectral.k: a k = 0 mode needs spectral.nu > 0")
    _positive("spectral.tol", s.tol)
    _positive("spectral.cap", s.cap)
    m = cfg.mc
    _positive("mc.dt", m.dt)
    _positive("mc.paths", m.paths)
    _positive("mc.fk_paths", m.fk_paths)
    _positive("mc.T", m.T)
    _positive("mc.fk_T", m.fk_T)
    _positive("mc.tube_radius", m.tube_radius)
    if m.dimension not in (1, 2, 3):
        raise ConfigError("mc.dimension must be 1, 2 or 3")
    if len(m.tube_point) != m.dimension:
        raise ConfigError("mc.tube_point must have mc.dimension entries")
    for p in m.p_values:
        if not p > 1:
            raise ConfigError(f"mc.p_values: Hölder exponents must exceed 1, got {p!r}")
    v = cfg.verify
    _positive("verify.eps", v.eps)
    if len(v.window) != 2 or not 0 <= v.window[0] < v.window[1]:
        raise ConfigError("verify.window must be [lo, hi] with 0 <= lo < hi")
    if v.number_r < 0:
        raise ConfigError("verify.number_r must be >= 0")
    if cfg.run.threads < 1:
        raise ConfigError("run.threads must be >= 1")


def reference_config() -> str:
    """TOML text with every key at its default value."""
    return tomli_w.dumps(ExperimentConfig().as_dict())
