"""Command-line runner: ``agmonlab {agmon,spectral,mc,verify,schema-dump}``.

Exit codes: 0 success, 1 configuration or I/O error, 2 numerical failure,
3 a configured assertion failed.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
import warnings
from pathlib import Path

import numpy as np

from . import bounds, config, spectral, stochastic
from .agmon import distance, paths
from .errors import ConfigError, DimensionOverflow, NoConvergence, NumericalError
from .fields import GridSpec, discretize, thickened

log = logging.getLogger("agmonlab")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_ASSERT = 0, 1, 2, 3


# ---------------------------------------------------------------------------
# output helpers


def _clean(obj):
    """Make an object JSON-safe: numpy scalars to Python, non-finite floats to null."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    return obj


def write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(_clean(obj), indent=2, sort_keys=True, allow_nan=False) + "\n")


def write_rows(path: Path, rows: list) -> None:
    """CSV from a list of flat dicts sharing keys; floats at 17 significant digits."""
    if not rows:
        path.write_text("")
        return
    keys = list(rows[0])

    def fmt(v):
        if isinstance(v, (float, np.floating)):
            return "%.17g" % v
        return str(v)

    lines = [",".join(keys)] + [",".join(fmt(r[k]) for k in keys) for r in rows]
    path.write_text("\n".join(lines) + "\n")


def _grid_dict(g: GridSpec) -> dict:
    return {"lo": list(g.lo), "hi": list(g.hi), "h": list(g.h), "shape": list(g.shape)}


def _point(x, d: int) -> np.ndarray:
    """A coordinate list, or a bare number read as a distance along the first axis."""
    if isinstance(x, (int, float)):
        v = np.zeros(d)
        v[0] = x
        return v
    return np.asarray(x, float)


# ---------------------------------------------------------------------------
# ground-state storage (one JSON header line, then float64 coefficients)


def save_ground_state(gs: spectral.GroundStateField, path: Path) -> None:
    head = {"grid": _grid_dict(gs.grid), "energy": gs.energy, "residual": gs.residual,
            "coupling": gs.coupling, "phase": gs.phase,
            "basis": None if gs.basis is None else {
                "k": list(gs.basis.k), "eta": list(gs.basis.eta), "nu": gs.basis.nu,
                "n_max": int(gs.basis.n_max)},
            "shape": list(gs.coefficients.shape), "dtype": "<f8"}
    with open(path, "wb") as fh:
        fh.write(json.dumps(head, sort_keys=True).encode() + b"\n")
        fh.write(np.ascontiguousarray(gs.coefficients, "<f8").tobytes())


def load_ground_state(path) -> spectral.GroundStateField:
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise ConfigError(f"cannot read ground-state file {path}: {exc.strerror}") from exc
    try:
        cut = raw.index(b"\n")
        head = json.loads(raw[:cut])
        g = head["grid"]
        grid = GridSpec(tuple(g["lo"]), tuple(g["hi"]), tuple(g["h"]))
        coef = np.frombuffer(raw[cut + 1:], "<f8").reshape(head["shape"]).copy()
        b = head["basis"]
        basis = None if b is None else spectral.FockBasis(tuple(b["k"]), tuple(b["eta"]),
                                                          b["nu"], b["n_max"])
    except (ValueError, KeyError) as exc:
        raise ConfigError(f"{path}: not a ground-state file ({exc})") from exc
    return spectral.GroundStateField(grid, coef, head["energy"], basis, head["coupling"],
                                     head["residual"], head["phase"])


# ---------------------------------------------------------------------------
# pipelines


def _distance_fields(cfg: config.ExperimentConfig, p, grid, v):
    a = cfg.agmon
    out = {}
    init = a.init_radius or None
    if "fast-marching" in a.solvers:
        out["fmm"] = distance.solve_eikonal(v, init_radius=init, potential=p.name)
    if "dijkstra-oracle" in a.solvers:
        out["dijkstra"] = distance.dijkstra_oracle(v, stencil_radius=a.stencil_radius or None,
                                                   potential=p.name)
    return out


def _export_field(f: distance.DistanceField, out: Path, stem: str, binary: bool) -> None:
    f.to_csv(out / f"{stem}.csv")
    if binary:
        f.to_binary(out / f"{stem}.bin")


def run_agmon(cfg: config.ExperimentConfig, out: Path) -> int:
    p, grid = cfg.build_potential(), cfg.build_grid()
    a = cfg.agmon
    v = discretize(p, grid)
    fields = _distance_fields(cfg, p, grid, v)
    for name, f in fields.items():
        _export_field(f, out, f"rho_{name}", cfg.output.binary)
    report = {"potential": p.name, "grid": _grid_dict(grid), "solvers": list(fields)}
    primary = fields.get("fmm") or fields.get("dijkstra")
    if "fmm" in fields and "dijkstra" in fields:
        gap = distance.oracle_gap(fields["fmm"], fields["dijkstra"])
        gap["within_tol"] = gap["maxnorm"] <= a.gap_tol and gap["pointwise"] <= a.gap_tol
        report["oracle_gap"] = gap
    if "fmm" in fields:
        res = distance.eikonal_residual(fields["fmm"], v)
        report["eikonal_residual"] = {"median": float(np.median(res)) if res.size else None,
                                      "max": float(res.max()) if res.size else None,
                                      "nodes": int(res.size)}
    report["lower_bound_violation"] = distance.lower_bound_violation(primary, v)
    report["lipschitz_excess"] = distance.lipschitz_excess(primary, v)
    if a.thickened:
        pc = thickened(p)
        vc = discretize(pc, grid)
        rc = distance.solve_eikonal(vc, init_radius=a.init_radius or None, potential=pc.name,
                                    thickened=True)
        _export_field(rc, out, "rho_circ_fmm", cfg.output.binary)
    opts = paths.PathOptions(n_interior=a.path_nodes, max_iter=a.path_max_iter, tol=a.path_tol)
    queries = []
    for qx in a.query_points:
        x = _point(qx, grid.dimension)
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            q, gamma = paths.minimize_action(p, x, opts)
            clear = paths.check_clearance(gamma, grid)
        for w in caught:
            log.warning("%s", w.message)
        row = {"x": x.tolist(), "length": gamma.length, "action": q.action, "T": q.T,
               "jacobi_rel": abs(q.action - gamma.length) / gamma.length if gamma.length else 0.0,
               "sweeps": gamma.iterations, "clear_of_boundary": clear}
        for name, f in fields.items():
            row[f"rho_{name}"] = float(f.interpolate(x[None, :])[0])
        if np.linalg.norm(x) >= a.R1 and primary is not None:
            bound = paths.travel_time_bound(p, x, a.R0, a.R1, primary, rho_x=gamma.length)
            row["travel_time_bound"] = bound
            row["bound_holds"] = bool(q.T <= bound)
        queries.append(row)
    report["queries"] = queries
    write_json(out / "agmon_report.json", report)
    return EXIT_OK


def build_ground_state(cfg: config.ExperimentConfig, p, grid):
    """Ground state of the configured model; returns (gs, truncation report or None)."""
    s = cfg.spectral
    seed = cfg.run.seed
    if s.model == "schrodinger":
        H = spectral.build_schrodinger(discretize(p, grid))
        return spectral.solve_ground_state(H, tol=s.tol, seed=seed), None
    if grid.dimension != 1:
        raise ConfigError("spectral.model = 'nelson' needs potential.dimension = 1")
    basis = spectral.FockBasis(tuple(s.k), tuple(s.eta), s.nu, s.n_max)
    spectral.build_nelson_toy(grid, p, basis, s.g, cap=s.cap)  # dimension check up front
    bigger = (grid.shape[0] - 2) * (s.n_max + 1 + s.truncation_step) ** basis.K
    if bigger > s.cap:
        raise DimensionOverflow(f"truncation check needs {bigger} states > cap {s.cap}")
    gs, _, rep = spectral.truncation_convergence(grid, p, basis, s.g, step=s.truncation_step,
                                                 tol_energy=s.energy_tol, tol_norm=s.norm_tol,
                                                 seed=seed)
    return gs, rep


def run_spectral(cfg: config.ExperimentConfig, out: Path) -> int:
    p, grid = cfg.build_potential(), cfg.build_grid()
    gs, rep = build_ground_state(cfg, p, grid)
    gs.to_csv(out / "ground_state.csv")
    meta = gs.metadata()
    meta["model"] = cfg.spectral.model
    meta["chi_1"] = gs.chi(1.0)
    meta["sup_norm"] = gs.sup_norm()
    meta["truncation"] = rep
    write_json(out / "ground_state.json", meta)
    save_ground_state(gs, out / "ground_state.bin")
    if rep is not None and not rep["passed"]:
        raise NoConvergence("ground state not converged in the Fock truncation "
                            f"(dE = {rep['delta_E']:.2e}, dnorm = {rep['max_rel_norm_change']:.2e})")
    return EXIT_OK


def run_mc(cfg: config.ExperimentConfig, out: Path) -> int:
    m, seed = cfg.mc, cfg.run.seed
    mc = stochastic.McConfig(dt=m.dt, paths=m.paths, seed=seed, dimension=m.dimension)
    records = []
    tau = stochastic.dirichlet_tau(m.dimension)
    records.append({"tag": "dirichlet_tau", "value": tau, "d": m.dimension})
    q = stochastic.straight_timed_path(m.tube_point, m.T)
    check = stochastic.girsanov_check(q, mc, m.tube_radius)
    ball = check.ball
    records.append(ball.record())
    records.append({"tag": "ball_rate", "value": -math.log(ball.value) / m.T if ball.value > 0
                    else None, "tau": tau, "T": m.T})
    records.append(check.tube.record())
    records.append({"tag": "girsanov", "factor": check.factor, "rhs": check.rhs,
                    "lhs": check.tube.value, "holds": check.holds()})
    # scalar Feynman-Kac and certificates use the configured potential at g = 0
    p, grid = cfg.build_potential(), cfg.build_grid()
    d = p.dimension
    gs = spectral.solve_ground_state(spectral.build_schrodinger(discretize(p, grid)),
                                     seed=seed)
    psi = gs.as_scalar_field("ell")
    fk_cfg = stochastic.McConfig(dt=m.dt, paths=m.fk_paths, seed=seed, dimension=d)
    for x in m.fk_points:
        xv = _point(x, d)
        est = stochastic.fk_ground_state(p, xv, m.fk_T, gs.energy, psi, fk_cfg)
        rec = est.record()
        rec["psi_grid"] = float(psi.interpolate(xv[None, :])[0])
        rec["z_score"] = (est.value - rec["psi_grid"]) / est.stderr if est.stderr else 0.0
        records.append(rec)
    alpha = stochastic.alpha_from_ground_state(gs)
    tau_d = stochastic.dirichlet_tau(d)
    vc = thickened(p)
    for x in m.certificate_points:
        xv = _point(x, d)
        path, _ = paths.minimize_action(vc, xv)
        ell = float(psi.interpolate(xv[None, :])[0])
        for pe in m.p_values:
            ci = stochastic.CertificateInput(tuple(xv), path, pe, alpha, tau_d, gs.energy)
            val = stochastic.certificate_value(ci, vc)
            records.append({"tag": "certificate", "x": xv.tolist(), "p": pe, "value": val,
                            "ell_grid": ell, "holds": bool(val <= ell), "certified": True,
                            "alpha": alpha, "tau": tau_d, "T": path.T})
    write_json(out / "mc_estimates.json", records)
    return EXIT_OK


def run_verify(cfg: config.ExperimentConfig, out: Path) -> int:
    p, grid = cfg.build_potential(), cfg.build_grid()
    v = cfg.verify
    if v.ground_state:
        gs = load_ground_state(v.ground_state)
        if gs.grid != grid:
            raise ConfigError("verify.ground_state: stored grid differs from [grid]")
    else:
        gs, _ = build_ground_state(cfg, p, grid)
    init = cfg.agmon.init_radius or None
    rho = distance.solve_eikonal(discretize(p, grid), init_radius=init, potential=p.name)
    pc = thickened(p)
    rho_c = distance.solve_eikonal(discretize(pc, grid), init_radius=init, potential=pc.name,
                                   thickened=True)
    prof = bounds.build_profile(gs, rho, rho_c)
    prof.to_csv(out / "profile.csv")
    checks = {}
    checks["ell_positive"] = bool(np.all(gs.ell > 0))
    checks["cauchy_schwarz"] = bool(np.all(gs.ell <= gs.norms * (1 + 1e-12)))
    fits = []
    for e in v.eps:
        fit = bounds.fit_sandwich(prof, e, tuple(v.window))
        row = fit.as_dict()
        row["sandwich_holds"] = bounds.sandwich_holds(prof, fit)
        fits.append(row)
        checks[f"fit_eps_{e!r}"] = fit.passed
        checks[f"sandwich_eps_{e!r}"] = row["sandwich_holds"]
    write_json(out / "sandwich.json", fits)
    table = bounds.asymptotic_matching(rho, rho_c, v.match_radii)
    write_rows(out / "matching.csv", table)
    checks["matching_ge_1"] = all(r["ratio_min"] >= 1 - 1e-12 for r in table)
    report = {"potential": p.name, "grid": _grid_dict(grid), "E_g": gs.energy,
              "model": cfg.spectral.model, "fits": fits, "matching": table}
    if gs.basis is not None:
        const = spectral.number_localization_constant(gs, v.number_r, v.number_delta,
                                                      tuple(v.window))
        report["number_localization_constant"] = const
        checks["number_localization_finite"] = bool(math.isfinite(const))
    if p.envelope is not None:
        env = bounds.envelope_bracket(prof, p.envelope, tuple(v.window))
        report["envelope_bracket"] = env
        checks["envelope_bracket"] = env["holds"]
    report["checks"] = checks
    report["passed"] = all(checks.values())
    write_json(out / "verify_report.json", report)
    for k, ok in checks.items():
        log.info("%-28s %s", k, "pass" if ok else "FAIL")
    return EXIT_OK if report["passed"] else EXIT_ASSERT


COMMANDS = {"agmon": run_agmon, "spectral": run_spectral, "mc": run_mc, "verify": run_verify}


# ---------------------------------------------------------------------------
# entry point


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="TOML experiment file (defaults if omitted)")
    common.add_argument("--out", type=Path, help="output directory (overrides output.dir)")
    common.add_argument("--seed", type=int, help="random seed (overrides run.seed)")
    common.add_argument("--threads", type=int, help="worker threads (overrides run.threads)")
    common.add_argument("-v", "--verbose", action="store_true")
    ap = argparse.ArgumentParser(prog="agmonlab", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)
    for name in (*COMMANDS, "schema-dump"):
        sub.add_parser(name, parents=[common])
    return ap


def _set_threads(n: int) -> None:
    import numba
    # the compiled kernels are serial; workqueue avoids probing optional backends
    numba.config.THREADING_LAYER = "workqueue"
    numba.set_num_threads(max(1, min(n, numba.config.NUMBA_NUM_THREADS)))


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        if args.command == "schema-dump":
            text = config.reference_config()
            if args.out:
                args.out.mkdir(parents=True, exist_ok=True)
                (args.out / "reference.toml").write_text(text)
            sys.stdout.write(text)
            return EXIT_OK
        cfg = config.load(args.config) if args.config else config.ExperimentConfig()
        if args.seed is not None:
            cfg.run.seed = args.seed
        if args.threads is not None:
            cfg.run.threads = args.threads
        config.validate(cfg)
        _set_threads(cfg.run.threads)
        out = args.out or Path(cfg.output.dir)
        out.mkdir(parents=True, exist_ok=True)
        return COMMANDS[args.command](cfg, out)
    except ConfigError as exc:
        print(f"agmonlab: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"agmonlab: I/O error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as exc:
        print(f"agmonlab: numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
