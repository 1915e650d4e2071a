import json
import math
import sys

import pytest

from agmonlab import cli, config
from agmonlab.errors import ConfigError

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib


def write(tmp_path, text, name="cfg.toml"):
    path = tmp_path / name
    path.write_text(text)
    return path


def run(*args):
    return cli.main([str(a) for a in args])


SMALL_1D = """
[grid]
lo = -8.0
hi = 8.0
h = 0.02
"""


# -- configuration -------------------------------------------------------------------

def test_schema_dump_roundtrip(capsys):
    assert run("schema-dump") == 0
    text = capsys.readouterr().out
    cfg = config.from_dict(tomllib.loads(text))
    assert cfg.as_dict() == config.ExperimentConfig().as_dict()


def test_unknown_key_rejected(tmp_path, capsys):
    path = write(tmp_path, "[agmon]\nfoo = 1\n")
    assert run("agmon", "--config", path, "--out", tmp_path / "o") == 1
    assert "agmon.foo" in capsys.readouterr().err


def test_unknown_section_rejected():
    with pytest.raises(ConfigError, match="bogus"):
        config.from_dict({"bogus": {}})


def test_negative_h_exit_1(tmp_path, capsys):
    path = write(tmp_path, "[grid]\nh = -0.05\n")
    assert run("agmon", "--config", path, "--out", tmp_path / "o") == 1
    assert "grid.h" in capsys.readouterr().err


def test_wrong_type_names_key():
    with pytest.raises(ConfigError, match="spectral.n_max"):
        config.from_dict({"spectral": {"n_max": "eight"}})


def test_missing_config_exit_1(tmp_path):
    assert run("verify", "--config", tmp_path / "nope.toml", "--out", tmp_path / "o") == 1


def test_invalid_toml_exit_1(tmp_path):
    path = write(tmp_path, "[grid\nh = 1")
    assert run("verify", "--config", path, "--out", tmp_path / "o") == 1


def test_missing_ground_state_file_exit_1(tmp_path):
    path = write(tmp_path, SMALL_1D + f'\n[verify]\nground_state = "{tmp_path / "none.bin"}"\n')
    assert run("verify", "--config", path, "--out", tmp_path / "o") == 1


@pytest.mark.parametrize("table,key", [
    ("[mc]\np_values = [1.0]", "mc.p_values"),
    ("[verify]\nwindow = [6.0, 2.0]", "verify.window"),
    ("[spectral]\nmodel = 'dirac'", "spectral.model"),
    ("[agmon]\nsolvers = ['euler']", "agmon.solvers"),
    ("[potential]\ndimension = 4", "potential.dimension"),
])
def test_validation_messages(table, key):
    with pytest.raises(ConfigError, match=key.replace(".", r"\.")):
        config.from_dict(tomllib.loads(table))


# -- verify ---------------------------------------------------------------------------

def test_verify_default_passes(tmp_path):
    assert run("verify", "--out", tmp_path) == 0
    rep = json.loads((tmp_path / "verify_report.json").read_text())
    assert rep["passed"]
    assert rep["E_g"] == pytest.approx(1.4744, abs=1e-3)
    assert math.isfinite(rep["number_localization_constant"])
    for name in ("profile.csv", "sandwich.json", "matching.csv"):
        assert (tmp_path / name).exists()


def test_verify_harmonic_schrodinger(tmp_path):
    path = write(tmp_path, '[spectral]\nmodel = "schrodinger"\n')
    assert run("verify", "--config", path, "--out", tmp_path / "o") == 0


def test_verify_tight_eps_exit_3(tmp_path):
    path = write(tmp_path, '[spectral]\nmodel = "schrodinger"\n[verify]\neps = [0.01]\n')
    assert run("verify", "--config", path, "--out", tmp_path / "o") == 3
    rep = json.loads((tmp_path / "o" / "verify_report.json").read_text())
    assert rep["checks"]["fit_eps_0.01"] is False


def test_verify_deterministic(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert run("verify", "--out", a, "--seed", 5) == 0
    assert run("verify", "--out", b, "--seed", 5) == 0
    files = sorted(p.name for p in a.iterdir())
    assert files == sorted(p.name for p in b.iterdir())
    for name in files:
        assert (a / name).read_bytes() == (b / name).read_bytes(), name


def test_spectral_then_verify_from_file(tmp_path):
    path = write(tmp_path, SMALL_1D)
    assert run("spectral", "--config", path, "--out", tmp_path / "s") == 0
    meta = json.loads((tmp_path / "s" / "ground_state.json").read_text())
    assert meta["truncation"]["passed"]
    gs_file = tmp_path / "s" / "ground_state.bin"
    path2 = write(tmp_path, SMALL_1D + f'\n[verify]\nground_state = "{gs_file}"\n', "v.toml")
    assert run("verify", "--config", path2, "--out", tmp_path / "v") == 0
    assert run("verify", "--config", path, "--out", tmp_path / "w") == 0
    for name in ("profile.csv", "sandwich.json"):
        assert (tmp_path / "v" / name).read_bytes() == (tmp_path / "w" / name).read_bytes()


def test_ground_state_roundtrip(tmp_path, nelson_k1):
    cli.save_ground_state(nelson_k1, tmp_path / "g.bin")
    back = cli.load_ground_state(tmp_path / "g.bin")
    assert back.grid == nelson_k1.grid and back.energy == nelson_k1.energy
    assert (back.coefficients == nelson_k1.coefficients).all()
    assert back.basis.n_max == nelson_k1.basis.n_max


def test_spectral_dimension_overflow_exit_2(tmp_path):
    path = write(tmp_path, "[spectral]\nn_max = 40\ncap = 10000\n")
    assert run("spectral", "--config", path, "--out", tmp_path / "o") == 2


# -- agmon and mc ----------------------------------------------------------------------

def test_agmon_small_3d(tmp_path):
    path = write(tmp_path, """
[potential]
name = "radial_quadratic"
dimension = 3
[grid]
lo = -2.5
hi = 2.5
h = 0.1
[agmon]
query_points = [[1.0, 0.0, 0.0], [2.0, 0.0, 0.0]]
""")
    assert run("agmon", "--config", path, "--out", tmp_path / "o") == 0
    out = tmp_path / "o"
    rep = json.loads((out / "agmon_report.json").read_text())
    assert rep["oracle_gap"]["within_tol"]
    q1, q2 = rep["queries"]
    assert q1["rho_fmm"] == pytest.approx(1.6232, rel=1e-2)
    assert q1["length"] == pytest.approx(1.623225, abs=1e-3)
    assert q1["jacobi_rel"] <= 1e-3
    assert q2["bound_holds"]
    for stem in ("rho_fmm", "rho_dijkstra", "rho_circ_fmm"):
        assert (out / f"{stem}.csv").exists() and (out / f"{stem}.bin").exists()


def test_agmon_constant_gap(tmp_path):
    path = write(tmp_path, """
[potential]
name = "constant"
dimension = 2
[grid]
lo = -2.0
hi = 2.0
h = 0.05
[agmon]
query_points = [0.5]
""")
    assert run("agmon", "--config", path, "--out", tmp_path / "o") == 0
    rep = json.loads((tmp_path / "o" / "agmon_report.json").read_text())
    assert rep["oracle_gap"]["maxnorm"] <= 0.03
    assert rep["queries"][0]["rho_fmm"] == pytest.approx(math.sqrt(2) / 2, rel=1e-2)


MC_SMALL = """
[mc]
paths = 20000
fk_paths = 5000
fk_T = 0.5
"""


def test_mc_small(tmp_path):
    path = write(tmp_path, SMALL_1D + MC_SMALL)
    assert run("mc", "--config", path, "--out", tmp_path / "o") == 0
    recs = json.loads((tmp_path / "o" / "mc_estimates.json").read_text())
    tags = {r["tag"] for r in recs}
    assert {"dirichlet_tau", "ball_survival", "tube_probability", "girsanov", "fk_ground_state",
            "certificate"} <= tags
    assert all(r["holds"] for r in recs if r["tag"] == "certificate")
    assert all(abs(r["z_score"]) <= 4 for r in recs if r["tag"] == "fk_ground_state")


def test_mc_grid_exit_exit_2(tmp_path):
    path = write(tmp_path, "[grid]\nlo = -1.0\nhi = 1.0\nh = 0.02\n" + MC_SMALL
                 + "fk_points = [0.0]\n")
    assert run("mc", "--config", path, "--out", tmp_path / "o") == 2
