import math

import numpy as np
import pytest
from scipy import integrate

from agmonlab import fields
from agmonlab.agmon import distance
from agmonlab.errors import GridTooCoarse


def radial_oracle(r):
    """√2∫₀^r √(1 + s²) ds for V = 1 + |x|²."""
    return math.sqrt(2) * 0.5 * (r * math.sqrt(1 + r * r) + math.asinh(r))


def test_radial_oracle_against_quad():
    val = integrate.quad(lambda s: math.sqrt(2 * (1 + s * s)), 0, 1)[0]
    assert radial_oracle(1.0) == pytest.approx(val, abs=1e-12)
    assert radial_oracle(1.0) == pytest.approx(1.623225, abs=1e-6)


@pytest.fixture(scope="module")
def grid3():
    return fields.GridSpec.cube(1.5, 0.05, 3)


@pytest.fixture(scope="module")
def quad3(grid3):
    v = fields.discretize(fields.PRESETS["radial_quadratic"](3), grid3)
    return v, distance.solve_eikonal(v)


def test_fmm_constant_3d(grid3):
    v = fields.discretize(fields.constant(1.0, 3), grid3)
    rho = distance.solve_eikonal(v)
    assert rho.at((1.0, 0.0, 0.0)) == pytest.approx(math.sqrt(2), rel=2e-3)
    assert rho.at((0.0, 0.0, 0.0)) == 0.0


def test_fmm_quadratic_3d(quad3):
    _, rho = quad3
    assert rho.at((1.0, 0.0, 0.0)) == pytest.approx(radial_oracle(1.0), rel=1e-2)


def test_source_is_zero_any_potential(grid3):
    for name in fields.PRESETS:
        v = fields.discretize(fields.PRESETS[name](3), fields.GridSpec.cube(1.0, 0.1, 3))
        rho = distance.solve_eikonal(v, source=(0.2, -0.1, 0.0))
        assert rho.at((0.2, -0.1, 0.0)) == 0.0
        assert np.all(rho.values >= 0)


def test_dijkstra_1d_exact():
    g = fields.GridSpec((-2.0,), (2.0,), (0.05,))
    rho = distance.dijkstra_oracle(fields.discretize(fields.constant(1.0, 1), g))
    assert rho.at((1.0,)) == pytest.approx(math.sqrt(2), abs=1e-12)


def test_dijkstra_26_neighbour_diagonal():
    g = fields.GridSpec.cube(1.5, 0.1, 3)
    v = fields.discretize(fields.constant(1.0, 3), g)
    rho = distance.dijkstra_oracle(v, stencil_radius=1)
    assert rho.at((1.0, 1.0, 1.0)) == pytest.approx(math.sqrt(6), rel=2e-2)
    offs, _, _ = distance.stencil(1, 3)
    assert len(offs) == 26


def test_dijkstra_quadratic(quad3):
    v, _ = quad3
    rho = distance.dijkstra_oracle(v)
    assert rho.at((1.0, 0.0, 0.0)) == pytest.approx(1.6232, rel=2e-2)


def test_stencil_primitive():
    offs, corners, ncorn = distance.stencil(3, 2)
    for o in offs:
        assert math.gcd(*map(abs, o)) == 1
    assert len({tuple(o) for o in offs}) == len(offs)
    # midpoint cells of (1, 0) are the two endpoints' shared edge: 2 corners
    i = [k for k, o in enumerate(offs) if tuple(o) == (1, 0)][0]
    assert ncorn[i] == 2


def test_triangle_inequality_dijkstra():
    g = fields.GridSpec.cube(1.0, 0.1, 2)
    v = fields.discretize(fields.PRESETS["anisotropic"](2), g)
    a = distance.dijkstra_oracle(v)
    y = (0.5, -0.3)
    b = distance.dijkstra_oracle(v, source=y)
    # ρ(0, x) ≤ ρ(0, y) + ρ(y, x) holds exactly on a graph
    assert np.all(a.values <= a.at(y) + b.values + 1e-12)
    # symmetry ρ(0, y) = ρ(y, 0)
    assert a.at(y) == pytest.approx(b.at((0.0, 0.0)), abs=1e-12)


def test_export_roundtrip(tmp_path, quad3):
    _, rho = quad3
    rho.to_binary(tmp_path / "r.bin")
    back = distance.read_binary(tmp_path / "r.bin")
    np.testing.assert_array_equal(back.values, rho.values)
    assert back.grid == rho.grid
    assert back.source == rho.source
    rho.to_csv(tmp_path / "r.csv")
    data = np.loadtxt(tmp_path / "r.csv", delimiter=",", skiprows=1)
    np.testing.assert_array_equal(data[:, -1], rho.values.ravel())
    head = open(tmp_path / "r.csv").readline().strip()
    assert head == "x0,x1,x2,rho"


def test_causality_failure_raises(monkeypatch):
    g = fields.GridSpec.cube(1.0, 0.1, 2)
    v = fields.discretize(fields.constant(1.0, 2), g)
    real = distance._kernels.fast_march

    def broken(*args):
        u, _, acc = real(*args)
        return u, distance._kernels.FMM_CAUSALITY, acc

    monkeypatch.setattr(distance._kernels, "fast_march", broken)
    with pytest.raises(GridTooCoarse):
        distance.solve_eikonal(v)


def test_below_one_rejected():
    g = fields.GridSpec.cube(1.0, 0.1, 2)
    v = fields.ScalarField(g, np.full(g.size, 0.5))
    with pytest.raises(ValueError):
        distance.solve_eikonal(v)


def test_oracle_gap_self_zero(quad3):
    _, rho = quad3
    gap = distance.oracle_gap(rho, rho)
    assert gap["pointwise"] == 0.0 and gap["maxnorm"] == 0.0


# -- invariants over every preset (2D, h = 0.05) ------------------------------

@pytest.fixture(scope="module", params=sorted(fields.PRESETS))
def preset_fields(request):
    g = fields.GridSpec.cube(2.0, 0.05, 2)
    v = fields.discretize(fields.PRESETS[request.param](2), g)
    return request.param, v, distance.solve_eikonal(v), distance.dijkstra_oracle(v)


def test_preset_oracle_gap(preset_fields):
    _, _, fmm, dij = preset_fields
    gap = distance.oracle_gap(fmm, dij)
    assert gap["pointwise"] <= 0.03
    assert gap["maxnorm"] <= 0.03


def test_preset_eikonal_residual(preset_fields):
    _, v, fmm, _ = preset_fields
    res = distance.eikonal_residual(fmm, v)
    assert np.median(res) <= 0.05
    assert res.max() <= 0.10


def test_preset_lower_bound(preset_fields):
    _, v, fmm, dij = preset_fields
    assert distance.lower_bound_violation(fmm, v) <= 0
    assert distance.lower_bound_violation(dij, v) <= 0


def test_preset_lipschitz(preset_fields):
    _, v, fmm, dij = preset_fields
    assert distance.lipschitz_excess(fmm, v) <= 1e-9
    assert distance.lipschitz_excess(dij, v) <= 1e-9


def test_monotone_in_potential():
    g = fields.GridSpec.cube(2.0, 0.05, 2)
    p = fields.PRESETS["radial_quadratic"](2)
    a = distance.solve_eikonal(fields.discretize(p, g))
    b = distance.solve_eikonal(fields.discretize(fields.thickened(p), g))
    assert np.all(b.values >= a.values - 1e-12)
