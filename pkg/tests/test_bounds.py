import math

import numpy as np
import pytest
from scipy import integrate

from agmonlab import bounds, fields, spectral
from agmonlab.agmon import distance
from agmonlab.errors import EmptyWindow, GridMismatch


def rho_harmonic(x):
    """∫₀^x √(2 + r²) dr in closed form."""
    return 0.5 * (x * math.sqrt(2 + x * x) + 2 * math.asinh(x / math.sqrt(2)))


@pytest.fixture(scope="module")
def profile(harmonic_gs, harmonic_rhos):
    return bounds.build_profile(harmonic_gs, *harmonic_rhos)


@pytest.mark.parametrize("x,expected", [(2.0, 0.556), (4.0, 0.781), (6.0, 0.872)])
def test_ratio_upper_values(profile, x, expected):
    oracle = (x * x / 2) / rho_harmonic(x)
    assert oracle == pytest.approx(expected, abs=1e-3)
    assert profile.at((x,))["ratio_upper"] == pytest.approx(expected, abs=0.02)


@pytest.mark.parametrize("x", [2.0, 4.0, 6.0])
def test_raw_ratio_against_gaussian(profile, x):
    oracle = -math.log(math.pi**-0.25 * math.exp(-x * x / 2)) / rho_harmonic(x)
    assert profile.at((x,))["ratio_upper_raw"] == pytest.approx(oracle, abs=0.02)


def test_rho_against_closed_form(harmonic_rhos):
    rho, _ = harmonic_rhos
    for x in (1.0, 3.0, 7.0):
        assert rho.at((x,)) == pytest.approx(rho_harmonic(x), rel=1e-4)


def test_ell_below_norm(nelson_k1, harmonic_rhos):
    prof = bounds.build_profile(nelson_k1, *harmonic_rhos)
    assert np.all(prof.ell <= prof.norm * (1 + 1e-12))


def test_constant_surrogate_computable():
    g = fields.GridSpec((-5.0,), (5.0,), (0.02,))
    p = fields.constant(1.0, 1)
    v = fields.discretize(p, g)
    gs = spectral.solve_ground_state(spectral.build_schrodinger(v))
    rho = distance.solve_eikonal(v)
    prof = bounds.build_profile(gs, rho, distance.solve_eikonal(fields.discretize(
        fields.thickened(p), g)))
    assert prof.x.shape[0] == g.shape[0] - 2
    np.testing.assert_allclose(prof.rho, prof.rho_circ)


def test_profile_csv(tmp_path, profile):
    profile.to_csv(tmp_path / "p.csv")
    head = open(tmp_path / "p.csv").readline().strip().split(",")
    assert head[:5] == ["x", "norm", "ell", "rho", "rho_circ"]
    data = np.loadtxt(tmp_path / "p.csv", delimiter=",", skiprows=1)
    assert data.shape == (profile.x.shape[0], len(head))


def test_grid_mismatch(harmonic_gs):
    g = fields.GridSpec((-5.0,), (5.0,), (0.02,))
    rho = distance.solve_eikonal(fields.discretize(fields.harmonic(1), g))
    with pytest.raises(GridMismatch):
        bounds.build_profile(harmonic_gs, rho, rho)


# -- sandwich fits --------------------------------------------------------------------

def test_fit_passes_eps_03(profile):
    fit = bounds.fit_sandwich(profile, 0.3, (2.0, 6.0))
    assert fit.passed
    assert 0 < fit.c < math.inf and 0 < fit.C < math.inf
    assert bounds.sandwich_holds(profile, fit)


def test_fit_passes_eps_10(profile):
    fit = bounds.fit_sandwich(profile, 10.0, (2.0, 6.0))
    assert fit.passed and bounds.sandwich_holds(profile, fit)


def test_fit_fails_eps_001(profile):
    fit = bounds.fit_sandwich(profile, 0.01, (2.0, 6.0))
    assert fit.finite
    assert not fit.passed


def test_fit_empty_window(profile):
    with pytest.raises(EmptyWindow):
        bounds.fit_sandwich(profile, 0.3, (30.0, 40.0))


@pytest.mark.parametrize("eps", [0.05, 0.3, 1.0, 3.0])
def test_fitted_constants_satisfy_sandwich(profile, eps):
    # the fitted constants are extremal, so the record-wise inequality always holds
    assert bounds.sandwich_holds(profile, bounds.fit_sandwich(profile, eps))


def test_fit_monotone_in_eps(profile):
    oks = [bounds.fit_sandwich(profile, e).passed for e in (0.01, 0.03, 0.1, 0.3, 1.0, 10.0)]
    first = oks.index(True)
    assert all(oks[first:])


def test_fit_nelson(nelson_k1, harmonic_rhos):
    prof = bounds.build_profile(nelson_k1, *harmonic_rhos)
    fit = bounds.fit_sandwich(prof, 0.3, (2.0, 6.0))
    assert fit.passed and bounds.sandwich_holds(prof, fit)


def test_ratio_increasing_in_radius(profile):
    r = profile.radius
    m = profile.window(1.0, 8.0) & (profile.x[:, 0] > 0)
    assert np.all(np.diff(profile.ratio_upper[m][np.argsort(r[m])]) > 0)


# -- asymptotic matching -------------------------------------------------------------

def quad_ratio(x):
    num = integrate.quad(lambda r: math.sqrt(2 * (1 + (r + 1) ** 2)), 0, x)[0]
    den = integrate.quad(lambda r: math.sqrt(2 * (1 + r * r)), 0, x)[0]
    return num / den


@pytest.fixture(scope="module")
def quad_pair():
    g = fields.GridSpec((-10.0,), (10.0,), (0.01,))
    p = fields.radial_polynomial([(0, 1.0), (2, 1.0)], 1)
    return (distance.solve_eikonal(fields.discretize(p, g)),
            distance.solve_eikonal(fields.discretize(fields.thickened(p), g)))


def test_matching_against_quadrature(quad_pair):
    rows = bounds.asymptotic_matching(*quad_pair, [2.0, 4.0, 8.0])
    got = [r["ratio_max"] for r in rows]
    want = [quad_ratio(x) for x in (2.0, 4.0, 8.0)]
    np.testing.assert_allclose(got, want, rtol=1e-3)
    assert got[0] > got[1] > got[2] > 1


def test_matching_constant_identity():
    g = fields.GridSpec.cube(2.0, 0.05, 2)
    p = fields.constant(1.0, 2)
    rho = distance.solve_eikonal(fields.discretize(p, g))
    rc = distance.solve_eikonal(fields.discretize(fields.thickened(p), g))
    for r in bounds.asymptotic_matching(rho, rc, [0.5, 1.0, 1.5]):
        assert r["ratio_min"] == r["ratio_max"] == 1.0


@pytest.mark.parametrize("name", sorted(fields.PRESETS))
def test_matching_at_least_one(name):
    g = fields.GridSpec.cube(2.0, 0.1, 2)
    p = fields.PRESETS[name](2)
    rho = distance.solve_eikonal(fields.discretize(p, g))
    rc = distance.solve_eikonal(fields.discretize(fields.thickened(p), g))
    for r in bounds.asymptotic_matching(rho, rc, [0.5, 1.0, 1.5]):
        assert r["ratio_min"] >= 1 - 1e-12


def test_matching_empty_radius(quad_pair):
    with pytest.raises(EmptyWindow):
        bounds.asymptotic_matching(*quad_pair, [50.0])


# -- envelope bracket ----------------------------------------------------------------

def test_envelope_bracket_harmonic(profile, harmonic_1d):
    out = bounds.envelope_bracket(profile, harmonic_1d.envelope, (2.0, 6.0))
    assert out["holds"]


def test_envelope_bracket_detects_wrong_rate(profile):
    wrong = fields.Envelope(a=2.0, b=0.0, A=2.0, B=1.0, n=1, m=1)
    assert not bounds.envelope_bracket(profile, wrong, (2.0, 6.0))["holds"]
