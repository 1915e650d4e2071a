import numpy as np
import pytest

from agmonlab import fields, spectral
from agmonlab.agmon import distance


@pytest.fixture(scope="session")
def harmonic_grid():
    return fields.GridSpec((-10.0,), (10.0,), (0.01,))


@pytest.fixture(scope="session")
def harmonic_1d():
    return fields.harmonic(1)


@pytest.fixture(scope="session")
def harmonic_gs(harmonic_grid, harmonic_1d):
    H = spectral.build_schrodinger(fields.discretize(harmonic_1d, harmonic_grid))
    return spectral.solve_ground_state(H)


@pytest.fixture(scope="session")
def harmonic_rhos(harmonic_grid, harmonic_1d):
    v = fields.discretize(harmonic_1d, harmonic_grid)
    vc = fields.discretize(fields.thickened(harmonic_1d), harmonic_grid)
    return distance.solve_eikonal(v), distance.solve_eikonal(vc, thickened=True)


def nelson_state(k, g, n_max=8, h=0.01):
    grid = fields.GridSpec((-10.0,), (10.0,), (h,))
    basis = spectral.FockBasis((k,), (1.0,), 1.0, n_max)
    H = spectral.build_nelson_toy(grid, fields.harmonic(1), basis, g)
    return spectral.solve_ground_state(H)


@pytest.fixture(scope="session")
def nelson_k0():
    return nelson_state(0.0, 0.2)


@pytest.fixture(scope="session")
def nelson_k1():
    return nelson_state(1.0, 0.2)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
