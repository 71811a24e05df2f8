import numpy as np
import pytest

from akgeo import GridSpec, build_torus_grid
from akgeo.grid import block_modulated_j, generic_modulated_j, l2_norm


@pytest.fixture(scope="session")
def flat8():
    return build_torus_grid(GridSpec.cubic(8))


@pytest.fixture(scope="session")
def flat12():
    return build_torus_grid(GridSpec.cubic(12))


@pytest.fixture(scope="session")
def flat16():
    return build_torus_grid(GridSpec.cubic(16))


@pytest.fixture(scope="session")
def block12():
    return build_torus_grid(
        GridSpec.cubic(12), j_builder=lambda g: block_modulated_j(g, 0.08)
    )


@pytest.fixture(scope="session")
def generic12():
    return build_torus_grid(
        GridSpec.cubic(12), j_builder=lambda g: generic_modulated_j(g, 0.08)
    )


@pytest.fixture(scope="session")
def block16():
    return build_torus_grid(
        GridSpec.cubic(16), j_builder=lambda g: block_modulated_j(g, 0.1)
    )


def rel_error(a, b, triple, floor=1e-30):
    d = l2_norm(a - b, triple)
    return d / max(l2_norm(a, triple), l2_norm(b, triple), floor)


@pytest.fixture(scope="session")
def rel():
    return rel_error


@pytest.fixture()
def rng():
    return np.random.default_rng(20240817)
