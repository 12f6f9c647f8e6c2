import numpy as np
import pytest

from ifdm import init_app
from ifdm.cli.scenarios import alfven_state, constant_state
from ifdm.core.dual_solver import SpaceTimeLattice, base_from_state
from ifdm.core.grid_fields import PeriodicGrid
from ifdm.core.packed_algebra import default_tables, diagonal_a
from ifdm.core.primal_system import PrimalState


@pytest.fixture(autouse=True, scope="session")
def app():
    """Testing settings and quiet logs for every test."""
    return init_app("testing")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def grid16():
    return PeriodicGrid(16)


@pytest.fixture
def tables():
    return default_tables()


@pytest.fixture
def a100():
    return diagonal_a(100.0, 100.0, 100.0)


@pytest.fixture
def alfven16(grid16):
    return alfven_state(grid16)


@pytest.fixture
def lattice4():
    """4^3 x 4 space-time lattice."""
    return SpaceTimeLattice(grid=PeriodicGrid(4), nt=4, T=0.5)


@pytest.fixture
def constant_base(lattice4):
    return base_from_state(constant_state(lattice4.grid), lattice4.nt)


@pytest.fixture
def random_base(lattice4, rng):
    shape = lattice4.grid.shape
    state = PrimalState(
        v=0.5 * rng.standard_normal((3,) + shape),
        alpha=0.5 * rng.standard_normal((3, 3) + shape),
        p=0.5 * rng.standard_normal(shape),
    )
    return base_from_state(state, lattice4.nt)
