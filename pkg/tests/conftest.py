import numpy as np
import pytest

from homogenize.mesh import CellGeometry, build_cell
from homogenize.problem import CellProblem


@pytest.fixture(scope="session")
def mesh_i():
    return build_cell(CellGeometry("I"), 0.02)


@pytest.fixture(scope="session")
def mesh_ii():
    return build_cell(CellGeometry("II"), 0.02)


@pytest.fixture(scope="session")
def coarse_i():
    return build_cell(CellGeometry("I"), 0.0625)


@pytest.fixture(scope="session")
def coarse_ii():
    return build_cell(CellGeometry("II"), 0.0625)


@pytest.fixture(scope="session")
def problem_i(mesh_i):
    return CellProblem(mesh_i)


@pytest.fixture(scope="session")
def problem_ii(mesh_ii):
    return CellProblem(mesh_ii)


@pytest.fixture(scope="session")
def coarse_problem_i(coarse_i):
    return CellProblem(coarse_i)


@pytest.fixture(scope="session")
def coarse_problem_ii(coarse_ii):
    return CellProblem(coarse_ii)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
