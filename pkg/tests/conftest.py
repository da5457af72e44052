import numpy as np
import pytest
from hypothesis import settings

from framefield.mesh import fem_operators, generate_cube_mesh

settings.register_profile("default", deadline=None, max_examples=50)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def cube2():
    mesh = generate_cube_mesh(2)
    return mesh, fem_operators(mesh)


@pytest.fixture(scope="session")
def cube3():
    mesh = generate_cube_mesh(3)
    return mesh, fem_operators(mesh)
