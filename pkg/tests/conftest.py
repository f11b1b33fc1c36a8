import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from dgfrac.mesh import MeshParams, PolygonalDomain, build_regular

settings.register_profile(
    "default", max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")


@pytest.fixture(scope="session")
def square():
    return PolygonalDomain.unit_square()


@pytest.fixture(scope="session")
def mesh_coarse(square):
    """Two triangles: the oracle instance."""
    return build_regular(square, MeshParams(1.0))


@pytest.fixture(scope="session")
def mesh_half(square):
    return build_regular(square, MeshParams(0.5))


@pytest.fixture(scope="session")
def mesh8(square):
    return build_regular(square, MeshParams(1 / 8))


@pytest.fixture(scope="session")
def mesh16(square):
    return build_regular(square, MeshParams(1 / 16))


@pytest.fixture(scope="session")
def lshape():
    return PolygonalDomain([(0, 0), (2, 0), (2, 1), (1, 1), (1, 2), (0, 2)], (0, 5))


@pytest.fixture(scope="session")
def tilted():
    r = np.sqrt(0.5)
    return PolygonalDomain([(0, 0), (r, r), (0, 2 * r), (-r, r)], (0, 2))


@pytest.fixture(scope="session")
def hexagon():
    ang = np.arange(6) * np.pi / 3
    return PolygonalDomain(np.c_[np.cos(ang), np.sin(ang)], (0, 3))


ACCEPTANCE_LINES: list = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
