import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from dirtrace.geometry import Cusp, Polygon, RectilinearUnion

settings.register_profile(
    "dirtrace", deadline=None, max_examples=40, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("dirtrace")

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def square():
    return RectilinearUnion([[[0, 0], [1, 1]]], name="square")


@pytest.fixture(scope="session")
def l_poly():
    return Polygon([(0, 0), (2, 0), (2, 1), (1, 1), (1, 2), (0, 2)], name="l_shape")


@pytest.fixture(scope="session")
def l_boxes():
    return RectilinearUnion([[[0, 0], [2, 1]], [[0, 0], [1, 2]]], name="l_boxes")


@pytest.fixture(scope="session")
def cusp():
    return Cusp()


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
