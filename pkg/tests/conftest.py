import numpy as np
import pytest

from billiardlab import tutorial
from billiardlab.geometry import flat_chart
from billiardlab.scene import Scene, disc


@pytest.fixture(scope="session")
def two_disc():
    return tutorial.load("two-disc")


@pytest.fixture(scope="session")
def disc5_unit():
    """Radius-5 disc with a unit disc obstacle at the origin."""
    return Scene(flat_chart(2), disc((0, 0), 5), [disc((0, 0), 1)], name="disc5-unit")


@pytest.fixture(scope="session")
def empty_disc():
    return Scene(flat_chart(2), disc((0, 0), 5), [], name="disc5")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    mod = __import__("sys").modules.get("test_acceptance") or __import__("sys").modules.get("tests.test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(results):
        terminalreporter.write_line(results[n])
