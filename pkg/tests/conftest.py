import math
import warnings

import pytest

from heatlab.geometry import EccentricAnnulus, ball_domain, interval_domain, rectangle_domain
from heatlab.verify import Resolution


def _build(domain, h, K):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return Resolution.build(domain, h, K)


@pytest.fixture(scope="session")
def disk():
    return ball_domain()


@pytest.fixture(scope="session")
def disk64(disk):
    return _build(disk, 1 / 64, 300)


@pytest.fixture(scope="session")
def square():
    return rectangle_domain((0.0, 0.0), (math.pi, math.pi))


@pytest.fixture(scope="session")
def interval():
    return interval_domain()


@pytest.fixture(scope="session")
def annulus03():
    return EccentricAnnulus(0.25, 1.0, 0.3)


@pytest.fixture(scope="session")
def ann03_64(annulus03):
    return _build(annulus03, 1 / 64, 150)


@pytest.fixture(scope="session")
def ann03_32(annulus03):
    return _build(annulus03, 1 / 32, 150)


@pytest.fixture(scope="session")
def build():
    return _build


@pytest.fixture(scope="session")
def disk_curve(disk64):
    from heatlab.spectral import mellin_curve

    return mellin_curve(disk64.basis, disk64.op, math.pi, 2 * math.pi)


@pytest.fixture(scope="session")
def ann03_curve(ann03_64, annulus03):
    from heatlab.spectral import mellin_curve

    return mellin_curve(ann03_64.basis, ann03_64.op, annulus03.volume, 2 * math.pi * 1.25)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if results:
        terminalreporter.section("acceptance")
        for n in sorted(results):
            terminalreporter.write_line(results[n])
