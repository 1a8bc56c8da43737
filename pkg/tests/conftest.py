import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from hypentropy import hyp
from hypentropy import lattice as lat

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture(scope="session")
def genus2():
    return lat.preset("genus2-octagon")


@pytest.fixture(scope="session")
def free2():
    return lat.preset("free2")


@pytest.fixture(scope="session")
def fig8():
    return lat.preset("figure-eight")


@pytest.fixture(scope="session")
def genus2_domain(genus2):
    return lat.cached_domain(genus2)


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


def random_points(rng, n, size, rmax=3.0):
    """Points of H^n at volume-uniform-ish radii up to ``rmax`` around the origin."""
    r = rng.uniform(0, rmax, size)
    return hyp.polar_point(n, r, hyp.random_directions(rng, n, size))


def pytest_terminal_summary(terminalreporter):
    mod = __import__("sys").modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", {})
    if lines:
        terminalreporter.section("acceptance criteria")
        for k in sorted(lines):
            terminalreporter.write_line(lines[k])
