import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from nlhom.geometry import PerforationSpec, build_grid, domain_mask, effective_density, perforate

settings.register_profile(
    "default", max_examples=25, deadline=None,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.function_scoped_fixture])
settings.load_profile("default")

# lines printed by the acceptance suite, echoed in the terminal summary
CRITERIA_LINES = []


def pytest_terminal_summary(terminalreporter):
    if CRITERIA_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(CRITERIA_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def grid32():
    return build_grid(2, 32, (0.0, 1.0))


@pytest.fixture
def periodic_setup():
    """64^2 grid, square Omega of half width 0.25, periodic holes eps = 1/16, ratio 1/2."""
    grid = build_grid(2, 64, (0.0, 1.0))
    omega = domain_mask(grid, "square", margin=0.1)
    spec = PerforationSpec("periodic_balls", 1 / 16, 0.5)
    chi, holes = perforate(grid, omega, spec)
    X = effective_density(grid, omega, spec)
    return grid, omega, spec, chi, holes, X


