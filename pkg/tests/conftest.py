import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from cmclab.sphere import build_grid, n_coeffs

settings.register_profile(
    "lab", deadline=None, max_examples=25, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("lab")


def random_coeffs(rng, band_limit, lmax=None, decay=1.0):
    """Random coefficients supported on degrees <= lmax with mild decay."""
    lmax = band_limit if lmax is None else lmax
    c = np.zeros(n_coeffs(band_limit))
    for l in range(lmax + 1):
        for m in range(-l, l + 1):
            c[l * l + l + m] = rng.normal() / (1.0 + l) ** decay
    return c


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def grid16():
    return build_grid(16)


ACCEPTANCE_LINES = []


@pytest.fixture
def accept():
    """Record one acceptance line and assert it."""

    def record(label, passed, detail=""):
        line = f"{'PASS' if passed else 'FAIL'}  {label}" + (f"  [{detail}]" if detail else "")
        ACCEPTANCE_LINES.append(line)
        print(line)
        assert passed, line

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
