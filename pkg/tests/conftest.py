import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from vkns2d import Grid
from vkns2d.spectral import band_limited_noise

settings.register_profile(
    "default", deadline=None, max_examples=40, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")


@pytest.fixture(scope="session")
def g64():
    return Grid(64)


@pytest.fixture(scope="session")
def g32():
    return Grid(32)


def noise(grid, seed, band=8, count=1):
    """Band-limited zero-mean fields with unit sup norm."""
    return band_limited_noise(grid, np.random.default_rng(seed), band, count)


ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def acceptance_report():
    """Collect one summary line per acceptance criterion."""

    def add(label: str, ok: bool, detail: str = "") -> bool:
        line = f"{'PASS' if ok else 'FAIL'}  criterion {label}" + (f": {detail}" if detail else "")
        ACCEPTANCE_LINES.append(line)
        print(line)
        return ok

    return add


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
