import pytest

from cvmdi.core import load_config
from cvmdi.relay import acquire_calibration

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def desk():
    return load_config(profile="desk")


@pytest.fixture(scope="session")
def small(desk):
    """Desk physics with short frames for fast end-to-end tests."""
    return desk.replace(symbols_per_frame=4000, frames=2, calibration_frames=2)


@pytest.fixture(scope="session")
def small_cal(small):
    return acquire_calibration(small)


@pytest.fixture(scope="session")
def desk_cal(desk):
    return acquire_calibration(desk)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
