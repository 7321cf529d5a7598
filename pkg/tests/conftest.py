import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from acceptance_report import LINES

settings.register_profile(
    "default", deadline=None, max_examples=60, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")


def pytest_terminal_summary(terminalreporter):
    if not LINES:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(LINES):
        terminalreporter.write_line(LINES[k])


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
