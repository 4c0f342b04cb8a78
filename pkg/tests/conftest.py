import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "lab", max_examples=40, deadline=None,
    suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("lab")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# one line per acceptance criterion, printed after the run
ACCEPTANCE = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for num, name, ok, detail in sorted(ACCEPTANCE):
        terminalreporter.write_line(
            f"criterion {num}: {'PASS' if ok else 'FAIL'}  {name}  ({detail})")
