import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def power_law_100():
    from collapse_lab.spectra import build_power_law_spectrum

    return build_power_law_spectrum(100)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    """Repeat the acceptance verdicts, sorted by criterion, after the test report."""
    import sys

    lines = []
    for module in list(sys.modules.values()):
        lines.extend(getattr(module, "ACCEPTANCE_LINES", []) if module is not None else [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(set(lines), key=lambda s: int(s.split("criterion ")[1].split()[0])):
            terminalreporter.write_line(line)
