import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "default", deadline=None, max_examples=50,
    suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_AC_LINES = []


@pytest.fixture
def ac_report():
    """Record one pass/fail line for an acceptance criterion."""
    def report(label, ok, detail):
        line = "%-5s %s  %s" % (label, "PASS" if ok else "FAIL", detail)
        _AC_LINES.append(line)
        print(line)
        return ok
    return report


def pytest_terminal_summary(terminalreporter):
    if _AC_LINES:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in sorted(_AC_LINES, key=lambda s: int(s[2:5])):
            terminalreporter.write_line(line)
