import sys

import pytest

from coopra.model import ArrivalRates


@pytest.fixture
def spot_rates():
    return ArrivalRates(0.2, 0.15)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
