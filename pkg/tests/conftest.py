import math
from pathlib import Path

import pytest
from hypothesis import HealthCheck, settings

from haplobench.bench import assemble_nominal

settings.register_profile("default", max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture(scope="session")
def fixtures() -> Path:
    return FIXTURES


@pytest.fixture(scope="session")
def nominal():
    return assemble_nominal(0.064, 2.0, 2.0)


@pytest.fixture(scope="session")
def nominal_inf():
    return assemble_nominal(0.064, math.inf, math.inf)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if results:
        terminalreporter.section("acceptance criteria")
        for n in sorted(results):
            terminalreporter.write_line(results[n])
