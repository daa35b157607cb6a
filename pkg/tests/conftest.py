import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from ssearch.core import Market

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)


def make_market(m, outside=False, seed=0):
    rng = np.random.default_rng(seed)
    return Market.from_arrays(rng.integers(0, 2, (m, 3)), rng.uniform(0, 2, m), outside)


@pytest.fixture
def market3():
    return make_market(3, outside=True, seed=1)
