import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("repmult", deadline=None, max_examples=60)
settings.load_profile("repmult")


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import RESULTS

    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for number in sorted(RESULTS):
            terminalreporter.write_line(RESULTS[number])
