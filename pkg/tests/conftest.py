import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from dentriage import synthetic
from dentriage.corpus import Stage

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

FIXTURES = os.path.join(os.path.dirname(__file__), "fixtures")


@pytest.fixture(scope="session")
def table4_corpus():
    """Synthetic corpus with the 67/354/219/64 severity counts."""
    return synthetic.generate_synthetic_corpus(11, [67, 354, 219, 64], confusion=0.3)


@pytest.fixture(scope="session")
def separable_stage2():
    return synthetic.keyword_separable_corpus(5, 250, Stage.STAGE2)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
