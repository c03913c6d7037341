import sys

import numpy as np
import pytest

from lvephi4.covariance import site_model


@pytest.fixture(scope="session")
def models():
    """Small slice-mode lattice models shared by the oracle comparisons."""
    return {n: site_model(n, mode="slice", j_max=2) for n in (1, 2, 3)}


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    """Print the acceptance lines, one per criterion, after the test run."""
    lines = []
    for mod in list(sys.modules.values()):
        lines = getattr(mod, "ACCEPTANCE_LINES", None) or lines
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)
