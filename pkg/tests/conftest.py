import numpy as np
import pytest

from eprscan import reference_setup, simulate_scan
from eprscan.scansim import ScanGrid


@pytest.fixture(scope="session")
def nf_scan():
    return simulate_scan(*reference_setup("nf"), seed=1)


@pytest.fixture(scope="session")
def ff_scan():
    return simulate_scan(*reference_setup("ff"), seed=1)


@pytest.fixture
def small_grid():
    return ScanGrid(n_steps=9, step=10.0)


@pytest.fixture
def rng():
    return np.random.default_rng(20240517)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import VERDICTS
    except ImportError:
        return
    if VERDICTS:
        terminalreporter.section("acceptance criteria")
        for key in sorted(VERDICTS):
            terminalreporter.write_line(VERDICTS[key])
