import numpy as np
import pytest

from sensorcode.gauss_model import CovarianceModel, build_field_model

# Filled by tests/test_acceptance.py with (criterion number, line).
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pair_model(rho):
    return CovarianceModel(np.array([[1.0, rho], [rho, 1.0]]))


def random_field(n, beta, seed):
    pos = np.random.default_rng(seed).random((n, 2))
    return build_field_model(pos, beta)
