import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from fsmdp.core import Basis, BasisFunction
from fsmdp.env import make_two_state_env

settings.register_profile("ci", deadline=None, derandomize=True, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("ci")

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def two_state():
    env = make_two_state_env()
    basis = Basis.with_constant([BasisFunction((0,), (0,), np.array([0.0, 1.0]))], 1.0)
    return env, basis


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
