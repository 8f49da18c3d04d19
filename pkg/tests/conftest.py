import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from sensorsel.channel import ChannelRealization
from sensorsel.estimation import LtiInstance, SensorModel
from sensorsel.instances import random_sensor

settings.register_profile(
    "repo", deadline=None, derandomize=True, print_blob=True,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("repo")


def make_instance(rng, n=3, N=5, m=2, r_max=5.0):
    A = rng.normal(size=(n, n)) * 0.5
    B = rng.normal(size=(n, n))
    Q = B @ B.T * 0.1 + 0.05 * np.eye(n)
    sensors = tuple(random_sensor(rng, n, m, r_max, i) for i in range(N))
    return LtiInstance(A, Q, sensors)


def make_cov(rng, n):
    B = rng.normal(size=(n, n))
    return B @ B.T + 0.1 * np.eye(n)


def make_channel(rng, N, theta=None, sigma2=0.01):
    h = rng.uniform(0.05, 2.0, N)
    th = rng.uniform(0.05, 0.8, N) if theta is None else theta
    return ChannelRealization(h, sigma2, 1.0, th)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def scalar_instance(R, C=1.0, A=1.005, Q=1.0):
    return LtiInstance(A, Q, tuple(SensorModel(C, r, i) for i, r in enumerate(R)))


# Acceptance results, one line per criterion, printed at the end of the run.
ACCEPTANCE_LINES: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[k])
