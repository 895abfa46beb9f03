import numpy as np
import pytest

from qtorus import build_pipeline
from qtorus.chart import build_chart

QUARTIC = "p1^2/2 + q1^2/2 + 0.1*q1^4"
HARMONIC = "p1^2/2 + q1^2/2"
PENDULUM = "p1^2/2 - cos(q1)"


@pytest.fixture(scope="session")
def harmonic_chart():
    return build_chart(HARMONIC, (0.04, 1.6))


@pytest.fixture(scope="session")
def quartic_chart():
    return build_chart(QUARTIC, (0.08, 1.5))


@pytest.fixture(scope="session")
def pendulum_chart():
    return build_chart(PENDULUM, (-0.8, 0.45))


@pytest.fixture(scope="session")
def harmonic_pipe():
    return build_pipeline(HARMONIC, (0.04, 1.6), n_tau=128, n_s=48)


@pytest.fixture(scope="session")
def quartic_pipe():
    """Production-resolution quartic pipeline shared by the heavier tests."""
    return build_pipeline(QUARTIC, (0.05, 1.9))


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(20240817)
