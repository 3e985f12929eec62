import numpy as np
import pytest

from energydelay.model import GameSpec
from energydelay.scenario import random_game


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def small_game():
    """An easy 3-link instance (every best response feasible) used across modules."""
    return random_game(np.random.default_rng(7), K=3)


def single_link(alpha=3.0, phi=0.0, sigma2=6.0, delta=1.0, lam=0.0, rate=1.0,
                p_max=10.0, p_c=0.0, theta=0.5, rho=1.0) -> GameSpec:
    return GameSpec.from_arrays(alpha=[alpha], phi=phi, beta=0.0, sigma2=sigma2, delta=delta,
                                lam=lam, rate=rate, p_max=p_max, p_c=p_c, theta=theta, rho=rho)


# one line per acceptance criterion, printed at the end of the run
ACCEPTANCE: list = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for line in ACCEPTANCE:
        terminalreporter.write_line(line)
