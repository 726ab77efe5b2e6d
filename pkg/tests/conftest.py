import numpy as np
import pytest

from hopfid.gridfn import GridFunction
from hopfid.model import default_xi0, landau_ground_truth, synthesize_measurements

SIGMA1 = 0.151
R_CIRCLE = 2.3
OMEGA1 = 0.886
GAMMA = 0.15 / R_CIRCLE**2

ACCEPTANCE_KEY = pytest.StashKey[list]()


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(ACCEPTANCE_KEY, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)


def landau(n_nodes=75):
    return landau_ground_truth(SIGMA1, SIGMA1 / R_CIRCLE**2, OMEGA1, GAMMA, n_nodes)


@pytest.fixture(scope="session")
def truth():
    return landau()


@pytest.fixture(scope="session")
def xi0():
    return default_xi0(R_CIRCLE)


@pytest.fixture(scope="session")
def meas(truth, xi0):
    return synthesize_measurements(truth, xi0, 70.0, 500)


@pytest.fixture(scope="session")
def cubic_direction():
    return GridFunction.from_function(lambda r: -r**3, R_CIRCLE, 75)


@pytest.fixture(scope="session")
def p1_model(truth):
    """Landau model with g1 scaled by 0.8 and the phase function switched off."""
    return truth.replace(g1=truth.g1.axpy(-0.2, truth.g1),
                         g2=GridFunction.constant(0.0, R_CIRCLE, 75))


@pytest.fixture(scope="session")
def p2_model(truth):
    bump = GridFunction.from_function(lambda r: 0.03 + 0.02 * np.cos(np.pi * r / R_CIRCLE),
                                      R_CIRCLE, 75)
    return truth.replace(g2=truth.g2.axpy(-1.0, bump))
