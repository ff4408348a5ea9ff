import math

import numpy as np
import pytest

from linklab.channel import (
    LINKS,
    RICIAN_LINKS,
    AngleSet,
    ArrayGeometry,
    IosGrid,
    LinkBudget,
    SideAngles,
)
from linklab.estimation import HardwareProfile

ACCEPTANCE_LINES = []


def unit_budget(rho_b=0.5, kappa=1.0, rho_ios=1.0):
    gains = {ln: rho_ios for ln in LINKS}
    gains.update(b_r=rho_b, b_t=rho_b)
    return LinkBudget(gains, {ln: kappa for ln in RICIAN_LINKS})


def random_angles(rng, delta_psi=0.3):
    u = rng.random(9)
    tp = 2 * math.pi
    return AngleSet(
        SideAngles(math.pi * u[0], tp * u[1], math.pi * u[2], tp * u[3], tp * u[8]),
        SideAngles(math.pi * u[4], tp * u[5], math.pi * u[6], tp * u[7], tp * u[8] - delta_psi),
    )


def normalized_error(emp, model):
    d = np.sqrt(np.abs(np.diag(model)))
    return float(np.max(np.abs(emp - model) / np.outer(d, d)))


def emp_cov(x):
    xc = x - x.mean(axis=0)
    return xc.T @ xc.conj() / x.shape[0]


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def small_geometry():
    return ArrayGeometry(8, 0.5, IosGrid(2, 2), IosGrid(2, 2))


@pytest.fixture
def impaired():
    return HardwareProfile(0.9, 0.8, 0.8)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
