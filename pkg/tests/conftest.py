import math

import pytest

from hybridnav.geometry import build_covering
from hybridnav.potentials import PotentialField
from hybridnav.scenarios import builtin_scenario

C = 2.0 * math.sqrt(2.0)


@pytest.fixture
def unit_cov():
    """rho=1 obstacle at the origin, target on +x (aligned frame = world frame)."""
    return build_covering((0.0, 0.0), 1.0, (10.0, 0.0), 0.5)


@pytest.fixture
def unit_field(unit_cov):
    return PotentialField.for_covering(unit_cov, 1.0)


@pytest.fixture(scope="session")
def noisy_dropout():
    return builtin_scenario("noisy_dropout")


@pytest.fixture(scope="session")
def noisy_dropout_field(noisy_dropout):
    return noisy_dropout.field()
