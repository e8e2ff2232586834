import numpy as np
import pytest

from specflow.circle import CirclePoint, ONE
from specflow.flow import SpecialFlow
from specflow.roof import RoofSpec
from specflow.rotation import parse_alpha


@pytest.fixture(scope="session")
def golden():
    return parse_alpha("golden")


@pytest.fixture(scope="session")
def silver():
    return parse_alpha("silver")


@pytest.fixture(scope="session")
def arnold(golden):
    return SpecialFlow(golden, RoofSpec.log_asym(1, 2))


@pytest.fixture(scope="session")
def kochergin(golden):
    return SpecialFlow(golden, RoofSpec.power(0.5))


def random_point(rng: np.random.Generator, lo: float = 0.0) -> CirclePoint:
    """Uniform point, optionally kept at distance ``lo`` from 0."""
    while True:
        v = int(rng.integers(0, 1 << 60)) << 60 | int(rng.integers(0, 1 << 60))
        p = CirclePoint(v % ONE)
        if p.norm() >= lo:
            return p
