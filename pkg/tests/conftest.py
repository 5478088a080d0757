"""
Shared fixtures and the --runslow switch.
"""
import numpy as np
import pytest

from app.models import Boundary, ChainSpec, CouplingSpec, Geometry


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run slow acceptance tests")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


def ising(N: int, lam: float, boundary: Boundary = Boundary.OPEN, **extra) -> ChainSpec:
    return ChainSpec(N=N, gamma=extra.pop("gamma", 1.0), lambda_=lam, boundary=boundary, **extra)


def xxz(N: int, delta: float, lam: float = 0.0, boundary: Boundary = Boundary.OPEN) -> ChainSpec:
    return ChainSpec(N=N, gamma=0.0, delta=delta, lambda_=lam, boundary=boundary)


def single_link(epsilon: float, site: int = 1) -> CouplingSpec:
    if site == 1:
        return CouplingSpec(epsilon=epsilon, m=1)
    return CouplingSpec(epsilon=epsilon, m=1, geometry=Geometry.EXPLICIT, sites=(site,))


@pytest.fixture
def rng():
    return np.random.default_rng(20240517)


@pytest.fixture
def short_times():
    return np.linspace(0.0, 5.0, 201)
