"""
Shared fixtures for the Observable Transport Lab tests
"""

from pathlib import Path

import pytest

from app import create_lab
from app.config import TestingConfig
from app.utils.kernels import FilterScale, gaussian_kernel, helmholtz_kernel, tent_kernel
from app.utils.riemann_exact import RiemannData


@pytest.fixture(scope='session')
def settings():
    """Testing settings with file and console logging disabled"""
    return create_lab('testing')


@pytest.fixture
def testing_config():
    return TestingConfig()


@pytest.fixture
def helmholtz():
    return helmholtz_kernel()


@pytest.fixture
def gaussian():
    return gaussian_kernel()


@pytest.fixture
def tent():
    return tent_kernel()


@pytest.fixture(params=['helmholtz', 'gaussian', 'tent'])
def preset_kernel(request):
    return {'helmholtz': helmholtz_kernel, 'gaussian': gaussian_kernel, 'tent': tent_kernel}[request.param]()


@pytest.fixture
def delta_data():
    """rho_l=1, u_l=2, rho_r=1, u_r=0: sigma = 1, spatial mass rate 2"""
    return RiemannData(1.0, 2.0, 1.0, 0.0)


@pytest.fixture
def alpha_small():
    return FilterScale(0.1)


@pytest.fixture
def configs_dir():
    return Path(__file__).resolve().parent.parent / 'configs'
