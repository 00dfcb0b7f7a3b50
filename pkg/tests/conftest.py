import math

import numpy as np
import pytest

from analysis.geometry import dual_linear, equilateral_dual, expand_topology, uniform_linear

SQRT3 = math.sqrt(3.0)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def fig6_topology():
    return dual_linear(0.8, 0.4, 0.32, 50, 49)


@pytest.fixture
def fig6_layout(fig6_topology):
    return expand_topology(fig6_topology)


@pytest.fixture
def fig7_topology():
    return dual_linear(SQRT3 / 3, SQRT3 / 6, 0.5, 50, 49)


@pytest.fixture
def fig8_topology():
    return equilateral_dual(0.6, 50, 49)


@pytest.fixture
def half_wave_ula():
    return expand_topology(uniform_linear(0.5, 50))


@pytest.fixture
def full_wave_ula():
    return expand_topology(uniform_linear(1.0, 50))
