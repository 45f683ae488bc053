"""
Pytest configuration and fixtures for the freeot tests.
"""

import os

import numpy as np
import pytest

# Set test environment before importing the package
os.environ["ENVIRONMENT"] = "test"

from core.config import Settings
from core.measures import make_measure, point_mass


@pytest.fixture
def test_settings():
    """Test settings with small Monte Carlo budgets."""
    return Settings(
        PROJECT_NAME="freeot-test",
        ENVIRONMENT="test",
        LOG_LEVEL="WARNING",
        MC_CHUNK_SIZE=500,
        THREADS=1,
    )


@pytest.fixture
def bern():
    """Symmetric Bernoulli measure ½δ₋₁ + ½δ₁."""
    return make_measure([-1.0, 1.0])


@pytest.fixture
def positive_two_point():
    """½δ₁ + ½δ₂."""
    return make_measure([1.0, 2.0])


@pytest.fixture
def delta_one():
    return point_mass(1.0)


@pytest.fixture
def skewed():
    """Three atoms with unequal weights."""
    return make_measure([-0.5, 0.25, 1.5], [0.2, 0.5, 0.3])


@pytest.fixture
def rng():
    """Seeded generator so random instances are reproducible."""
    return np.random.default_rng(20240501)
