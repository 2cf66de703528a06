#!/usr/bin/env python3
"""
Shared fixtures: the factory plants and their closed loops
"""

import pytest

from phs_feedback.bv_calculus import PiecewiseMatrixDensity
from phs_feedback.phs_model import close_loop, string_model, timoshenko_model


@pytest.fixture
def string_system():
    return string_model(1.0, 1.0)


@pytest.fixture
def rho_step():
    """Mass density jumping from 1 to 4 at the midpoint"""
    return PiecewiseMatrixDensity.scalar_steps([1.0, 4.0], [0.0, 0.5, 1.0])


@pytest.fixture
def bv_string_system(rho_step):
    return string_model(rho_step, 1.0)


@pytest.fixture
def timoshenko_system():
    return timoshenko_model(1.0, 1.0, 1.0, 1.0)


@pytest.fixture
def matched_loop(string_system):
    return close_loop(string_system, 1.0)
