"""Shared fixtures: the standard hand model and a solved standard grip."""

import numpy as np
import pytest

from chopplan.grip_ik import default_contact_fractions, solve_grip_ik
from chopplan.hand import get_model


@pytest.fixture(scope="session")
def model():
    return get_model("standard")


@pytest.fixture(scope="session")
def standard_style():
    return (1, 1, 1, 2, 0)


@pytest.fixture(scope="session")
def standard_grip(model, standard_style):
    x = default_contact_fractions(standard_style, model)
    return solve_grip_ik(x, standard_style, model)


@pytest.fixture()
def rng():
    return np.random.default_rng(12345)
