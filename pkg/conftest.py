"""Общие фикстуры тестов."""
import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

from problems import gen_composed_linear, gen_composed_nonlinear, gen_interpolated_least_squares  # noqa: E402


@pytest.fixture(scope="session")
def ls_small():
    """Наименьшие квадраты n=20, d=50."""
    return gen_interpolated_least_squares(20, 50, seed=7)


@pytest.fixture(scope="session")
def ls_orthogonal():
    """Наименьшие квадраты с ортогональной X (n = d = 4): alpha = 0.5, beta = 1, lambda = 0.25."""
    return gen_interpolated_least_squares(4, 4, seed=3, spectrum=[1.0, 1.0, 1.0, 1.0])


@pytest.fixture(scope="session")
def composed_sine(ls_orthogonal):
    """Композиция с Phi(v) = v + 0.5 sin v: a = 0.25, b = 2.25."""
    return gen_composed_nonlinear(ls_orthogonal, 0.5)


@pytest.fixture(scope="session")
def composed_rank8():
    """L~(A w), d = 30, k = 10, rank = 8."""
    return gen_composed_linear(20, 30, 10, 8, seed=11)


@pytest.fixture
def rng():
    return np.random.default_rng(2024)
