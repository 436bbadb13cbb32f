"""Shared fixtures: one desk-scale OU setup reused across test modules."""
import numpy as np
import pytest

from entroflow import (Grid, builtin_potential, gaussian_slice, gibbs_measure,
                       solve_fokker_planck)


@pytest.fixture(scope="session")
def ou():
    """Quadratic potential, 1024-point grid on [-8, 8], p0 = N(1, 1)."""
    pot = builtin_potential("quadratic")
    grid = Grid(-8.0, 8.0, 1024)
    gibbs = gibbs_measure(pot, grid)
    p0 = gaussian_slice(grid, 1.0, 1.0)
    return pot, grid, gibbs, p0


@pytest.fixture(scope="session")
def ou_field(ou):
    """Density evolution of the OU setup over [0, 0.5] at the h^2 step."""
    pot, grid, _, p0 = ou
    return solve_fokker_planck(pot, p0, grid, 0.5, grid.h ** 2)


@pytest.fixture(scope="session")
def coarse():
    """Fast 256-point variant for tests that only need qualitative runs."""
    pot = builtin_potential("quadratic")
    grid = Grid(-8.0, 8.0, 256)
    gibbs = gibbs_measure(pot, grid)
    p0 = gaussian_slice(grid, 1.0, 1.0)
    return pot, grid, gibbs, p0


def approx_se(values):
    return float(np.std(values, ddof=1) / np.sqrt(len(values)))
