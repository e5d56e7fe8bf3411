import numpy as np
import pytest

from logdiff.geometry import SpaceTimeGrid
from logdiff.solver import BoundaryData, SolverConfig, run


def _bump_bc():
    # boundary identically 1 (the sine bump vanishes there), bumped initial slice
    def initial(X):
        out = np.ones(X.shape[1:])
        bump = np.ones(X.shape[1:])
        for d in range(X.shape[0]):
            bump = bump * np.sin(np.pi * X[d])
        return out + 0.5 * bump

    return BoundaryData(boundary=lambda X, t: np.ones(X.shape[1:]), initial=initial)


@pytest.fixture(scope="session")
def field2d():
    """2D solver output on [0,1]^2 x [0,0.25]: positive, genuinely varying."""
    grid = SpaceTimeGrid.from_box(2, 0.0, 1.0, 33, 0.0, 0.25, 16)
    return run(SolverConfig(grid), _bump_bc()).field


@pytest.fixture(scope="session")
def field2d_fine():
    """Same problem, one refinement in space and time."""
    grid = SpaceTimeGrid.from_box(2, 0.0, 1.0, 65, 0.0, 0.25, 32)
    return run(SolverConfig(grid), _bump_bc()).field
