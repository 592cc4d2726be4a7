import hypothesis
import numpy as np
import pytest

import mdcontrol as md

hypothesis.settings.register_profile(
    "suite", max_examples=60, deadline=None, derandomize=True
)
hypothesis.settings.load_profile("suite")


@pytest.fixture(scope="session")
def quad_map():
    return md.quadratic_map()


@pytest.fixture(scope="session")
def stock_lq():
    return md.make_lq(1.0, 1.0, 1.0, 0.5, 1.0)


@pytest.fixture(scope="session")
def quartic_problem():
    return md.make_quartic(1.0)


@pytest.fixture(scope="session")
def grid500():
    return md.TimeGrid(1.0, 500)


def smooth_control(grid, rng, width=1, scale=1.0):
    t = grid.nodes / grid.horizon
    c = rng.uniform(-1.0, 1.0, size=(width, 4))
    vals = np.empty((grid.steps + 1, width))
    for j in range(width):
        vals[:, j] = scale * (
            c[j, 0]
            + c[j, 1] * t
            + 0.5 * c[j, 2] * np.sin(np.pi * t)
            + 0.25 * c[j, 3] * np.cos(2.0 * np.pi * t)
        )
    return md.Trajectory(grid, vals)
