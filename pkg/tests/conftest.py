import numpy as np
import pytest

from sdeldp.skeleton import ControlPath, energy


def make_random_control(rng, m=1, intervals=10, energy_budget=None):
    """A piecewise-linear control on a uniform grid; optionally rescaled so
    its energy lands uniformly in [budget/2, budget]."""
    grid = np.linspace(0.0, 1.0, intervals + 1)
    vals = np.vstack([np.zeros((1, m)),
                      rng.standard_normal((intervals, m))]).cumsum(axis=0) * 0.3
    l = ControlPath(grid, vals)
    if energy_budget is not None:
        scale = np.sqrt(energy_budget * rng.uniform(0.5, 1.0) / energy(l))
        l = ControlPath(grid, vals * scale)
    return l


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
