import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from mflab.grid import GridSpec

settings.register_profile(
    "mflab",
    deadline=None,
    max_examples=25,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.function_scoped_fixture],
)
settings.load_profile("mflab")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def grid3():
    return GridSpec(3, 16, 2 * np.pi)


@pytest.fixture
def grid1():
    return GridSpec(1, 64, 2 * np.pi)


def random_density(grid, rng, modes=3, amplitude=0.3):
    """Smooth positive probability density built from a few random Fourier modes."""
    vals = np.ones(grid.shape)
    k = 2 * np.pi / grid.box_length
    for _ in range(modes):
        m = rng.integers(-2, 3, size=grid.dim)
        phase = rng.uniform(0, 2 * np.pi)
        arg = sum(k * mi * x for mi, x in zip(m, grid.coordinates))
        vals = vals + amplitude / modes * np.cos(arg + phase)
    return vals / grid.integrate(vals)


def random_velocity(grid, rng, amplitude=0.5):
    k = 2 * np.pi / grid.box_length
    comps = []
    for _ in range(grid.dim):
        m = rng.integers(-2, 3, size=grid.dim)
        arg = sum(k * mi * x for mi, x in zip(m, grid.coordinates))
        comps.append(amplitude * np.sin(arg + rng.uniform(0, 2 * np.pi)) + np.zeros(grid.shape))
    return np.stack(comps)
