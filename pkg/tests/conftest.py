import numpy as np
import pytest

from fracdrift import Field, GridSpec, StableParams, field_from_function
from fracdrift.fields import wrap_displacement


@pytest.fixture
def grid() -> GridSpec:
    return GridSpec(1, 256, 2 * np.pi)


@pytest.fixture
def stable() -> StableParams:
    return StableParams(1.5, 1)


@pytest.fixture
def bump(grid) -> Field:
    def fn(x):
        return np.exp(-wrap_displacement(x - np.pi, grid.L) ** 2 / (2 * 0.4**2))

    return field_from_function(grid, fn)


def gaussian_bump_field(grid, width=0.5, amplitude=1.0, center=None):
    c = grid.L / 2 if center is None else center

    def fn(*coords):
        r2 = sum(wrap_displacement(x - c, grid.L) ** 2 for x in coords)
        return amplitude * np.exp(-r2 / (2 * width**2))

    return field_from_function(grid, fn)
