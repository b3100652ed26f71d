"""Named initial-data profiles for densities and phases."""

from __future__ import annotations

import itertools

import numpy as np

from .errors import ConfigurationError
from .grid import GridSpec, ScalarField

__all__ = ["density_profile", "phase_profile", "DENSITY_PROFILES", "PHASE_PROFILES"]


def _periodized_gaussian(grid: GridSpec, sigma: float, center=None) -> np.ndarray:
    center = np.zeros(grid.dim) if center is None else np.asarray(center, dtype=float)
    L = grid.box_length
    out = np.zeros(grid.shape)
    for shift in itertools.product((-1, 0, 1), repeat=grid.dim):
        r2 = sum((x - c - s * L) ** 2 for x, c, s in zip(grid.coordinates, center, shift))
        out += np.exp(-0.5 * r2 / sigma**2)
    return out


def gaussian_density(grid: GridSpec, sigma: float, center=None) -> ScalarField:
    return ScalarField(grid, _periodized_gaussian(grid, sigma, center)).normalized()


def uniform_density(grid: GridSpec) -> ScalarField:
    return ScalarField(grid, np.full(grid.shape, 1.0 / grid.volume))


def zero_phase(grid: GridSpec) -> ScalarField:
    return ScalarField(grid, np.zeros(grid.shape))


def expanding_phase(grid: GridSpec, amplitude: float, width: float) -> ScalarField:
    """``S = a w^2 (1 - exp(-|x|^2 / 2w^2))``, so ``u = a x exp(-|x|^2 / 2w^2)``.

    Quadratic near the origin (``u ~ a x``) and flat far out; the flow points
    outward everywhere, so no inflow region feeds a shell crossing early on.
    """
    r2 = sum(x**2 for x in grid.coordinates)
    return ScalarField(grid, amplitude * width**2 * -np.expm1(-0.5 * r2 / width**2))


def plane_wave_phase(grid: GridSpec, hbar: float, mode) -> ScalarField:
    """``S = hbar k0 . x`` with integer mode numbers (periodic ``exp(iS/hbar)``)."""
    k0 = 2 * np.pi * np.asarray(mode, dtype=float) / grid.box_length
    return ScalarField(grid, hbar * sum(k * x for k, x in zip(k0, grid.coordinates)))


DENSITY_PROFILES = {"gaussian": gaussian_density, "uniform": uniform_density}
PHASE_PROFILES = {"zero": zero_phase, "expanding": expanding_phase, "plane_wave": plane_wave_phase}


def density_profile(grid: GridSpec, name: str, **params) -> ScalarField:
    try:
        fn = DENSITY_PROFILES[name]
    except KeyError:
        raise ConfigurationError(f"unknown density profile {name!r}") from None
    return fn(grid, **params)


def phase_profile(grid: GridSpec, name: str, **params) -> ScalarField:
    try:
        fn = PHASE_PROFILES[name]
    except KeyError:
        raise ConfigurationError(f"unknown phase profile {name!r}") from None
    return fn(grid, **params)
