"""Wigner and Husimi transforms of 1-D wave functions.

Conventions:

* ``W(x, xi) = (1/(pi hbar)) int psi(x+s) conj(psi(x-s)) exp(-2 i xi s / hbar) ds``,
  the usual ``(2 pi)^-1 int psi(x + hbar y/2) conj(psi(x - hbar y/2)) e^{-i xi y} dy``.
* ``psi`` is refined spectrally by a factor ``p`` so that the lag ``s`` runs
  over steps of ``h/p`` through one period; the resulting ``W`` is periodic
  in ``xi`` with period ``p * pi * hbar / h``.
* The natural momentum grid has spacing ``pi hbar / L`` and covers one such
  period, so ``sum_xi W dxi = |psi|^2`` holds to round-off on it.
* The Husimi transform is ``exp(hbar lap_{x,xi} / 4) W``: the Fourier multiplier
  ``exp(-hbar kappa^2 / 4)`` on both axes (Gaussian smoothing of variance
  ``hbar/2`` in ``x`` and in ``xi``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.fft as sfft

from .errors import AliasingError, ConfigurationError, InputError
from .euler_poisson import FluidState
from .grid import GridSpec, WaveField

__all__ = [
    "PhaseSpaceField",
    "wigner_transform",
    "husimi_transform",
    "second_moment_check",
    "monokinetic_concentration",
    "natural_xi_max",
    "refine",
]

IMAG_TOL = 1e-10
SPECTRAL_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class PhaseSpaceField:
    x_grid: GridSpec
    xi: np.ndarray
    hbar: float
    values: np.ndarray
    smoothed: bool = False

    def __post_init__(self):
        if self.x_grid.dim != 1:
            raise ConfigurationError("phase-space fields live over a 1-D grid")
        vals = np.asarray(self.values, dtype=float)
        if vals.shape != (self.x_grid.points_per_axis, len(self.xi)):
            raise ConfigurationError(f"values have shape {vals.shape}, expected (x_points, xi_points)")
        object.__setattr__(self, "values", vals)

    @property
    def xi_points(self) -> int:
        return len(self.xi)

    @property
    def xi_max(self) -> float:
        return -float(self.xi[0])

    @property
    def dxi(self) -> float:
        return float(self.xi[1] - self.xi[0])

    @property
    def cell_area(self) -> float:
        return self.x_grid.h * self.dxi

    def integral(self) -> float:
        return float(self.values.sum() * self.cell_area)

    def x_marginal(self) -> np.ndarray:
        """``int W dxi`` at each grid point."""
        return self.values.sum(axis=1) * self.dxi

    def moment(self, weight: np.ndarray) -> float:
        """``iint weight(x, xi) W dx dxi`` for ``weight`` broadcastable to ``values``."""
        return float(np.sum(weight * self.values) * self.cell_area)


def natural_xi_max(grid: GridSpec, hbar: float) -> float:
    """``pi hbar n / L``: the largest momentum a grid function can carry."""
    return math.pi * hbar * grid.points_per_axis / grid.box_length


def refine(values: np.ndarray, factor: int) -> np.ndarray:
    """Trigonometric interpolation of a periodic 1-D array onto ``factor`` times more points.

    The unpaired Nyquist coefficient is split evenly between ``+n/2`` and ``-n/2``.
    """
    n = len(values)
    if factor == 1:
        return np.asarray(values, dtype=complex)
    spec = sfft.fft(values)
    m = factor * n
    out = np.zeros(m, dtype=complex)
    half = n // 2
    out[:half] = spec[:half]
    out[m - half + 1 :] = spec[half + 1 :]
    out[half] = 0.5 * spec[half]
    out[m - half] = 0.5 * spec[half]
    return sfft.ifft(out) * factor


def _spectral_extent(psi: WaveField) -> float:
    """``hbar |k|`` of the highest Fourier mode carrying non-negligible weight."""
    grid = psi.grid
    power = np.abs(sfft.fft(psi.values)) ** 2
    keep = power > SPECTRAL_TOL * power.sum()
    return float(psi.hbar * np.max(np.abs(grid.axis_wavenumbers[keep]))) if keep.any() else 0.0


def wigner_transform(psi: WaveField, xi_points: int | None = None, xi_max: float | None = None) -> PhaseSpaceField:
    """Discrete Wigner function on ``xi_j = -xi_max + j * 2 xi_max / xi_points``.

    Defaults give the natural grid: ``xi_max = pi hbar n / L`` and
    ``xi_points = 2n``. Larger ``xi_max`` refines ``psi`` further so that the
    transform stays alias-free on the wider window.
    """
    grid = psi.grid
    if grid.dim != 1:
        raise ConfigurationError("wigner_transform needs a 1-D wave function")
    hbar = psi.hbar
    n = grid.points_per_axis
    nat = natural_xi_max(grid, hbar)
    if xi_max is None:
        xi_max = nat
    if xi_points is None:
        xi_points = int(round(2 * n * xi_max / nat))
    if xi_points < 2:
        raise InputError("xi_points must be at least 2")
    extent = _spectral_extent(psi)
    if extent > xi_max * (1 + 1e-12):
        raise AliasingError(f"spectral support reaches |xi| = {extent:.4g} beyond xi_max = {xi_max:.4g}")

    p = 2 * max(1, math.ceil(xi_max / nat - 1e-12))
    fine = refine(psi.values, p)
    m = p * n
    lags = np.arange(m) - m // 2
    centers = p * np.arange(n)
    f = fine[(centers[:, None] + lags[None, :]) % m] * np.conj(fine[(centers[:, None] - lags[None, :]) % m])

    xi = -xi_max + (2 * xi_max / xi_points) * np.arange(xi_points)
    ds = grid.h / p
    kernel = np.exp(-2j * np.outer(lags * ds, xi) / hbar)
    w = (f @ kernel) * ds / (math.pi * hbar)
    scale = max(float(np.max(np.abs(w.real))), 1e-300)
    if np.max(np.abs(w.imag)) > IMAG_TOL * max(scale, 1.0):
        raise AliasingError(f"Wigner transform has imaginary residue {np.max(np.abs(w.imag)):.3g}")
    return PhaseSpaceField(grid, xi, hbar, w.real)


def husimi_transform(w: PhaseSpaceField) -> PhaseSpaceField:
    """``exp(hbar lap / 4) W`` via the exact Fourier multiplier on the periodic (x, xi) grid."""
    if w.smoothed:
        raise InputError("field is already a Husimi transform")
    kx = w.x_grid.axis_wavenumbers
    kxi = 2 * np.pi * sfft.fftfreq(w.xi_points, d=w.dxi)
    mult = np.exp(-0.25 * w.hbar * (kx[:, None] ** 2 + kxi[None, :] ** 2))
    out = sfft.ifft2(sfft.fft2(w.values) * mult).real
    return PhaseSpaceField(w.x_grid, w.xi, w.hbar, out, smoothed=True)


def second_moment_check(psi: WaveField) -> tuple[float, float, float]:
    """``(iint xi^2 W~, int |hbar psi'|^2, difference)``.

    The Wigner window is doubled so the Gaussian smoothing in ``xi`` never
    wraps around the periodic momentum axis.
    """
    grid = psi.grid
    if grid.dim != 1:
        raise ConfigurationError("second_moment_check needs a 1-D wave function")
    w = husimi_transform(wigner_transform(psi, xi_max=2 * natural_xi_max(grid, psi.hbar)))
    lhs = w.moment(w.xi[None, :] ** 2)
    dpsi = sfft.ifft(1j * grid.axis_wavenumbers * sfft.fft(psi.values))
    rhs = grid.integrate(np.abs(psi.hbar * dpsi) ** 2)
    return lhs, rhs, lhs - rhs


def monokinetic_concentration(w: PhaseSpaceField, fluid_1d: FluidState) -> float:
    """``iint |xi - u(x)|^2 W~(x, xi) dx dxi``; ``w`` is smoothed first if it is a raw Wigner field."""
    if fluid_1d.grid != w.x_grid:
        raise InputError("phase-space field and fluid use different x-grids")
    husimi = w if w.smoothed else husimi_transform(w)
    u = fluid_1d.u.components[0]
    return husimi.moment((husimi.xi[None, :] - u[:, None]) ** 2)
