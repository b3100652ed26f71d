"""Periodic-box discretization and the spectral operators every solver shares.

Conventions (fixed for the whole package):

* Grid points sit at ``x_i = -L/2 + i*h`` on each axis, ``h = L/n``.
* ``forward_transform`` is the unnormalized DFT, ``inverse_transform`` carries
  the ``1/ncells`` factor (numpy/scipy default ``norm="backward"``).
* Wavenumbers are ``k = 2*pi*m/L`` with ``m`` in the symmetric FFT range.
* The Coulomb multiplier is ``1/|k|^2`` with the ``k = 0`` mode set to zero,
  i.e. a uniform neutralizing background is implied.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.fft as sfft

from .errors import ConfigurationError

__all__ = [
    "GridSpec",
    "ScalarField",
    "VectorField",
    "WaveField",
    "forward_transform",
    "inverse_transform",
    "dealias",
    "gradient_array",
    "spectral_gradient",
    "spectral_divergence",
    "spectral_laplacian",
    "poisson_solve",
    "potential_gradient",
    "coulomb_pairing",
]


def _smooth(n: int) -> bool:
    for p in (2, 3, 5):
        while n % p == 0:
            n //= p
    return n == 1


@dataclass(frozen=True)
class GridSpec:
    dim: int
    points_per_axis: int
    box_length: float
    dealias_fraction: float = 2.0 / 3.0

    def __post_init__(self):
        if self.dim not in (1, 2, 3):
            raise ConfigurationError(f"dim must be 1, 2 or 3, got {self.dim}")
        n = self.points_per_axis
        if n < 8 or n % 2 or not _smooth(n):
            raise ConfigurationError(f"points_per_axis must be an even 2-3-5-smooth integer >= 8, got {n}")
        if not self.box_length > 0:
            raise ConfigurationError(f"box_length must be positive, got {self.box_length}")
        if not 0 < self.dealias_fraction <= 1:
            raise ConfigurationError("dealias_fraction must lie in (0, 1]")

    @property
    def h(self) -> float:
        return self.box_length / self.points_per_axis

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.points_per_axis,) * self.dim

    @property
    def ncells(self) -> int:
        return self.points_per_axis**self.dim

    @property
    def cell_volume(self) -> float:
        return self.h**self.dim

    @property
    def volume(self) -> float:
        return self.box_length**self.dim

    @property
    def is_coulomb(self) -> bool:
        """Only the 3-D multiplier is the Fourier transform of 1/(4 pi |z|)."""
        return self.dim == 3

    @cached_property
    def axis(self) -> np.ndarray:
        return -0.5 * self.box_length + self.h * np.arange(self.points_per_axis)

    @cached_property
    def axis_wavenumbers(self) -> np.ndarray:
        return 2 * np.pi * sfft.fftfreq(self.points_per_axis, d=self.h)

    @cached_property
    def coordinates(self) -> tuple[np.ndarray, ...]:
        """Broadcastable coordinate arrays, one per axis."""
        return tuple(self._along(a, self.axis) for a in range(self.dim))

    @cached_property
    def wavenumbers(self) -> tuple[np.ndarray, ...]:
        return tuple(self._along(a, self.axis_wavenumbers) for a in range(self.dim))

    @cached_property
    def k2(self) -> np.ndarray:
        return sum(k**2 for k in self.wavenumbers)

    @cached_property
    def inverse_k2(self) -> np.ndarray:
        """Coulomb multiplier 1/|k|^2 with the zero mode removed."""
        k2 = self.k2.copy()
        k2.flat[0] = 1.0
        inv = 1.0 / k2
        inv.flat[0] = 0.0
        return inv

    @cached_property
    def derivative_wavenumbers(self) -> tuple[np.ndarray, ...]:
        """Wavenumbers for odd derivatives: the unpaired Nyquist mode is dropped."""
        k = self.axis_wavenumbers.copy()
        k[self.points_per_axis // 2] = 0.0
        return tuple(self._along(a, k) for a in range(self.dim))

    @cached_property
    def dealias_mask(self) -> np.ndarray:
        m = np.abs(sfft.fftfreq(self.points_per_axis) * self.points_per_axis)
        keep = m < self.dealias_fraction * self.points_per_axis / 2
        if self.dealias_fraction == 1.0:
            keep = np.ones_like(keep)
        mask = np.ones(self.shape, dtype=bool)
        for a in range(self.dim):
            mask = mask & self._along(a, keep)
        return mask

    def _along(self, axis: int, values: np.ndarray) -> np.ndarray:
        shape = [1] * self.dim
        shape[axis] = values.size
        return values.reshape(shape)

    def check(self, values: np.ndarray, what: str = "field") -> np.ndarray:
        values = np.asarray(values)
        if values.shape != self.shape:
            if values.size == self.ncells:
                return values.reshape(self.shape)
            raise ConfigurationError(f"{what} has shape {values.shape}, grid expects {self.shape}")
        return values

    def integrate(self, values: np.ndarray) -> float:
        return float(np.sum(values) * self.cell_volume)


@dataclass(frozen=True, eq=False)
class ScalarField:
    grid: GridSpec
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", self.grid.check(np.asarray(self.values, dtype=float), "ScalarField"))

    def integral(self) -> float:
        return self.grid.integrate(self.values)

    def mean(self) -> float:
        return float(np.mean(self.values))

    def normalized(self) -> "ScalarField":
        return ScalarField(self.grid, self.values / self.integral())


@dataclass(frozen=True, eq=False)
class VectorField:
    grid: GridSpec
    components: np.ndarray

    def __post_init__(self):
        comps = np.asarray(self.components, dtype=float)
        if comps.shape != (self.grid.dim, *self.grid.shape):
            raise ConfigurationError(
                f"VectorField needs shape {(self.grid.dim, *self.grid.shape)}, got {comps.shape}"
            )
        object.__setattr__(self, "components", comps)

    @classmethod
    def zeros(cls, grid: GridSpec) -> "VectorField":
        return cls(grid, np.zeros((grid.dim, *grid.shape)))

    def magnitude(self) -> np.ndarray:
        return np.sqrt(np.sum(self.components**2, axis=0))


@dataclass(frozen=True, eq=False)
class WaveField:
    grid: GridSpec
    hbar: float
    values: np.ndarray
    normalize: bool = field(default=False, repr=False)

    def __post_init__(self):
        if not self.hbar > 0:
            raise ConfigurationError(f"hbar must be positive, got {self.hbar}")
        psi = self.grid.check(np.asarray(self.values, dtype=complex), "WaveField")
        if self.normalize:
            psi = psi / np.sqrt(self.grid.integrate(np.abs(psi) ** 2))
        object.__setattr__(self, "values", psi)

    def norm2(self) -> float:
        """Cell-weighted squared L2 norm."""
        return self.grid.integrate(np.abs(self.values) ** 2)


def _grid_and_values(f):
    if isinstance(f, (ScalarField, WaveField)):
        return f.grid, f.values
    raise ConfigurationError(f"expected ScalarField or WaveField, got {type(f).__name__}")


def forward_transform(f) -> np.ndarray:
    """Unnormalized DFT of a scalar or wave field (full complex spectrum)."""
    grid, values = _grid_and_values(f)
    return sfft.fftn(grid.check(values))


def inverse_transform(spectrum: np.ndarray, grid: GridSpec, real: bool = False) -> np.ndarray:
    out = sfft.ifftn(grid.check(spectrum, "spectrum"))
    return out.real if real else out


def dealias(values: np.ndarray, grid: GridSpec) -> np.ndarray:
    """Project a physical-space array onto the dealiased band."""
    if grid.dealias_fraction == 1.0:
        return values
    out = sfft.ifftn(sfft.fftn(values) * grid.dealias_mask)
    return out if np.iscomplexobj(values) else out.real


def gradient_array(values: np.ndarray, grid: GridSpec, dealiased: bool = True) -> np.ndarray:
    """Spectral gradient of a real or complex array, shape ``(dim, *grid.shape)``."""
    spec = sfft.fftn(values)
    if dealiased:
        spec = spec * grid.dealias_mask
    out = np.stack([sfft.ifftn(1j * k * spec) for k in grid.derivative_wavenumbers])
    return out if np.iscomplexobj(values) else out.real


def spectral_gradient(f: ScalarField, dealiased: bool = True) -> VectorField:
    """Exact derivative of the trigonometric interpolant, optionally band-limited."""
    return VectorField(f.grid, gradient_array(f.grid.check(f.values), f.grid, dealiased))


def spectral_divergence(v: VectorField, dealiased: bool = True) -> ScalarField:
    grid = v.grid
    total = np.zeros(grid.shape, dtype=complex)
    for k, comp in zip(grid.derivative_wavenumbers, v.components):
        total += 1j * k * sfft.fftn(comp)
    if dealiased:
        total *= grid.dealias_mask
    return ScalarField(grid, sfft.ifftn(total).real)


def spectral_laplacian(f: ScalarField) -> ScalarField:
    return ScalarField(f.grid, sfft.ifftn(-f.grid.k2 * sfft.fftn(f.values)).real)


def poisson_solve(source: ScalarField) -> ScalarField:
    """Solve ``-lap(phi) = source - mean(source)`` with zero-mean ``phi``.

    For ``dim == 3`` this is ``V * source`` with ``V(z) = 1/(4 pi |z|)`` on the
    torus with a neutralizing background; in other dimensions the same
    multiplier is used (not the Coulomb kernel, see ``GridSpec.is_coulomb``).
    """
    grid = source.grid
    return ScalarField(grid, sfft.ifftn(sfft.fftn(source.values) * grid.inverse_k2).real)


def potential_gradient(rho: ScalarField, dealiased: bool = False) -> VectorField:
    """``grad(V * rho)``: the single code path used by every force computation."""
    return spectral_gradient(poisson_solve(rho), dealiased=dealiased)


def coulomb_pairing(a: ScalarField, b: ScalarField) -> float:
    """``<a, V * b>`` summed over non-zero modes (box-normalized Parseval)."""
    grid = a.grid
    if b.grid != grid:
        raise ConfigurationError("coulomb_pairing needs fields on the same grid")
    fa = sfft.fftn(a.values)
    fb = sfft.fftn(b.values)
    return float(np.sum((np.conj(fa) * fb).real * grid.inverse_k2) * grid.cell_volume / grid.ncells)
