"""Pure-state Hartree dynamics

    i hbar d_t psi = -(hbar^2/2) lap psi + (V * |psi|^2) psi

by Strang splitting on the periodic grid, with density, current and energy
observables.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.fft as sfft

from .errors import BlowUpError, InputError, StepSizeError
from .grid import GridSpec, ScalarField, VectorField, WaveField, gradient_array

__all__ = [
    "HartreeState",
    "HartreeEnergy",
    "HartreeSolver",
    "hartree_step",
    "mean_field_potential",
    "density",
    "current",
    "hartree_energy",
    "continuity_residual",
    "fourth_moment",
    "ground_state",
]


@dataclass(frozen=True, eq=False)
class HartreeState:
    psi: WaveField
    time: float = 0.0
    step_count: int = 0
    # V*rho of this psi, cached between steps (the phase substeps leave rho unchanged)
    potential: np.ndarray | None = field(default=None, repr=False)

    @property
    def grid(self) -> GridSpec:
        return self.psi.grid

    @property
    def hbar(self) -> float:
        return self.psi.hbar


@dataclass(frozen=True)
class HartreeEnergy:
    kinetic: float
    potential: float
    external: float = 0.0

    @property
    def total(self) -> float:
        return self.kinetic + self.potential + self.external


def mean_field_potential(rho: np.ndarray, grid: GridSpec) -> np.ndarray:
    """``V * rho`` with the density spectrum dealiased before the Poisson solve."""
    spec = sfft.fftn(rho) * grid.inverse_k2
    if grid.dealias_fraction < 1.0:
        spec *= grid.dealias_mask
    return sfft.ifftn(spec).real


class HartreeSolver:
    """Strang-split propagator.

    ``interaction=False`` zeroes ``V * rho`` (free Schroedinger evolution);
    ``self_consistent=False`` reuses the potential of the start of the step for
    the second half kick. ``external`` is an optional static potential added to
    the mean field (used only for stationary-state tests).
    """

    def __init__(
        self,
        interaction: bool = True,
        self_consistent: bool = True,
        dt_max: float | None = None,
        external: np.ndarray | None = None,
        blowup_factor: float = 1e6,
    ):
        self.interaction = interaction
        self.self_consistent = self_consistent
        self.dt_max = dt_max
        self.external = external
        self.blowup_factor = blowup_factor
        self._kinetic_cache: dict = {}
        self._reference_max: float | None = None

    def potential(self, psi: np.ndarray, grid: GridSpec) -> np.ndarray:
        if self.interaction:
            phi = mean_field_potential(np.abs(psi) ** 2, grid)
        else:
            phi = np.zeros(grid.shape)
        if self.external is not None:
            phi = phi + self.external
        return phi

    def _kinetic(self, grid: GridSpec, hbar: float, dt: float) -> np.ndarray:
        key = (grid, hbar, dt)
        prop = self._kinetic_cache.get(key)
        if prop is None:
            prop = np.exp(-0.5j * hbar * dt * grid.k2)
            self._kinetic_cache = {key: prop}
        return prop

    def step(self, state: HartreeState, dt: float) -> HartreeState:
        if dt == 0:
            raise StepSizeError("dt must be nonzero")
        if self.dt_max is not None and abs(dt) > self.dt_max:
            raise StepSizeError(f"|dt| = {abs(dt)} exceeds the configured bound {self.dt_max}")
        grid, hbar = state.grid, state.hbar
        psi = state.psi.values
        if self._reference_max is None:
            self._reference_max = float(np.max(np.abs(psi) ** 2))

        phi = state.potential if state.potential is not None else self.potential(psi, grid)
        psi = psi * np.exp(-0.5j * dt / hbar * phi)
        psi = sfft.ifftn(self._kinetic(grid, hbar, dt) * sfft.fftn(psi))
        if self.self_consistent:
            phi = self.potential(psi, grid)
        psi = psi * np.exp(-0.5j * dt / hbar * phi)

        rho_max = float(np.max(np.abs(psi) ** 2))
        if not np.isfinite(rho_max):
            raise BlowUpError("non-finite wave function", state.time)
        if rho_max > self.blowup_factor * self._reference_max:
            raise BlowUpError("density exceeded the blow-up guard", state.time)
        return HartreeState(
            WaveField(grid, hbar, psi),
            state.time + dt,
            state.step_count + 1,
            phi if self.self_consistent else None,
        )

    def run(self, state: HartreeState, dt: float, n_steps: int, every: int = 0, callback=None) -> HartreeState:
        for i in range(n_steps):
            state = self.step(state, dt)
            if callback is not None and every and (i + 1) % every == 0:
                callback(state)
        return state


def hartree_step(state: HartreeState, dt: float, solver: HartreeSolver | None = None) -> HartreeState:
    return (solver or HartreeSolver()).step(state, dt)


def density(state: HartreeState) -> ScalarField:
    return ScalarField(state.grid, np.abs(state.psi.values) ** 2)


def current(state: HartreeState) -> VectorField:
    """``J = hbar Im(conj(psi) grad psi)``, the pure-state current."""
    psi = state.psi.values
    grad = gradient_array(psi, state.grid, dealiased=False)
    return VectorField(state.grid, state.hbar * np.imag(np.conj(psi) * grad))


def hartree_energy(state: HartreeState, solver: HartreeSolver | None = None) -> HartreeEnergy:
    """Kinetic ``int |hbar grad psi|^2 / 2`` (Parseval) and ``(1/2) <rho, V * rho>``."""
    grid, hbar = state.grid, state.hbar
    psi = state.psi.values
    spec = sfft.fftn(psi)
    kinetic = 0.5 * hbar**2 * float(np.sum(grid.k2 * np.abs(spec) ** 2)) * grid.cell_volume / grid.ncells
    rho = np.abs(psi) ** 2
    solver = solver or HartreeSolver()
    potential = 0.0
    if solver.interaction:
        potential = 0.5 * grid.integrate(rho * mean_field_potential(rho, grid))
    external = grid.integrate(rho * solver.external) if solver.external is not None else 0.0
    return HartreeEnergy(kinetic, potential, external)


def fourth_moment(state: HartreeState) -> float:
    """Discrete ``<psi, |hbar D|^4 psi>`` (reported, not asserted)."""
    grid = state.grid
    spec = sfft.fftn(state.psi.values)
    return float(np.sum((state.hbar**2 * grid.k2) ** 2 * np.abs(spec) ** 2) * grid.cell_volume / grid.ncells)


def continuity_residual(states: Sequence[HartreeState]) -> float:
    """Largest ``|| (rho(t+dt) - rho(t-dt))/(2 dt) + div J(t) ||_2`` over interior states."""
    if len(states) < 3:
        raise InputError("continuity residual needs at least 3 consecutive states")
    times = np.array([s.time for s in states])
    steps = np.diff(times)
    if np.any(steps <= 0) or np.ptp(steps) > 1e-9 * abs(steps[0]):
        raise InputError("continuity residual needs a uniform, increasing time grid")
    dt = float(steps.mean())
    grid = states[0].grid
    worst = 0.0
    for prev, mid, nxt in zip(states[:-2], states[1:-1], states[2:]):
        drho = (np.abs(nxt.psi.values) ** 2 - np.abs(prev.psi.values) ** 2) / (2 * dt)
        j = current(mid).components
        div = sum(1j * k * sfft.fftn(c) for k, c in zip(grid.derivative_wavenumbers, j))
        res = drho + sfft.ifftn(div).real
        worst = max(worst, float(np.sqrt(grid.integrate(res**2))))
    return worst


def ground_state(
    psi0: WaveField, solver: HartreeSolver, dtau: float, n_steps: int, tol: float = 0.0
) -> WaveField:
    """Imaginary-time Strang relaxation with renormalization after each step."""
    grid, hbar = psi0.grid, psi0.hbar
    decay = np.exp(-0.5 * hbar * dtau * grid.k2)
    psi = psi0.values
    for _ in range(n_steps):
        old = psi
        psi = psi * np.exp(-0.5 * dtau / hbar * solver.potential(psi, grid))
        psi = sfft.ifftn(decay * sfft.fftn(psi))
        psi = psi * np.exp(-0.5 * dtau / hbar * solver.potential(psi, grid))
        psi = psi / np.sqrt(grid.integrate(np.abs(psi) ** 2))
        if tol and np.sqrt(grid.integrate(np.abs(psi - old) ** 2)) < tol * dtau:
            break
    return WaveField(grid, hbar, psi)
