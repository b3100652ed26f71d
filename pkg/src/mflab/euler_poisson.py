"""Pressureless Euler-Poisson system

    d_t rho + div(rho u) = 0,     d_t u + (u.grad) u + grad(V * rho) = 0,

by spectral collocation and classical RK4, with a regularity monitor and the
WKB preparation that matches quantum and fluid initial data.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.fft as sfft

from .errors import BlowUpError, InputError, StepSizeError
from .grid import (
    GridSpec,
    ScalarField,
    VectorField,
    WaveField,
    coulomb_pairing,
    dealias,
    gradient_array,
    potential_gradient,
)

__all__ = [
    "FluidState",
    "RegularityMonitor",
    "EulerPoissonSolver",
    "euler_poisson_rhs",
    "euler_poisson_step",
    "regularity_monitor",
    "fluid_mass",
    "fluid_momentum",
    "fluid_energy",
    "wkb_initializer",
]

RHO_FLOOR = 1e-30


@dataclass(frozen=True, eq=False)
class FluidState:
    rho: ScalarField
    u: VectorField
    time: float = 0.0

    @property
    def grid(self) -> GridSpec:
        return self.rho.grid

    def dealiased(self) -> "FluidState":
        """Project rho and u onto the dealiased band (exactly conservative afterwards)."""
        g = self.grid
        u = np.stack([dealias(c, g) for c in self.u.components])
        return FluidState(ScalarField(g, dealias(self.rho.values, g)), VectorField(g, u), self.time)


@dataclass(frozen=True)
class RegularityMonitor:
    grad_u_inf: float
    laplacian_div_u_inf: float
    rho_inf: float
    blow_up_flag: bool


def _masked_product(values: np.ndarray, grid: GridSpec) -> np.ndarray:
    return dealias(values, grid)


def euler_poisson_rhs(state: FluidState) -> tuple[ScalarField, VectorField]:
    grid = state.grid
    rho = state.rho.values
    u = state.u.components
    mask = grid.dealias_mask

    div_flux = np.zeros(grid.shape, dtype=complex)
    for k, uj in zip(grid.derivative_wavenumbers, u):
        div_flux += 1j * k * sfft.fftn(rho * uj)
    drho = -sfft.ifftn(div_flux * mask).real

    force = potential_gradient(state.rho).components
    du = np.empty_like(u)
    for i in range(grid.dim):
        grad_ui = gradient_array(u[i], grid, dealiased=True)
        adv = np.sum(u * grad_ui, axis=0)
        du[i] = -_masked_product(adv, grid) - force[i]
    return ScalarField(grid, drho), VectorField(grid, du)


def regularity_monitor(state: FluidState, threshold: float = np.inf) -> RegularityMonitor:
    """Sup norms of grad u (pointwise Frobenius), lap(div u) and rho."""
    grid = state.grid
    u = state.u.components
    grads = np.stack([gradient_array(c, grid, dealiased=False) for c in u])
    grad_inf = float(np.max(np.sqrt(np.sum(grads**2, axis=(0, 1)))))
    div = np.sum([grads[i, i] for i in range(grid.dim)], axis=0)
    lap_div = sfft.ifftn(-grid.k2 * sfft.fftn(div)).real
    rho_inf = float(np.max(state.rho.values))
    finite = np.isfinite(grad_inf) and np.isfinite(rho_inf)
    return RegularityMonitor(
        grad_inf, float(np.max(np.abs(lap_div))), rho_inf, (not finite) or grad_inf > threshold
    )


def fluid_mass(state: FluidState) -> float:
    return state.rho.integral()


def fluid_momentum(state: FluidState) -> np.ndarray:
    g = state.grid
    return np.array([g.integrate(state.rho.values * c) for c in state.u.components])


def fluid_energy(state: FluidState) -> float:
    """``(1/2) int rho |u|^2 + (1/2) <rho, V * rho>``."""
    g = state.grid
    kinetic = 0.5 * g.integrate(state.rho.values * np.sum(state.u.components**2, axis=0))
    return kinetic + 0.5 * coulomb_pairing(state.rho, state.rho)


class EulerPoissonSolver:
    """Classical RK4 with a CFL guard and positivity/NaN abort."""

    def __init__(self, cfl: float = 0.5, positivity_tol: float = 1e-6):
        self.cfl = cfl
        self.positivity_tol = positivity_tol

    def max_dt(self, state: FluidState) -> float:
        vmax = float(np.max(state.u.magnitude())) if state.u.components.size else 0.0
        return self.cfl * state.grid.h / max(vmax, 1.0)

    def step(self, state: FluidState, dt: float) -> FluidState:
        if not dt > 0:
            raise StepSizeError("dt must be positive")
        limit = self.max_dt(state)
        if dt > limit * (1 + 1e-12):
            raise StepSizeError(f"dt = {dt} violates the CFL bound {limit:.4g}")
        g = state.grid

        def shifted(base, k, c):
            return FluidState(
                ScalarField(g, base.rho.values + c * k[0].values),
                VectorField(g, base.u.components + c * k[1].components),
                base.time,
            )

        k1 = euler_poisson_rhs(state)
        k2 = euler_poisson_rhs(shifted(state, k1, 0.5 * dt))
        k3 = euler_poisson_rhs(shifted(state, k2, 0.5 * dt))
        k4 = euler_poisson_rhs(shifted(state, k3, dt))
        rho = state.rho.values + dt / 6 * (k1[0].values + 2 * k2[0].values + 2 * k3[0].values + k4[0].values)
        u = state.u.components + dt / 6 * (
            k1[1].components + 2 * k2[1].components + 2 * k3[1].components + k4[1].components
        )
        if not (np.all(np.isfinite(rho)) and np.all(np.isfinite(u))):
            raise BlowUpError("non-finite fluid state", state.time)
        if rho.min() < -self.positivity_tol:
            raise BlowUpError(f"density went negative ({rho.min():.3g})", state.time)
        return FluidState(ScalarField(g, rho), VectorField(g, u), state.time + dt)

    def run(self, state: FluidState, dt: float, n_steps: int) -> FluidState:
        for _ in range(n_steps):
            state = self.step(state, dt)
        return state


def euler_poisson_step(state: FluidState, dt: float, solver: EulerPoissonSolver | None = None) -> FluidState:
    return (solver or EulerPoissonSolver()).step(state, dt)


def wkb_initializer(rho_in: ScalarField, phase: ScalarField, hbar: float) -> tuple[WaveField, FluidState]:
    """``psi = sqrt(rho_in) exp(i phase / hbar)`` and the fluid state ``(rho_in, grad phase)``."""
    grid = rho_in.grid
    if phase.grid != grid:
        raise InputError("density and phase must share a grid")
    if not hbar > 0:
        raise InputError("hbar must be positive")
    amplitude = np.sqrt(np.maximum(rho_in.values, RHO_FLOOR))
    psi = WaveField(grid, hbar, amplitude * np.exp(1j * phase.values / hbar), normalize=True)
    u = VectorField(grid, gradient_array(phase.values, grid, dealiased=False))
    return psi, FluidState(rho_in, u, 0.0)
