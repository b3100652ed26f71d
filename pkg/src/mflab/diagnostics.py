"""Modulated-energy functionals coupling a quantum state to a fluid solution.

All Coulomb pairings are evaluated spectrally with the multiplier ``1/|k|^2``
and the zero mode dropped, which is the same multiplier ``poisson_solve`` uses.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.fft as sfft

from .errors import ConfigurationError, InputError
from .euler_poisson import FluidState, RegularityMonitor
from .grid import ScalarField, VectorField, WaveField, coulomb_pairing, gradient_array

__all__ = [
    "ModulatedEnergyReport",
    "GronwallCheck",
    "kinetic_modulated",
    "potential_gap",
    "g_functional",
    "factorized_modulated_energy",
    "heat_weak_norm",
    "gronwall_envelope",
    "gronwall_monitor",
]

MEAN_TOL = 1e-8


@dataclass(frozen=True)
class ModulatedEnergyReport:
    time: float
    kinetic_modulated: float
    potential_gap: float
    hbar: float
    gronwall_envelope: float = math.nan
    extra_terms: dict = field(default_factory=dict)

    @property
    def g_total(self) -> float:
        return self.kinetic_modulated + self.potential_gap


def kinetic_modulated(psi: WaveField, u: VectorField) -> float:
    """``int |(-i hbar grad - u) psi|^2 dx``."""
    if psi.grid != u.grid:
        raise ConfigurationError("wave function and velocity live on different grids")
    grid = psi.grid
    grad = gradient_array(psi.values, grid, dealiased=False)
    resid = -1j * psi.hbar * grad - u.components * psi.values
    return grid.integrate(np.sum(np.abs(resid) ** 2, axis=0))


def _difference(rho1: ScalarField, rho2: ScalarField) -> ScalarField:
    if rho1.grid != rho2.grid:
        raise ConfigurationError("densities live on different grids")
    m1, m2 = rho1.integral(), rho2.integral()
    if abs(m1 - m2) > MEAN_TOL:
        raise InputError(f"densities carry different mass ({m1:.12g} vs {m2:.12g})")
    return ScalarField(rho1.grid, rho1.values - rho2.values)


def potential_gap(rho1: ScalarField, rho2: ScalarField) -> float:
    """``iint V(x-y) (rho1-rho2)(x) (rho1-rho2)(y)``, nonnegative by construction."""
    delta = _difference(rho1, rho2)
    return coulomb_pairing(delta, delta)


def heat_weak_norm(rho1: ScalarField, rho2: ScalarField, eps: float | None = None) -> float:
    """``int_eps^inf ||exp(r lap/2)(rho1 - rho2)||_2^2 dr`` via the exact r-integral.

    ``eps`` defaults to ``(2h)^2``; ``eps = 0`` reproduces ``potential_gap``.
    """
    delta = _difference(rho1, rho2)
    grid = delta.grid
    if eps is None:
        eps = (2 * grid.h) ** 2
    if eps < 0:
        raise InputError("eps must be nonnegative")
    spec = sfft.fftn(delta.values)
    weight = grid.inverse_k2 * np.exp(-eps * grid.k2)
    return float(np.sum(np.abs(spec) ** 2 * weight) * grid.cell_volume / grid.ncells)


def g_functional(psi: WaveField, fluid: FluidState) -> ModulatedEnergyReport:
    rho_h = ScalarField(psi.grid, np.abs(psi.values) ** 2)
    return ModulatedEnergyReport(
        time=fluid.time,
        kinetic_modulated=kinetic_modulated(psi, fluid.u),
        potential_gap=potential_gap(rho_h, fluid.rho),
        hbar=psi.hbar,
    )


def factorized_modulated_energy(psi: WaveField, fluid: FluidState, n: int) -> ModulatedEnergyReport:
    """Modulated energy of the factorized N-body state ``R^{(x)N}``.

    With marginals ``rho_{:1} = rho_h`` and ``rho_{:2} = rho_h (x) rho_h`` it is
    ``K + (N-1)/N <rho_h, V rho_h> + <rho, V rho> - 2 <rho_h, V rho>``; the
    report's ``extra_terms['E']`` holds it and ``g_total - E = <rho_h,V rho_h>/N``.
    """
    if n < 2:
        raise InputError("factorized modulated energy needs n >= 2")
    base = g_functional(psi, fluid)
    rho_h = ScalarField(psi.grid, np.abs(psi.values) ** 2)
    pair_hh = coulomb_pairing(rho_h, rho_h)
    pair_ff = coulomb_pairing(fluid.rho, fluid.rho)
    cross = coulomb_pairing(rho_h, fluid.rho)
    e_total = base.kinetic_modulated + (n - 1) / n * pair_hh + pair_ff - 2 * cross
    extra = dict(E=e_total, pair_term=(n - 1) / n * pair_hh, self_pair=pair_hh, fluid_pair=pair_ff, cross=cross, n=n)
    return ModulatedEnergyReport(base.time, base.kinetic_modulated, base.potential_gap, base.hbar, extra_terms=extra)


def gronwall_envelope(
    g0: float, t: float, grad_u_sup: float, lap_div_u_sup: float, hbar: float, c_growth: float
) -> float:
    """``g0 e^{c s t} + (hbar^2/2) sup|lap div u| (e^{c s t} - 1)/(c s)``, ``s = sup|grad u|``."""
    rate = c_growth * grad_u_sup
    growth = math.exp(rate * t)
    # (e^{rate t} - 1)/rate -> t as rate -> 0
    integral = t if rate * t < 1e-12 else math.expm1(rate * t) / rate
    return g0 * growth + 0.5 * hbar**2 * lap_div_u_sup * integral


@dataclass(frozen=True)
class GronwallCheck:
    passed: bool
    first_violation_time: float | None
    envelopes: tuple[float, ...]
    margins: tuple[float, ...]


def gronwall_monitor(
    reports: Sequence[ModulatedEnergyReport],
    fluid_norms: Sequence[RegularityMonitor],
    c_growth: float = 10.0,
    rtol: float = 1e-12,
) -> GronwallCheck:
    """Check ``g_total(t)`` against the envelope with running sups of the fluid norms."""
    if len(reports) != len(fluid_norms) or not reports:
        raise InputError("need one regularity record per report")
    times = np.array([r.time for r in reports])
    if len(times) > 2:
        steps = np.diff(times)
        if np.any(steps <= 0) or np.ptp(steps) > 1e-9 * max(abs(steps[0]), 1e-300):
            raise InputError("gronwall_monitor needs a uniform time grid")
    g0 = reports[0].g_total
    t0 = reports[0].time
    grad_sup = lap_sup = 0.0
    envs, margins = [], []
    violation = None
    for rep, norms in zip(reports, fluid_norms):
        grad_sup = max(grad_sup, norms.grad_u_inf)
        lap_sup = max(lap_sup, norms.laplacian_div_u_inf)
        env = gronwall_envelope(g0, rep.time - t0, grad_sup, lap_sup, rep.hbar, c_growth)
        envs.append(env)
        margins.append(env - rep.g_total)
        if violation is None and rep.g_total > env * (1 + rtol) + 1e-300:
            violation = rep.time
    return GronwallCheck(violation is None, violation, tuple(envs), tuple(margins))
