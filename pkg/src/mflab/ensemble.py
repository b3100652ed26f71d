"""Classical N-particle mean-field Coulomb dynamics and the configuration
functionals ``F_N`` and ``F'_N``.

Particles interact through ``(1/N) V``. In periodic mode ``V`` is the zero-mean
periodic Green's function of ``-lap`` on the box (point charge plus uniform
neutralizing background), evaluated by an Ewald split; it is the same kernel
``poisson_solve`` applies on the grid. Free-space mode uses ``1/(4 pi |z|)``
with no images and exists for closed-form oracles at small ``N``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import cached_property

import numpy as np
from scipy import ndimage, special

from .errors import InputError, NearCollisionError, SingularityError, StepSizeError
from .grid import GridSpec, ScalarField, VectorField, gradient_array, poisson_solve, potential_gradient

__all__ = [
    "ParticleSystem",
    "ConfigurationEnergy",
    "SerfatyReport",
    "EwaldKernel",
    "FreeSpaceKernel",
    "GridInterpolator",
    "mean_field_forces",
    "nbody_step",
    "nbody_run",
    "step_guard",
    "classical_energy",
    "configuration_f_n",
    "configuration_f_prime_n",
    "configuration_energy",
    "kinetic_modulated_particles",
    "serfaty_diagnostics",
    "sample_positions",
    "monokinetic_sample",
    "lattice_positions",
    "test_function_battery",
    "battery_discrepancies",
]

COLLISION_FRACTION = 1e-10
PAIR_BLOCK = 128
_FOUR_PI = 4.0 * math.pi


# --------------------------------------------------------------------------- kernels


class FreeSpaceKernel:
    """``V(z) = 1/(4 pi |z|)`` summed over all pairs, no images."""

    periodic = False

    def potential(self, z: np.ndarray) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        r = np.linalg.norm(z, axis=-1)
        if np.any(r == 0):
            raise SingularityError("free-space kernel evaluated at z = 0")
        return 1.0 / (_FOUR_PI * r)

    def pair_sums(self, x: np.ndarray) -> tuple[float, np.ndarray, float]:
        """``(sum_{j<k} V, g, r_min)`` with ``g_j = sum_k grad V(x_j - x_k)``."""
        n = len(x)
        energy = 0.0
        g = np.zeros_like(x)
        r_min = math.inf
        for i0 in range(0, n, PAIR_BLOCK):
            d = x[i0 : i0 + PAIR_BLOCK, None, :] - x[None, :, :]
            r = np.linalg.norm(d, axis=-1)
            rows = np.arange(d.shape[0])
            r[rows, i0 + rows] = np.inf
            r_min = min(r_min, float(r.min()))
            inv = 1.0 / r
            energy += 0.5 * float(np.sum(inv)) / _FOUR_PI
            g[i0 : i0 + PAIR_BLOCK] = -np.einsum("ijc,ij->ic", d, inv**3) / _FOUR_PI
        return energy, g, r_min


class EwaldKernel:
    """Zero-mean periodic Coulomb kernel on the cube ``[-L/2, L/2)^3``.

    ``G(r) = sum_n erfc(a|r_n|)/(4 pi |r_n|) + L^-3 sum_{k != 0} e^{-k^2/4a^2} cos(k.r)/k^2
    - 1/(4 a^2 L^3)``. The splitting parameter is chosen so that only the
    minimum image contributes to the real-space sum at tolerance ``tol``; the
    reciprocal sum runs over the cube ``|m_i| <= m_max``.
    """

    periodic = True

    def __init__(self, box_length: float, tol: float = 1e-12, alpha: float | None = None):
        if not box_length > 0:
            raise InputError("box_length must be positive")
        self.box_length = float(box_length)
        x = math.sqrt(-math.log(tol))
        self.alpha = float(alpha) if alpha is not None else 2 * x / self.box_length
        # e^{-k^2/4a^2} < tol  <=>  k > 2 a x
        self.m_max = int(math.ceil(self.alpha * x * self.box_length / math.pi))
        # Real-space truncation at the minimum image requires erfc(a L / 2) small.
        self.real_space_residual = float(special.erfc(self.alpha * self.box_length / 2))

    @cached_property
    def _modes(self):
        L, a = self.box_length, self.alpha
        m = np.arange(-self.m_max, self.m_max + 1)
        k1 = 2 * np.pi * m / L
        kx, ky, kz = np.meshgrid(k1, k1, k1, indexing="ij")
        k2 = kx**2 + ky**2 + kz**2
        with np.errstate(divide="ignore"):
            w = np.where(k2 > 0, np.exp(-k2 / (4 * a * a)) / k2, 0.0)
        n1 = m.size
        return k1, w.reshape(n1, n1 * n1), (kx.reshape(n1, -1), ky.reshape(n1, -1), kz.reshape(n1, -1))

    @property
    def background_constant(self) -> float:
        return 1.0 / (4 * self.alpha**2 * self.box_length**3)

    def _wrap(self, d: np.ndarray) -> np.ndarray:
        L = self.box_length
        return d - L * np.round(d / L)

    def potential(self, z: np.ndarray) -> np.ndarray:
        """Pointwise ``G(z)`` for displacement vectors ``z`` of shape ``(..., 3)``."""
        z = self._wrap(np.asarray(z, dtype=float))
        r = np.linalg.norm(z, axis=-1)
        if np.any(r == 0):
            raise SingularityError("periodic kernel evaluated at z = 0 (mod L)")
        k1, w, (kx, ky, kz) = self._modes
        flat = z.reshape(-1, 3)
        rec = np.empty(len(flat))
        for i, p in enumerate(flat):
            rec[i] = np.sum(w * np.cos(kx * p[0] + ky * p[1] + kz * p[2]))
        rec = rec.reshape(r.shape) / self.box_length**3
        real = special.erfc(self.alpha * r) / (_FOUR_PI * r)
        return real + rec - self.background_constant

    def pair_sums(self, x: np.ndarray) -> tuple[float, np.ndarray, float]:
        """``(sum_{j<k} G, g, r_min)`` with ``g_j = sum_k grad G(x_j - x_k)``."""
        n = len(x)
        a, L = self.alpha, self.box_length
        energy = 0.0
        g = np.zeros_like(x)
        r_min = math.inf
        c = 2 * a / math.sqrt(math.pi)
        for i0 in range(0, n, PAIR_BLOCK):
            i1 = min(i0 + PAIR_BLOCK, n)
            # upper triangle only: row block against columns i0.. n
            d = self._wrap(x[i0:i1, None, :] - x[None, i0:, :])
            r = np.linalg.norm(d, axis=-1)
            lower = np.arange(i1 - i0)[:, None] >= np.arange(n - i0)[None, :]
            r[lower] = np.inf
            r_min = min(r_min, float(r.min()))
            ar = a * r
            erfc_ar = special.erfc(ar)
            energy += float(np.sum(erfc_ar / r)) / _FOUR_PI
            # grad of erfc(ar)/(4 pi r) is -z (erfc(ar) + c r e^{-a^2 r^2}) / (4 pi r^3)
            with np.errstate(invalid="ignore"):
                radial = (erfc_ar + c * r * np.exp(-(ar**2))) / r**3
            radial[lower] = 0.0
            pull = d * radial[..., None]
            g[i0:i1] -= pull.sum(axis=1) / _FOUR_PI
            g[i0:] += pull.sum(axis=0) / _FOUR_PI

        k1, w, kvec = self._modes
        phase = 1j * x[:, :, None] * k1[None, None, :]
        ex, ey, ez = (np.exp(phase[:, i, :]) for i in range(3))
        eyz = (ey[:, :, None] * ez[:, None, :]).reshape(n, -1)
        s = ex.T @ eyz  # structure factor S(k) = sum_j e^{i k.x_j}
        energy += 0.5 * float(np.sum(w * (np.abs(s) ** 2 - n))) / L**3
        energy -= n * (n - 1) / 2 * self.background_constant
        sc = np.conj(s)
        for comp, kc in enumerate(kvec):
            t = eyz @ (w * kc * sc).T
            g[:, comp] -= np.sum(ex * t, axis=1).imag / L**3
        return energy, g, r_min


# --------------------------------------------------------------------------- particles


@dataclass(frozen=True, eq=False)
class ParticleSystem:
    positions: np.ndarray
    velocities: np.ndarray
    box_length: float
    time: float = 0.0
    seed: int = 0
    periodic: bool = True
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        x = np.array(self.positions, dtype=float)
        v = np.array(self.velocities, dtype=float)
        if x.ndim != 2 or x.shape[1] != 3 or x.shape != v.shape:
            raise InputError(f"positions/velocities must both have shape (N, 3); got {x.shape}, {v.shape}")
        if not self.box_length > 0:
            raise InputError("box_length must be positive")
        if self.periodic:
            x = x - self.box_length * np.floor((x + 0.5 * self.box_length) / self.box_length)
        object.__setattr__(self, "positions", x)
        object.__setattr__(self, "velocities", v)

    @property
    def n(self) -> int:
        return len(self.positions)

    @cached_property
    def kernel(self):
        return EwaldKernel(self.box_length) if self.periodic else FreeSpaceKernel()

    def pair_data(self) -> tuple[float, np.ndarray, float]:
        """Cached ``(sum_{j<k} V, g, r_min)`` for the current positions."""
        if "pairs" not in self._cache:
            energy, g, r_min = self.kernel.pair_sums(self.positions)
            if r_min < COLLISION_FRACTION * self.box_length:
                raise NearCollisionError(
                    f"pair distance {r_min:.3g} below {COLLISION_FRACTION:g} * box_length",
                    dump=dict(positions=self.positions.copy(), velocities=self.velocities.copy(), time=self.time),
                )
            self._cache["pairs"] = (energy, g, r_min)
        return self._cache["pairs"]

    @property
    def min_pair_distance(self) -> float:
        return self.pair_data()[2]

    def evolve(self, positions, velocities, dt) -> "ParticleSystem":
        new = replace(self, positions=positions, velocities=velocities, time=self.time + dt, _cache={})
        # kernels are stateless given the box, so reuse the precomputed one
        if "kernel" in self.__dict__:
            new.__dict__["kernel"] = self.kernel
        return new


def mean_field_forces(ps: ParticleSystem) -> np.ndarray:
    """``F_j = -(1/N) sum_{k != j} grad V(x_j - x_k)``, shape ``(N, 3)``."""
    if ps.n < 2:
        raise InputError("need at least two particles")
    return -ps.pair_data()[1] / ps.n


def classical_energy(ps: ParticleSystem) -> float:
    """``(1/2) sum |v_j|^2 + (1/N) sum_{j<k} V(x_j - x_k)``, conserved by the flow."""
    return 0.5 * float(np.sum(ps.velocities**2)) + ps.pair_data()[0] / ps.n


def step_guard(ps: ParticleSystem, c: float = 0.2) -> float:
    """Largest step allowed by the closest pair: ``c sqrt(4 pi N r_min^3)``.

    That is the free-fall time scale of a pair at distance ``r_min`` under the
    ``1/N``-scaled coupling.
    """
    return c * math.sqrt(_FOUR_PI * ps.n * ps.min_pair_distance**3)


def nbody_step(ps: ParticleSystem, dt: float, dt_max: float = math.inf, guard_c: float = 0.2) -> ParticleSystem:
    """One velocity-Verlet (kick-drift-kick) step."""
    if not dt > 0:
        raise StepSizeError("dt must be positive")
    limit = min(dt_max, step_guard(ps, guard_c))
    if dt > limit * (1 + 1e-12):
        raise StepSizeError(f"dt = {dt:.4g} exceeds the close-pair guard {limit:.4g}")
    f0 = mean_field_forces(ps)
    v_half = ps.velocities + 0.5 * dt * f0
    nxt = ps.evolve(ps.positions + dt * v_half, v_half, dt)
    v1 = v_half + 0.5 * dt * mean_field_forces(nxt)
    out = nxt.evolve(nxt.positions, v1, 0.0)
    out._cache.update(nxt._cache)
    return out


def _retimed(ps: ParticleSystem, time: float) -> ParticleSystem:
    out = ps.evolve(ps.positions, ps.velocities, time - ps.time)
    out._cache.update(ps._cache)
    return out


def nbody_run(
    ps: ParticleSystem, dt: float, n_steps: int, guard_c: float = 0.2, max_halvings: int = 12, callback=None
) -> ParticleSystem:
    """Fixed output cadence ``dt``; steps that violate the guard are subdivided."""
    for _ in range(n_steps):
        t_target = ps.time + dt
        remaining = dt
        while remaining > 1e-14 * dt:
            h = remaining
            for _ in range(max_halvings + 1):
                if h <= step_guard(ps, guard_c) * (1 + 1e-12):
                    break
                h *= 0.5
            else:
                raise StepSizeError(f"step guard needs more than {max_halvings} halvings at t = {ps.time:.6g}")
            ps = nbody_step(ps, h, guard_c=guard_c)
            remaining -= h
        if ps.time != t_target:
            ps = _retimed(ps, t_target)
        if callback is not None:
            callback(ps)
    return ps


# --------------------------------------------------------------------------- grid <-> particles


class GridInterpolator:
    """Quintic periodic B-spline interpolation of grid fields at particle positions."""

    order = 5

    def __init__(self, grid: GridSpec):
        if grid.dim != 3:
            raise InputError("particle diagnostics need a 3-D grid")
        self.grid = grid

    def coefficients(self, values: np.ndarray) -> np.ndarray:
        return ndimage.spline_filter(np.asarray(values, dtype=float), order=self.order, mode="grid-wrap")

    def index_coordinates(self, points: np.ndarray) -> np.ndarray:
        g = self.grid
        return ((np.asarray(points, dtype=float) + 0.5 * g.box_length) / g.h).T

    def __call__(self, values: np.ndarray, points: np.ndarray, coefficients: bool = False) -> np.ndarray:
        coeffs = values if coefficients else self.coefficients(values)
        return ndimage.map_coordinates(
            coeffs, self.index_coordinates(points), order=self.order, mode="grid-wrap", prefilter=False
        )


def _check_density(ps: ParticleSystem, rho: ScalarField):
    grid = rho.grid
    if grid.dim != 3:
        raise InputError("configuration functionals need a 3-D density")
    if not ps.periodic:
        raise InputError("configuration functionals are defined in periodic mode")
    if not math.isclose(grid.box_length, ps.box_length, rel_tol=1e-12):
        raise InputError("particle box and grid box differ")
    mass = rho.integral()
    if abs(mass - 1.0) > 1e-8:
        raise InputError(f"rho must be a probability density (mass {mass:.12g})")


def configuration_f_n(ps: ParticleSystem, rho: ScalarField) -> float:
    """``F_N = sum_{j != k} V(x_j - x_k) - 2N sum_j (V*rho)(x_j) + N^2 <rho, V rho>``."""
    _check_density(ps, rho)
    n = ps.n
    phi = poisson_solve(rho)
    pair = 2 * ps.pair_data()[0] if n >= 2 else 0.0
    interp = GridInterpolator(rho.grid)
    local = float(np.sum(interp(phi.values, ps.positions)))
    self_term = rho.grid.integrate(phi.values * rho.values)
    return pair - 2 * n * local + n * n * self_term


def _mixed_fields(rho: ScalarField, u: VectorField):
    """``u.grad(V*rho) - div V*(rho u)``: the one-particle mixed kernel integral."""
    grid = rho.grid
    grad_phi = potential_gradient(rho).components
    w = np.zeros(grid.shape)
    for i in range(grid.dim):
        phi_i = poisson_solve(ScalarField(grid, rho.values * u.components[i])).values
        w += gradient_array(phi_i, grid, dealiased=False)[i]
    return grad_phi, w


def configuration_f_prime_n(ps: ParticleSystem, rho: ScalarField, u: VectorField) -> float:
    """Three-term functional with kernel ``(u(x) - u(y)) . grad V(x - y)``."""
    _check_density(ps, rho)
    if u.grid != rho.grid:
        raise InputError("rho and u must share a grid")
    n = ps.n
    grid = rho.grid
    interp = GridInterpolator(grid)
    u_at = np.stack([interp(c, ps.positions) for c in u.components], axis=1)
    # sum_{j != k} (u_j - u_k).grad V(x_j - x_k) = 2 sum_j u_j . g_j by antisymmetry
    pair = 2 * float(np.sum(u_at * ps.pair_data()[1])) if n >= 2 else 0.0
    grad_phi, w = _mixed_fields(rho, u)
    one_body = np.sum(u.components * grad_phi, axis=0) - w
    local = float(np.sum(interp(one_body, ps.positions)))
    self_term = grid.integrate(rho.values * one_body)
    return pair - 2 * n * local + n * n * self_term


def kinetic_modulated_particles(ps: ParticleSystem, u: VectorField) -> float:
    """``(1/N) sum_j |v_j - u(x_j)|^2``."""
    interp = GridInterpolator(u.grid)
    u_at = np.stack([interp(c, ps.positions) for c in u.components], axis=1)
    return float(np.sum((ps.velocities - u_at) ** 2)) / ps.n


@dataclass(frozen=True)
class ConfigurationEnergy:
    f_n: float
    f_prime_n: float
    kinetic_modulated: float
    total_modulated_per_particle: float
    lower_bound_scale: float

    @property
    def f_n_scaled(self) -> float:
        return self.total_modulated_per_particle - self.kinetic_modulated


def configuration_energy(ps: ParticleSystem, rho: ScalarField, u: VectorField) -> ConfigurationEnergy:
    """All configuration diagnostics at once.

    ``lower_bound_scale = N^{4/3} ||rho||_inf^{1/3}`` is the size of the
    lower bound on ``F_N`` (with unit constant); it is recorded, not enforced.
    """
    n = ps.n
    f = configuration_f_n(ps, rho)
    fp = configuration_f_prime_n(ps, rho, u)
    k = kinetic_modulated_particles(ps, u)
    scale = n ** (4 / 3) * max(float(rho.values.max()), 0.0) ** (1 / 3)
    return ConfigurationEnergy(f, fp, k, k + f / n**2, scale)


# --------------------------------------------------------------------------- scaling report


@dataclass(frozen=True)
class SerfatyReport:
    n_values: tuple[int, ...]
    f_negative_max: tuple[float, ...]
    f_prime_max: tuple[float, ...]
    exponent_a: float
    exponent_b: float | None
    c_fit: float | None
    a_consistent: bool
    b_consistent: bool | None


def _loglog_slope(x, y) -> float:
    return float(np.polyfit(np.log(x), np.log(y), 1)[0])


def serfaty_diagnostics(samples, tiny: float = 1e-300) -> SerfatyReport:
    """Scaling of ``(F_N)_-`` and of ``|F'_N| - C ||grad u|| F_N`` with ``N``.

    ``samples`` is an iterable of ``(ps, rho, u)``. ``C_fit`` is the median of
    ``|F'_N| / (||grad u||_inf |F_N|)``. The exponent ``b`` is ``None`` when all
    ``F'_N`` vanish (within ``1e-12`` of ``N``) since no power law can be fitted.
    """
    by_n: dict[int, list] = {}
    for ps, rho, u in samples:
        f = configuration_f_n(ps, rho)
        fp = configuration_f_prime_n(ps, rho, u)
        grads = np.stack([gradient_array(c, u.grid, dealiased=False) for c in u.components])
        gu = float(np.max(np.sqrt(np.sum(grads**2, axis=(0, 1)))))
        by_n.setdefault(ps.n, []).append((f, fp, gu))
    ns = sorted(by_n)
    if len(ns) < 3 or ns[-1] < 10 * ns[0]:
        raise InputError("need at least three values of N spanning a decade")
    f_neg = [max(max(0.0, -f) for f, _, _ in by_n[n]) for n in ns]
    f_prime = [max(abs(fp) for _, fp, _ in by_n[n]) for n in ns]
    a = _loglog_slope(ns, np.maximum(f_neg, tiny))

    ratios = [abs(fp) / (gu * abs(f)) for n in ns for f, fp, gu in by_n[n] if gu > 0 and f != 0]
    if all(fp_max <= 1e-12 * n for fp_max, n in zip(f_prime, ns)) or not ratios:
        return SerfatyReport(tuple(ns), tuple(f_neg), tuple(f_prime), a, None, None, a <= 4 / 3 + 0.15, None)
    c_fit = float(np.median(ratios))
    resid = [max(abs(fp) - c_fit * gu * f for f, fp, gu in by_n[n]) for n in ns]
    b = _loglog_slope(ns, np.maximum(resid, tiny))
    return SerfatyReport(tuple(ns), tuple(f_neg), tuple(f_prime), a, b, c_fit, a <= 4 / 3 + 0.15, b <= 5 / 3 + 0.15)


# --------------------------------------------------------------------------- sampling


def sample_positions(rho: ScalarField, n: int, rng: np.random.Generator, method: str = "spline") -> np.ndarray:
    """Draw ``n`` iid positions from a grid density.

    ``method="cell"`` is plain inverse-CDF sampling of the piecewise-constant
    density (cell chosen from the flattened CDF, uniform inside the cell).
    ``method="spline"`` uses that as a proposal and accepts against the quintic
    spline interpolant of ``rho``, so samples follow the smooth density the
    diagnostics integrate against.
    """
    grid = rho.grid
    if grid.dim != 3:
        raise InputError("sampling needs a 3-D density")
    if n < 1:
        raise InputError("n must be positive")
    vals = np.maximum(rho.values, 0.0)
    if method == "cell":
        return _cell_draw(grid, vals, n, rng)
    if method != "spline":
        raise InputError(f"unknown sampling method {method!r}")
    envelope = 1.25 * ndimage.maximum_filter(vals, size=3, mode="wrap") + 1e-12 * vals.max()
    interp = GridInterpolator(grid)
    coeffs = interp.coefficients(rho.values)
    out = np.empty((0, 3))
    while len(out) < n:
        batch = max(2 * (n - len(out)), 64)
        pts, env = _cell_draw(grid, envelope, batch, rng, return_values=True)
        target = np.maximum(interp(coeffs, pts, coefficients=True), 0.0)
        ratio = target / env
        if ratio.max() > 1.0:
            raise InputError("spline overshoots the sampling envelope; refine the grid")
        out = np.concatenate([out, pts[rng.random(batch) < ratio]])
    return out[:n]


def _cell_draw(grid, weights, n, rng, return_values=False):
    flat = weights.ravel()
    cdf = np.cumsum(flat)
    idx = np.searchsorted(cdf, rng.random(n) * cdf[-1], side="right")
    idx = np.minimum(idx, flat.size - 1)
    ijk = np.stack(np.unravel_index(idx, grid.shape), axis=1)
    pts = grid.axis[ijk] + grid.h * (rng.random((n, 3)) - 0.5)
    L = grid.box_length
    pts = pts - L * np.floor((pts + 0.5 * L) / L)
    return (pts, flat[idx]) if return_values else pts


def monokinetic_sample(
    rho: ScalarField, u: VectorField, n: int, seed: int, method: str = "spline"
) -> ParticleSystem:
    """Positions iid from ``rho``, velocities ``u(x_j)``."""
    rng = np.random.default_rng(seed)
    x = sample_positions(rho, n, rng, method)
    interp = GridInterpolator(rho.grid)
    v = np.stack([interp(c, x) for c in u.components], axis=1)
    return ParticleSystem(x, v, rho.grid.box_length, seed=seed)


def lattice_positions(per_axis: int, box_length: float) -> np.ndarray:
    """Simple cubic lattice of ``per_axis**3`` sites filling the box."""
    a = box_length / per_axis
    c = -0.5 * box_length + a * (np.arange(per_axis) + 0.5)
    return np.stack(np.meshgrid(c, c, c, indexing="ij"), axis=-1).reshape(-1, 3)


# --------------------------------------------------------------------------- weak seminorm battery


def test_function_battery(box_length: float):
    """Five smooth periodic test functions: three Fourier modes, two periodized Gaussians."""
    L = box_length
    k = 2 * np.pi / L

    def gaussian(center, width):
        center = np.asarray(center, dtype=float)

        def phi(x):
            d = x - center
            d = d - L * np.round(d / L)
            return np.exp(-0.5 * np.sum(d**2, axis=-1) / width**2)

        return phi

    return {
        "cos_x": lambda x: np.cos(k * x[..., 0]),
        "sin_y": lambda x: np.sin(k * x[..., 1]),
        "cos_xyz": lambda x: np.cos(k * (x[..., 0] + x[..., 1] + x[..., 2])),
        "gauss_center": gaussian((0.0, 0.0, 0.0), 1.0),
        "gauss_offset": gaussian((1.0, 0.5, 0.0), 1.5),
    }


# Not a pytest test despite the name.
test_function_battery.__test__ = False


def battery_discrepancies(ps: ParticleSystem, rho: ScalarField) -> dict[str, float]:
    """``|<mu_{X_N} - rho, phi_m>|`` for each battery function."""
    grid = rho.grid
    pts = np.stack(np.broadcast_arrays(*grid.coordinates), axis=-1)
    out = {}
    for name, phi in test_function_battery(grid.box_length).items():
        empirical = float(np.mean(phi(ps.positions)))
        out[name] = abs(empirical - grid.integrate(phi(pts) * rho.values))
    return out
