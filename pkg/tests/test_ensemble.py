"""Classical N-body dynamics, the periodic kernel, and the configuration functionals."""

import math

import numpy as np
import pytest
from scipy.integrate import quad
from hypothesis import given
from hypothesis import strategies as st

from conftest import random_velocity
from mflab.ensemble import (
    EwaldKernel,
    FreeSpaceKernel,
    GridInterpolator,
    ParticleSystem,
    battery_discrepancies,
    classical_energy,
    configuration_energy,
    configuration_f_n,
    configuration_f_prime_n,
    kinetic_modulated_particles,
    lattice_positions,
    mean_field_forces,
    monokinetic_sample,
    nbody_run,
    nbody_step,
    sample_positions,
    serfaty_diagnostics,
    step_guard,
    test_function_battery,
)
from mflab.errors import InputError, NearCollisionError, SingularityError, StepSizeError
from mflab.grid import GridSpec, ScalarField, VectorField
from mflab.profiles import gaussian_density, uniform_density

MADELUNG = -2.837297479  # simple cubic lattice with a neutralizing background
FOUR_PI = 4 * math.pi
seeds = st.integers(0, 2**32 - 1)


def trig_eval(values, grid, points):
    """Exact trigonometric interpolant of a grid field at arbitrary points (direct Fourier sum)."""
    spec = np.fft.fftn(values) / grid.ncells
    k = grid.axis_wavenumbers
    x0 = grid.axis[0]
    out = []
    for p in np.atleast_2d(points):
        e = [np.exp(1j * k * (c - x0)) for c in p]
        out.append(np.einsum("ijk,i,j,k->", spec, e[0], e[1], e[2]).real)
    return np.array(out)


def smooth_density(grid, eps=0.3):
    k = 2 * np.pi / grid.box_length
    x, y, z = grid.coordinates
    vals = 1 + eps * np.cos(k * x) * np.sin(k * y) + 0.5 * eps * np.cos(k * z) + np.zeros(grid.shape)
    return ScalarField(grid, vals / grid.integrate(vals))


class TestEwaldKernel:
    def test_alpha_independent(self, rng):
        z = rng.uniform(-2, 2, size=(5, 3))
        a = EwaldKernel(4.0).potential(z)
        b = EwaldKernel(4.0, alpha=1.7).potential(z)
        assert np.max(np.abs(a - b)) < 1e-9

    def test_madelung_limit(self):
        L = 3.0
        r = 0.05
        G = EwaldKernel(L).potential(np.array([r, 0, 0]))
        expected = 1 / (FOUR_PI * r) + MADELUNG / (FOUR_PI * L) + r**2 / (6 * L**3)
        assert G == pytest.approx(expected, abs=1e-8)

    def test_periodic_and_even(self, rng):
        k = EwaldKernel(5.0)
        z = rng.uniform(-2.5, 2.5, size=(4, 3))
        assert np.allclose(k.potential(z), k.potential(-z), atol=1e-13)
        assert np.allclose(k.potential(z), k.potential(z + np.array([5.0, -10.0, 0])), atol=1e-12)

    def test_truncation_is_tight(self):
        k = EwaldKernel(6.0)
        assert k.real_space_residual < 1e-12

    def test_singular(self):
        with pytest.raises(SingularityError):
            EwaldKernel(2.0).potential(np.array([2.0, 0, 0]))

    def test_pair_sums_match_pointwise(self, rng):
        L = 4.0
        x = rng.uniform(-L / 2, L / 2, size=(7, 3))
        k = EwaldKernel(L)
        energy, g, r_min = k.pair_sums(x)
        pairs = [(i, j) for i in range(7) for j in range(i + 1, 7)]
        direct = sum(k.potential(x[i] - x[j]) for i, j in pairs)
        assert energy == pytest.approx(float(direct), rel=1e-12)
        dists = [np.linalg.norm(k._wrap(x[i] - x[j])) for i, j in pairs]
        assert r_min == pytest.approx(min(dists))

    def test_gradient_is_energy_derivative(self, rng):
        L = 4.0
        x = rng.uniform(-L / 2, L / 2, size=(6, 3))
        k = EwaldKernel(L)
        _, g, _ = k.pair_sums(x)
        d = 1e-5
        for j, c in [(0, 0), (3, 2), (5, 1)]:
            xp, xm = x.copy(), x.copy()
            xp[j, c] += d
            xm[j, c] -= d
            fd = (k.pair_sums(xp)[0] - k.pair_sums(xm)[0]) / (2 * d)
            assert g[j, c] == pytest.approx(fd, rel=1e-6, abs=1e-9)

    def test_free_space_pair_sums(self, rng):
        x = rng.uniform(-1, 1, size=(5, 3))
        energy, g, _ = FreeSpaceKernel().pair_sums(x)
        direct = sum(1 / (FOUR_PI * np.linalg.norm(x[i] - x[j])) for i in range(5) for j in range(i + 1, 5))
        assert energy == pytest.approx(direct, rel=1e-13)


class TestForces:
    def test_two_body_free_space(self):
        d = 0.7
        ps = ParticleSystem([[0, 0, 0], [d, 0, 0]], np.zeros((2, 3)), 10.0, periodic=False)
        f = mean_field_forces(ps)
        assert f[1, 0] == pytest.approx(0.5 / (FOUR_PI * d**2), rel=1e-13)
        assert np.allclose(f[0], -f[1], atol=1e-16)

    def test_two_body_large_box_limit(self):
        d, L = 1.0, 60.0
        ps = ParticleSystem([[0, 0, 0], [d, 0, 0]], np.zeros((2, 3)), L)
        f = mean_field_forces(ps)[1, 0]
        # the image correction to the pair force is -(1/2) d / (3 L^3), next term O(d^3 / L^5)
        assert f == pytest.approx(0.5 / (FOUR_PI * d**2) - 0.5 * d / (3 * L**3), rel=1e-7)

    def test_cube_vertices(self):
        verts = np.array([[i, j, k] for i in (0, 1) for j in (0, 1) for k in (0, 1)], dtype=float) - 0.5
        ps = ParticleSystem(verts, np.zeros((8, 3)), 10.0, periodic=False)
        f = mean_field_forces(ps)
        assert np.max(np.abs(f.sum(axis=0))) < 1e-15
        # every force points radially outward from the center
        assert np.allclose(np.cross(f, verts), 0, atol=1e-15)

    @given(seeds, st.integers(2, 40), st.booleans())
    def test_antisymmetry(self, seed, n, periodic):
        r = np.random.default_rng(seed)
        ps = ParticleSystem(r.uniform(-1.5, 1.5, (n, 3)), np.zeros((n, 3)), 3.0, periodic=periodic)
        f = mean_field_forces(ps)
        assert np.max(np.abs(f.sum(axis=0))) < 1e-12 * max(1.0, np.max(np.abs(f)))

    def test_lattice_static(self):
        L = 4.0
        x = lattice_positions(3, L)
        ps = ParticleSystem(x, np.zeros_like(x), L)
        assert np.max(np.abs(mean_field_forces(ps))) < 1e-12
        out = nbody_run(ps, 0.05, 10)
        assert np.max(np.abs(out.positions - x)) < 1e-12

    def test_needs_two(self):
        with pytest.raises(InputError):
            mean_field_forces(ParticleSystem([[0, 0, 0]], [[0, 0, 0]], 1.0))


class TestParticleSystem:
    def test_wraps_into_box(self):
        ps = ParticleSystem([[2.6, -2.6, 0.1]], [[0, 0, 0]], 5.0)
        assert np.allclose(ps.positions, [[-2.4, 2.4, 0.1]])

    def test_shape_checks(self):
        with pytest.raises(InputError):
            ParticleSystem(np.zeros((3, 2)), np.zeros((3, 2)), 1.0)
        with pytest.raises(InputError):
            ParticleSystem(np.zeros((3, 3)), np.zeros((2, 3)), 1.0)

    def test_near_collision(self):
        ps = ParticleSystem([[0, 0, 0], [1e-12, 0, 0]], np.zeros((2, 3)), 1.0)
        with pytest.raises(NearCollisionError) as info:
            mean_field_forces(ps)
        assert info.value.dump["positions"].shape == (2, 3)


class TestIntegrator:
    def test_head_on_repulsion(self):
        d0 = 0.5
        x = np.array([[-d0 / 2, 0, 0], [d0 / 2, 0, 0]])
        errors = []
        for dt in (0.02, 0.01, 0.005):
            ps = nbody_run(ParticleSystem(x, np.zeros((2, 3)), 100.0, periodic=False), dt, int(round(1 / dt)))
            r = ps.positions[1, 0] - ps.positions[0, 0]
            # relative motion r'' = 1/(4 pi r^2) from rest: arrival time at r by quadrature
            arrival, _ = quad(lambda s: 1 / math.sqrt((1 / d0 - 1 / s) / (2 * math.pi)), d0, r, epsabs=1e-13)
            errors.append(abs(arrival - 1.0))
            assert np.allclose(ps.positions.sum(axis=0), 0, atol=1e-14)
        assert errors[-1] < 1e-5
        assert np.log2(errors[0] / errors[1]) == pytest.approx(2, abs=0.2)
        assert np.log2(errors[1] / errors[2]) == pytest.approx(2, abs=0.2)

    def test_energy_drift_second_order(self):
        r = np.random.default_rng(5)
        x0 = r.uniform(-1, 1, (16, 3))
        v0 = 0.3 * r.standard_normal((16, 3))
        T = 0.5
        drifts = []
        dts = np.array([0.02, 0.01, 0.005])
        for dt in dts:
            ps = ParticleSystem(x0, v0, 2.0)
            e0 = classical_energy(ps)
            worst = [0.0]
            nbody_run(ps, dt, int(round(T / dt)), callback=lambda s: worst.__setitem__(0, max(worst[0], abs(classical_energy(s) - e0))))
            drifts.append(worst[0])
        slope = np.polyfit(np.log(dts), np.log(drifts), 1)[0]
        assert abs(slope - 2.0) < 0.2

    def test_energy_conserved(self):
        r = np.random.default_rng(9)
        ps = ParticleSystem(r.uniform(-2, 2, (64, 3)), 0.2 * r.standard_normal((64, 3)), 4.0)
        e0 = classical_energy(ps)
        ps = nbody_run(ps, 0.01, 50)
        assert abs(classical_energy(ps) - e0) / abs(e0) < 1e-4
        assert ps.time == pytest.approx(0.5)

    def test_step_guard(self):
        ps = ParticleSystem([[0, 0, 0], [1e-3, 0, 0]], np.zeros((2, 3)), 1.0)
        limit = step_guard(ps)
        assert limit == pytest.approx(0.2 * math.sqrt(FOUR_PI * 2 * 1e-9))
        with pytest.raises(StepSizeError):
            nbody_step(ps, 10 * limit)
        with pytest.raises(StepSizeError):
            nbody_step(ps, 0.0)

    def test_run_subdivides(self):
        ps = ParticleSystem([[0, 0, 0], [1e-2, 0, 0]], np.zeros((2, 3)), 1.0)
        out = nbody_run(ps, 4 * step_guard(ps), 1)
        assert out.time == pytest.approx(4 * step_guard(ps))
        with pytest.raises(StepSizeError):
            nbody_run(ps, 1e6 * step_guard(ps), 1, max_halvings=3)


class TestInterpolator:
    def test_smooth_field(self, rng):
        g = GridSpec(3, 24, 6.0)
        k = 2 * np.pi / 6.0
        x, y, z = g.coordinates
        f = np.cos(k * x) * np.sin(2 * k * y) + np.cos(k * z)
        pts = rng.uniform(-3, 3, (50, 3))
        exact = np.cos(k * pts[:, 0]) * np.sin(2 * k * pts[:, 1]) + np.cos(k * pts[:, 2])
        assert np.max(np.abs(GridInterpolator(g)(f, pts) - exact)) < 1e-5

    def test_reproduces_grid_values(self, rng):
        g = GridSpec(3, 16, 4.0)
        f = rng.standard_normal(g.shape)
        idx = rng.integers(0, 16, (10, 3))
        pts = g.axis[idx]
        assert np.allclose(GridInterpolator(g)(f, pts), f[idx[:, 0], idx[:, 1], idx[:, 2]], atol=1e-10)

    def test_rejects_non_3d(self):
        with pytest.raises(InputError):
            GridInterpolator(GridSpec(1, 16, 1.0))


class TestFN:
    def test_single_particle(self, rng):
        g = GridSpec(3, 24, 6.0)
        rho = smooth_density(g)
        x = rng.uniform(-3, 3, (1, 3))
        ps = ParticleSystem(x, np.zeros((1, 3)), 6.0)
        phi = np.real(np.fft.ifftn(np.fft.fftn(rho.values) * g.inverse_k2))
        self_pair = g.integrate(rho.values * phi)
        oracle = -2 * trig_eval(phi, g, x)[0] + self_pair
        assert configuration_f_n(ps, rho) == pytest.approx(oracle, rel=1e-6)

    def test_two_particles_brute_force(self):
        L = 6.0
        g = GridSpec(3, 16, L)
        rho = smooth_density(g)
        x = np.array([[0.3, -1.1, 0.4], [-1.7, 0.9, 2.2]])
        ps = ParticleSystem(x, np.zeros((2, 3)), L)
        # pair term with a different Ewald split, one-body term by direct Fourier sum
        pair = 2 * EwaldKernel(L, alpha=0.9).potential(x[0] - x[1])
        phi = np.real(np.fft.ifftn(np.fft.fftn(rho.values) * g.inverse_k2))
        local = trig_eval(phi, g, x).sum()
        self_pair = g.integrate(rho.values * phi)
        oracle = pair - 4 * local + 4 * self_pair
        assert configuration_f_n(ps, rho) == pytest.approx(oracle, rel=1e-4)

    def test_monte_carlo_identity(self):
        g = GridSpec(3, 24, 12.0)
        rho = gaussian_density(g, 1.5)
        r = np.random.default_rng(21)
        n, draws = 16, 300
        vals = []
        for _ in range(draws):
            ps = ParticleSystem(sample_positions(rho, n, r), np.zeros((n, 3)), 12.0)
            vals.append(configuration_f_n(ps, rho) / n**2)
        phi = np.real(np.fft.ifftn(np.fft.fftn(rho.values) * g.inverse_k2))
        oracle = -g.integrate(rho.values * phi) / n
        se = np.std(vals, ddof=1) / math.sqrt(draws)
        assert abs(np.mean(vals) - oracle) < 3 * se

    def test_checks(self):
        g = GridSpec(3, 8, 4.0)
        rho = uniform_density(g)
        with pytest.raises(InputError):
            configuration_f_n(ParticleSystem([[0, 0, 0]], [[0, 0, 0]], 5.0), rho)
        with pytest.raises(InputError):
            configuration_f_n(ParticleSystem([[0, 0, 0]], [[0, 0, 0]], 4.0, periodic=False), rho)
        with pytest.raises(InputError):
            configuration_f_n(ParticleSystem([[0, 0, 0]], [[0, 0, 0]], 4.0), ScalarField(g, 2 * rho.values))


class TestFPrimeN:
    @given(seeds, st.integers(2, 30), st.floats(-3, 3), st.floats(-3, 3))
    def test_constant_velocity_vanishes(self, seed, n, a, b):
        g = GridSpec(3, 8, 4.0)
        r = np.random.default_rng(seed)
        rho = smooth_density(g, 0.2)
        u = VectorField(g, np.stack([np.full(g.shape, a), np.full(g.shape, b), np.zeros(g.shape)]))
        ps = ParticleSystem(r.uniform(-2, 2, (n, 3)), np.zeros((n, 3)), 4.0)
        scale = n * n * max(abs(a), abs(b), 1.0)
        assert abs(configuration_f_prime_n(ps, rho, u)) < 1e-10 * scale

    def test_linear_in_velocity(self, rng):
        g = GridSpec(3, 16, 6.0)
        rho = smooth_density(g)
        k = 2 * np.pi / 6.0
        shear = np.stack([np.sin(k * g.coordinates[1]) + np.zeros(g.shape), np.zeros(g.shape), np.zeros(g.shape)])
        ps = ParticleSystem(rng.uniform(-3, 3, (20, 3)), np.zeros((20, 3)), 6.0)
        ratios = []
        for amp in (0.1, 1.0, 7.0):
            grad_inf = amp * k
            ratios.append(configuration_f_prime_n(ps, rho, VectorField(g, amp * shear)) / grad_inf)
        assert np.allclose(ratios, ratios[0], rtol=1e-12)

    def test_two_particles_brute_force(self):
        L = 6.0
        g = GridSpec(3, 16, L)
        rho = smooth_density(g)
        u = VectorField(g, random_velocity(g, np.random.default_rng(4)))
        x = np.array([[0.3, -1.1, 0.4], [-1.7, 0.9, 2.2]])
        ps = ParticleSystem(x, np.zeros((2, 3)), L)
        # pair term: grad G by central differences of the pointwise kernel
        kern = EwaldKernel(L, alpha=0.9)
        d = 1e-5
        grad = np.array([(kern.potential(x[0] - x[1] + d * e) - kern.potential(x[0] - x[1] - d * e)) / (2 * d) for e in np.eye(3)])
        u_at = np.stack([trig_eval(c, g, x) for c in u.components], axis=1)
        pair = 2 * np.dot(u_at[0] - u_at[1], grad)
        # one-body kernel integral: u(x).grad(V*rho)(x) - div V*(rho u)(x), all spectral
        kk = [np.fft.fftfreq(16, d=g.h) * 2 * np.pi]
        kx, ky, kz = np.meshgrid(kk[0], kk[0], kk[0], indexing="ij")
        kv = (kx, ky, kz)
        rho_hat = np.fft.fftn(rho.values) * g.inverse_k2
        grad_phi = [np.real(np.fft.ifftn(1j * kc * rho_hat)) for kc in kv]
        div_term = sum(np.real(np.fft.ifftn(1j * kc * np.fft.fftn(rho.values * uc) * g.inverse_k2)) for kc, uc in zip(kv, u.components))
        one_body = sum(uc * gc for uc, gc in zip(u.components, grad_phi)) - div_term
        local = trig_eval(one_body, g, x).sum()
        self_term = g.integrate(rho.values * one_body)
        oracle = pair - 4 * local + 4 * self_term
        assert configuration_f_prime_n(ps, rho, u) == pytest.approx(oracle, rel=1e-4)


class TestSerfaty:
    def _samples(self, rho, u, ns, reps=6):
        return [(monokinetic_sample(rho, u, n, 100 * n + s), rho, u) for n in ns for s in range(reps)]

    def test_uniform_zero_velocity(self):
        g = GridSpec(3, 16, 6.0)
        rho = uniform_density(g)
        rep = serfaty_diagnostics(self._samples(rho, VectorField.zeros(g), (8, 32, 128), 3))
        assert rep.exponent_b is None and rep.c_fit is None and rep.b_consistent is None
        assert all(v == 0 for v in rep.f_prime_max)

    def test_smooth_density_exponent(self):
        g = GridSpec(3, 24, 12.0)
        rho = gaussian_density(g, 1.5)
        u = VectorField(g, random_velocity(g, np.random.default_rng(2), 0.3))
        rep = serfaty_diagnostics(self._samples(rho, u, (16, 64, 256)))
        assert 1.0 <= rep.exponent_a <= 4 / 3 + 0.15
        assert rep.a_consistent
        assert rep.c_fit > 0 and rep.exponent_b is not None

    def test_needs_range(self):
        g = GridSpec(3, 16, 6.0)
        rho = uniform_density(g)
        with pytest.raises(InputError):
            serfaty_diagnostics(self._samples(rho, VectorField.zeros(g), (16,), 2))
        with pytest.raises(InputError):
            serfaty_diagnostics(self._samples(rho, VectorField.zeros(g), (16, 32, 64), 1))


class TestSampling:
    @pytest.mark.parametrize("method", ["spline", "cell"])
    def test_moments(self, method):
        g = GridSpec(3, 24, 12.0)
        rho = gaussian_density(g, 1.2)
        x = sample_positions(rho, 20000, np.random.default_rng(0), method)
        assert np.all(np.abs(x) <= 6.0)
        assert np.allclose(x.mean(axis=0), 0, atol=4 * 1.2 / math.sqrt(20000))
        var = x.var(axis=0)
        # the cell sampler adds the uniform in-cell variance h^2/12
        expected = 1.44 + (g.h**2 / 12 if method == "cell" else 0.0)
        assert np.allclose(var, expected, rtol=0.05)

    def test_bad_arguments(self):
        g = GridSpec(3, 8, 4.0)
        rho = uniform_density(g)
        with pytest.raises(InputError):
            sample_positions(rho, 0, np.random.default_rng(0))
        with pytest.raises(InputError):
            sample_positions(rho, 5, np.random.default_rng(0), method="nope")

    def test_monokinetic_velocities(self):
        g = GridSpec(3, 16, 8.0)
        rho = gaussian_density(g, 1.5)
        u = VectorField(g, random_velocity(g, np.random.default_rng(3)))
        ps = monokinetic_sample(rho, u, 50, 8)
        assert kinetic_modulated_particles(ps, u) < 1e-28
        assert ps.seed == 8
        again = monokinetic_sample(rho, u, 50, 8)
        assert np.array_equal(ps.positions, again.positions)


class TestBattery:
    def test_five_smooth_functions(self):
        battery = test_function_battery(6.0)
        assert len(battery) >= 5
        x = np.random.default_rng(0).uniform(-3, 3, (10, 3))
        for phi in battery.values():
            assert np.allclose(phi(x), phi(x + np.array([6.0, 0, -6.0])))

    def test_lattice_floor(self):
        L = 6.0
        g = GridSpec(3, 24, L)
        x = lattice_positions(6, L)
        ps = ParticleSystem(x, np.zeros_like(x), L)
        disc = battery_discrepancies(ps, uniform_density(g))
        assert max(disc.values()) < 1e-3

    def test_law_of_large_numbers(self):
        g = GridSpec(3, 24, 12.0)
        rho = gaussian_density(g, 1.5)
        means = []
        for n in (64, 4096):
            vals = [battery_discrepancies(monokinetic_sample(rho, VectorField.zeros(g), n, s), rho) for s in range(8)]
            means.append({k: np.mean([v[k] for v in vals]) for k in vals[0]})
        for name in means[0]:
            assert means[1][name] < means[0][name]


class TestConfigurationEnergy:
    def test_fields(self):
        g = GridSpec(3, 16, 8.0)
        rho = gaussian_density(g, 1.5)
        u = VectorField(g, random_velocity(g, np.random.default_rng(3)))
        ps = monokinetic_sample(rho, u, 40, 1)
        ce = configuration_energy(ps, rho, u)
        assert ce.total_modulated_per_particle == pytest.approx(ce.kinetic_modulated + ce.f_n / 1600)
        assert ce.f_n_scaled == pytest.approx(ce.f_n / 1600)
        assert ce.lower_bound_scale == pytest.approx(40 ** (4 / 3) * rho.values.max() ** (1 / 3))
        assert ce.f_n == pytest.approx(configuration_f_n(ps, rho))
