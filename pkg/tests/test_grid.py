"""Periodic grid, transforms, spectral derivatives and the Poisson multiplier."""

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from mflab.errors import ConfigurationError
from mflab.grid import (
    GridSpec,
    ScalarField,
    VectorField,
    WaveField,
    dealias,
    forward_transform,
    inverse_transform,
    poisson_solve,
    potential_gradient,
    spectral_divergence,
    spectral_gradient,
    spectral_laplacian,
)


class TestGridSpec:
    def test_spacing_and_axis(self):
        g = GridSpec(3, 16, 8.0)
        assert g.h == 0.5
        assert g.axis[0] == -4.0
        assert g.axis[-1] == pytest.approx(3.5)
        assert g.ncells == 16**3

    def test_wavenumbers_symmetric(self):
        g = GridSpec(1, 8, 2 * np.pi)
        assert sorted(g.axis_wavenumbers) == [-4, -3, -2, -1, 0, 1, 2, 3]

    @pytest.mark.parametrize("kwargs", [dict(dim=4), dict(points_per_axis=6), dict(points_per_axis=14), dict(box_length=0.0)])
    def test_rejects_bad_specs(self, kwargs):
        base = dict(dim=3, points_per_axis=16, box_length=1.0)
        base.update(kwargs)
        with pytest.raises(ConfigurationError):
            GridSpec(**base)

    def test_accepts_smooth_non_power_of_two(self):
        assert GridSpec(3, 48, 12.0).points_per_axis == 48

    def test_dealias_mask_keeps_lower_two_thirds(self):
        g = GridSpec(1, 12, 1.0)
        m = np.abs(np.fft.fftfreq(12) * 12)
        assert np.array_equal(g.dealias_mask, m < 4)

    def test_field_size_mismatch(self, grid3):
        with pytest.raises(ConfigurationError):
            ScalarField(grid3, np.zeros(10))
        with pytest.raises(ConfigurationError):
            VectorField(grid3, np.zeros((2, *grid3.shape)))


class TestTransforms:
    def test_constant_on_zero_mode(self, grid3):
        spec = forward_transform(ScalarField(grid3, np.ones(grid3.shape)))
        assert spec.flat[0] == pytest.approx(grid3.ncells)
        spec.flat[0] = 0
        assert np.max(np.abs(spec)) < 1e-10

    def test_plane_wave_single_coefficient(self, grid1):
        x = grid1.axis
        psi = WaveField(grid1, 1.0, np.exp(3j * x))
        spec = forward_transform(psi)
        nz = np.flatnonzero(np.abs(spec) > 1e-9)
        assert list(grid1.axis_wavenumbers[nz]) == [3.0]

    def test_random_round_trip(self, grid3, rng):
        f = ScalarField(grid3, rng.standard_normal(grid3.shape))
        back = inverse_transform(forward_transform(f), grid3, real=True)
        assert np.max(np.abs(back - f.values)) < 1e-12 * np.max(np.abs(f.values))

    def test_wrong_type(self):
        with pytest.raises(ConfigurationError):
            forward_transform(np.zeros(8))

    @given(arrays(np.float64, (8, 8), elements=st.floats(-1e3, 1e3)))
    def test_parseval(self, values):
        g = GridSpec(2, 8, 3.0)
        spec = forward_transform(ScalarField(g, values))
        lhs = g.integrate(values**2)
        rhs = np.sum(np.abs(spec) ** 2) * g.cell_volume / g.ncells
        assert rhs == pytest.approx(lhs, rel=1e-12, abs=1e-12)


class TestSpectralGradient:
    def test_sine_derivative(self):
        g = GridSpec(3, 16, 5.0)
        x = g.coordinates[0]
        k = 2 * np.pi / 5.0
        grad = spectral_gradient(ScalarField(g, np.sin(k * x) + np.zeros(g.shape)))
        assert np.max(np.abs(grad.components[0] - k * np.cos(k * x))) < 1e-10
        assert np.max(np.abs(grad.components[1:])) < 1e-12

    def test_constant_gives_zero(self, grid3):
        grad = spectral_gradient(ScalarField(grid3, np.full(grid3.shape, 2.5)))
        assert np.max(np.abs(grad.components)) < 1e-12

    def test_finite_difference_consistency(self):
        """Centered differences of a Gaussian converge to the spectral derivative at order two."""
        errors = []
        for n in (32, 64, 128):
            g = GridSpec(1, n, 10.0)
            f = np.exp(-g.axis**2)
            spectral = spectral_gradient(ScalarField(g, f), dealiased=False).components[0]
            fd = (np.roll(f, -1) - np.roll(f, 1)) / (2 * g.h)
            errors.append(np.max(np.abs(fd - spectral)))
        ratios = np.array(errors[:-1]) / np.array(errors[1:])
        assert np.all(np.abs(np.log2(ratios) - 2) < 0.1)

    def test_gradient_divergence_is_laplacian(self, grid3, rng):
        from conftest import random_density

        f = ScalarField(grid3, random_density(grid3, rng))
        div = spectral_divergence(spectral_gradient(f, dealiased=False), dealiased=False)
        lap = spectral_laplacian(f)
        assert np.max(np.abs(div.values - lap.values)) < 1e-10

    def test_dealias_removes_high_mode(self):
        g = GridSpec(1, 12, 2 * np.pi)
        high = np.cos(5 * g.axis)
        low = np.cos(2 * g.axis)
        assert np.max(np.abs(dealias(high + low, g) - low)) < 1e-12


class TestPoisson:
    def test_single_mode_eigenfunction(self):
        L = 7.0
        g = GridSpec(3, 16, L)
        src = np.cos(2 * np.pi * g.coordinates[0] / L) + np.zeros(g.shape)
        phi = poisson_solve(ScalarField(g, src))
        assert np.max(np.abs(phi.values - (L / (2 * np.pi)) ** 2 * src)) < 1e-10

    def test_laplacian_reproduces_source(self, grid3, rng):
        from conftest import random_density

        src = random_density(grid3, rng)
        src = src - src.mean()
        phi = poisson_solve(ScalarField(grid3, src))
        assert np.max(np.abs(-spectral_laplacian(phi).values - src)) < 1e-10

    def test_constant_source(self, grid3):
        phi = poisson_solve(ScalarField(grid3, np.full(grid3.shape, 3.0)))
        assert np.max(np.abs(phi.values)) < 1e-14

    @given(arrays(np.float64, (8, 8, 8), elements=st.floats(-10, 10)))
    def test_zero_mean(self, values):
        g = GridSpec(3, 8, 2.0)
        phi = poisson_solve(ScalarField(g, values))
        assert abs(phi.values.mean()) < 1e-12 * max(1.0, np.max(np.abs(phi.values)))

    def test_shared_force_path_bitwise(self, grid3, rng):
        from conftest import random_density

        rho = ScalarField(grid3, random_density(grid3, rng))
        a = potential_gradient(rho).components
        b = spectral_gradient(poisson_solve(rho), dealiased=False).components
        assert np.array_equal(a, b)


class TestWaveField:
    def test_normalize(self, grid3, rng):
        psi = WaveField(grid3, 0.3, rng.standard_normal(grid3.shape) + 1j, normalize=True)
        assert psi.norm2() == pytest.approx(1.0, abs=1e-12)

    def test_rejects_nonpositive_hbar(self, grid3):
        with pytest.raises(ConfigurationError):
            WaveField(grid3, 0.0, np.ones(grid3.shape))
