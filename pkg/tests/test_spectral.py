"""Spectral infrastructure: transforms, wavenumbers, dealiasing, diagnostics."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from advdistill.spectral import (
    Field,
    Spectrum,
    dealias,
    energy_spectrum,
    enstrophy,
    fft_forward,
    fft_inverse,
    make_grid,
    poisson_stream,
    spectral_derivative,
    spectral_truncate,
    spectral_upsample,
    spectrum_power,
    velocity_from_stream,
)


class TestGrid:
    def test_wavenumbers_full_order(self):
        g = make_grid(1, 8, 1.0)
        assert list(g.k_full[0]) == [0, 1, 2, 3, -4, -3, -2, -1]
        assert (np.abs(g.kx) <= 2).tolist() == g.dealias_mask.tolist()

    def test_mask_cutoff_floor(self):
        g = make_grid(1, 8, 1.0)
        kept = g.kx[g.dealias_mask]
        assert kept.max() == 2  # floor(8/3)

    def test_k2_mode_11(self):
        g = make_grid(2, 64, 1.0)
        assert g.k2[1, 1] == pytest.approx(2 * (2 * np.pi) ** 2, rel=1e-14)

    def test_odd_n_rejected(self):
        with pytest.raises(ValueError):
            make_grid(1, 7, 1.0)

    def test_tiny_n_rejected(self):
        with pytest.raises(ValueError):
            make_grid(1, 6, 1.0)

    def test_k2_safe_zero_mode(self):
        g = make_grid(2, 16, 1.0)
        assert g.k2[0, 0] == 0.0
        assert g.k2_safe[0, 0] == 1.0
        assert (g.k2 >= 0).all()


class TestTransforms:
    def test_constant_field_single_mode(self):
        g = make_grid(1, 32, 1.0)
        s = fft_forward(Field(g, np.full(32, 4.5)))
        assert abs(s.coeffs[0] - 4.5 * 32) < 1e-12
        assert np.abs(s.coeffs[1:]).max() < 1e-12

    def test_sine_two_conjugate_modes(self):
        g = make_grid(1, 64, 1.0)
        x = g.coords()[0]
        s = fft_forward(Field(g, np.sin(2 * np.pi * x)))
        mags = np.abs(s.coeffs)
        assert mags[1] == pytest.approx(32.0, rel=1e-12)
        nonzero = np.flatnonzero(mags > 1e-9)
        assert list(nonzero) == [1]  # half-complex keeps only k=+1

    def test_round_trip_random(self, rng):
        for n in (8, 32, 64, 128, 256, 512):
            g = make_grid(1, n, 2.0)
            f = Field(g, rng.normal(size=n))
            back = fft_inverse(fft_forward(f))
            assert np.abs(back.values - f.values).max() <= 1e-12

    def test_round_trip_2d(self, rng):
        g = make_grid(2, 64, 1.0)
        f = Field(g, rng.normal(size=(64, 64)))
        back = fft_inverse(fft_forward(f))
        assert np.abs(back.values - f.values).max() <= 1e-12

    def test_parseval_documented_normalization(self, rng):
        g = make_grid(2, 32, 1.0)
        f = Field(g, rng.normal(size=(32, 32)))
        power = spectrum_power(fft_forward(f)).sum()
        assert power / g.npoints**2 == pytest.approx(np.mean(f.values**2), rel=1e-12)

    def test_nonfinite_rejected(self):
        g = make_grid(1, 8, 1.0)
        bad = Field(g, np.zeros(8), blown_up=True)
        object.__setattr__(bad, "values", np.array([np.inf] + [0.0] * 7))
        with pytest.raises(ValueError):
            fft_forward(bad)


class TestDerivative:
    def test_sine_first(self):
        g = make_grid(1, 64, 1.0)
        x = g.coords()[0]
        s = fft_forward(Field(g, np.sin(2 * np.pi * x)))
        d = fft_inverse(spectral_derivative(s, 0, 1))
        assert np.abs(d.values - 2 * np.pi * np.cos(2 * np.pi * x)).max() <= 1e-10

    def test_constant_zero(self):
        g = make_grid(1, 32, 1.0)
        d = fft_inverse(spectral_derivative(fft_forward(Field(g, np.full(32, 2.0))), 0, 1))
        assert np.abs(d.values).max() <= 1e-12

    def test_sine_second(self):
        g = make_grid(1, 64, 1.0)
        x = g.coords()[0]
        s = fft_forward(Field(g, np.sin(2 * np.pi * x)))
        d = fft_inverse(spectral_derivative(s, 0, 2))
        assert np.abs(d.values + (2 * np.pi) ** 2 * np.sin(2 * np.pi * x)).max() <= 1e-9

    def test_nyquist_zeroed_keeps_real(self, rng):
        g = make_grid(1, 16, 1.0)
        f = Field(g, rng.normal(size=16))
        d = spectral_derivative(fft_forward(f), 0, 1)
        assert abs(d.coeffs[-1]) == 0.0

    def test_order_validation(self):
        g = make_grid(1, 16, 1.0)
        s = fft_forward(Field(g, np.zeros(16)))
        with pytest.raises(ValueError):
            spectral_derivative(s, 0, 3)


class TestPoissonVelocity:
    def test_single_mode(self):
        g = make_grid(2, 32, 1.0)
        x, _ = np.meshgrid(*g.coords(), indexing="ij")
        psi = fft_inverse(poisson_stream(fft_forward(Field(g, np.sin(2 * np.pi * x)))))
        expect = np.sin(2 * np.pi * x) / (2 * np.pi) ** 2
        assert np.abs(psi.values - expect).max() <= 1e-12

    def test_constant_maps_to_zero(self):
        g = make_grid(2, 16, 1.0)
        psi = poisson_stream(fft_forward(Field(g, np.full((16, 16), 3.0))))
        assert np.abs(psi.coeffs).max() == 0.0

    def test_poisson_round_trip(self, rng):
        g = make_grid(2, 32, 1.0)
        w = Field(g, rng.normal(size=(32, 32)))
        psi = poisson_stream(fft_forward(w))
        lap = spectral_derivative(psi, 0, 2).coeffs + spectral_derivative(psi, 1, 2).coeffs
        back = np.fft.irfftn(-lap, s=g.shape, axes=(0, 1))
        assert np.abs(back - (w.values - w.values.mean())).max() <= 1e-10

    def test_velocity_components(self):
        g = make_grid(2, 32, 1.0)
        x, y = np.meshgrid(*g.coords(), indexing="ij")
        u_hat, v_hat = velocity_from_stream(fft_forward(Field(g, np.sin(2 * np.pi * y))))
        u = fft_inverse(u_hat).values
        v = fft_inverse(v_hat).values
        assert np.abs(u - 2 * np.pi * np.cos(2 * np.pi * y)).max() <= 1e-10
        assert np.abs(v).max() <= 1e-12

        u_hat, v_hat = velocity_from_stream(fft_forward(Field(g, np.sin(2 * np.pi * x))))
        assert np.abs(fft_inverse(u_hat).values).max() <= 1e-12
        assert np.abs(fft_inverse(v_hat).values + 2 * np.pi * np.cos(2 * np.pi * x)).max() <= 1e-10

    def test_divergence_free(self, rng):
        g = make_grid(2, 32, 1.0)
        psi = fft_forward(Field(g, rng.normal(size=(32, 32))))
        u_hat, v_hat = velocity_from_stream(psi)
        du = spectral_derivative(u_hat, 0, 1).coeffs
        dv = spectral_derivative(v_hat, 1, 1).coeffs
        scale = max(np.abs(du).max(), np.abs(dv).max())
        assert np.abs(du + dv).max() <= 1e-12 * scale


def _band_limit(values, grid):
    return fft_inverse(dealias(fft_forward(Field(grid, values)))).values


class TestDealias:
    def test_mask_extent_n12(self):
        g = make_grid(1, 12, 1.0)
        kept = g.kx[g.dealias_mask]
        assert kept.max() == 4  # floor(12/3)

    def test_band_limited_unchanged(self, rng):
        g = make_grid(1, 32, 1.0)
        vals = _band_limit(rng.normal(size=32), g)
        s = fft_forward(Field(g, vals))
        assert np.abs(dealias(s).coeffs - s.coeffs).max() <= 1e-12

    def test_product_matches_dense_convolution(self, rng):
        # floor(16/3)=5: products of band-limited inputs cannot alias back
        # into the retained band, so the dealiased pseudospectral product
        # equals the exact truncated convolution
        n = 16
        g = make_grid(1, n, 1.0)
        u = _band_limit(rng.normal(size=n), g)
        v = _band_limit(rng.normal(size=n), g)
        uh = np.fft.fft(u)
        vh = np.fft.fft(v)
        conv = np.zeros(n, dtype=complex)
        for k in range(n):
            for p in range(n):
                conv[k] += uh[p] * vh[(k - p) % n]
        conv /= n
        mask_full = np.abs(np.rint(np.fft.fftfreq(n) * n)) <= n // 3
        oracle = np.where(mask_full, conv, 0.0)

        prod_hat = dealias(fft_forward(Field(g, u * v)))
        full = np.fft.fft(np.fft.irfft(prod_hat.coeffs, n))
        assert np.abs(full - oracle).max() <= 1e-12


class TestUpsample:
    def test_sine_16_to_64(self):
        g = make_grid(1, 16, 1.0)
        x16 = g.coords()[0]
        up = spectral_upsample(Field(g, np.sin(2 * np.pi * x16)), 64)
        x64 = up.grid.coords()[0]
        assert np.abs(up.values - np.sin(2 * np.pi * x64)).max() <= 1e-10

    def test_constant(self):
        g = make_grid(2, 16, 1.0)
        up = spectral_upsample(Field(g, np.full((16, 16), 1.25)), 32)
        assert np.abs(up.values - 1.25).max() <= 1e-10

    def test_coincident_points_match(self, rng):
        g = make_grid(1, 32, 1.0)
        f = Field(g, rng.normal(size=32))
        up = spectral_upsample(f, 128)
        assert np.abs(up.values[::4] - f.values).max() <= 1e-10

    def test_spectrum_preserved_below_original_nyquist(self, rng):
        from advdistill.grf import KernelSpec, sample_grf_values

        g = make_grid(2, 64, 1.0)
        vals = sample_grf_values(KernelSpec("rbf", length_scale=0.15), g, seed=3, count=1)[0]
        f = Field(g, vals)
        up = spectral_upsample(f, 256)
        sh0, p0 = energy_spectrum(f)
        sh1, p1 = energy_spectrum(up)
        scale = (256 / 64) ** 4  # unscaled-forward power scales with M^2
        keep = sh0 < 32
        assert np.allclose(p1[: len(p0)][keep] / scale, p0[keep], rtol=1e-8, atol=1e-10)

    def test_downsample_rejected(self):
        g = make_grid(1, 32, 1.0)
        with pytest.raises(ValueError):
            spectral_upsample(Field(g, np.zeros(32)), 16)

    def test_truncate_inverts_upsample(self, rng):
        g = make_grid(1, 32, 1.0)
        f = Field(g, rng.normal(size=32))
        back = spectral_truncate(spectral_upsample(f, 128), 32)
        assert np.abs(back.values - f.values).max() <= 1e-10


class TestDiagnostics:
    def test_enstrophy_sine(self):
        g = make_grid(1, 64, 1.0)
        x = g.coords()[0]
        assert enstrophy(Field(g, np.sin(2 * np.pi * x))) == pytest.approx(0.5, rel=1e-12)

    def test_enstrophy_zero(self):
        g = make_grid(2, 16, 1.0)
        assert enstrophy(Field(g, np.zeros((16, 16)))) == 0.0

    def test_shell_sum_parseval(self, rng):
        from advdistill.grf import KernelSpec, sample_grf_values

        g = make_grid(2, 32, 1.0)
        vals = sample_grf_values(KernelSpec("rbf", length_scale=0.2), g, seed=1, count=1)[0]
        f = Field(g, vals)
        _, power = energy_spectrum(f)
        physical = enstrophy(f)
        spectral = power.sum() / g.npoints**2 * g.length**2
        assert abs(physical - spectral) <= 1e-10 * max(1.0, physical)

    def test_single_mode_one_shell(self):
        g = make_grid(2, 32, 1.0)
        x, y = np.meshgrid(*g.coords(), indexing="ij")
        _, power = energy_spectrum(Field(g, np.sin(2 * np.pi * 3 * x)))
        nonzero = np.flatnonzero(power > 1e-9)
        assert list(nonzero) == [3]


@settings(max_examples=20, deadline=None)
@given(shift=st.integers(min_value=0, max_value=31), op=st.sampled_from(["deriv", "dealias", "upsample"]))
def test_translation_equivariance(shift, op):
    g = make_grid(1, 32, 1.0)
    vals = np.random.default_rng(7).normal(size=32)
    f = Field(g, vals)
    fs = Field(g, np.roll(vals, shift))
    if op == "deriv":
        a = fft_inverse(spectral_derivative(fft_forward(f), 0, 1)).values
        b = fft_inverse(spectral_derivative(fft_forward(fs), 0, 1)).values
    elif op == "dealias":
        a = _band_limit(f.values, g)
        b = _band_limit(fs.values, g)
    else:
        a = spectral_upsample(f, 64).values
        b = spectral_upsample(fs, 64).values
        shift *= 2
    assert np.abs(np.roll(a, shift) - b).max() <= 1e-10
