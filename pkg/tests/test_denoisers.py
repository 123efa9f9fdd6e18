import numpy as np
import pytest

from pnpsde.core import RandomSource, gaussian_field
from pnpsde.denoisers import (AmplifierDenoiser, ClampedDenoiser,
                              GaussianSmoothDenoiser, LinearMatrixDenoiser,
                              MedianDenoiser, TVDenoiser,
                              check_residual_gaussianity, clamp_wrap,
                              identity_denoiser)
from pnpsde.metrics import psnr


def _noisy_step(sigma, seed=3, size=32):
    clean = np.zeros((size, size))
    clean[:, size // 2:] = 1.0
    noise = gaussian_field(RandomSource(seed), size, size, sigma)
    return clean, clean + noise


@pytest.mark.parametrize("denoiser", [
    GaussianSmoothDenoiser(),
    TVDenoiser(),
    LinearMatrixDenoiser(),
])
def test_sigma_zero_is_identity(denoiser):
    x = RandomSource(1).standard_normal(64).reshape(8, 8)
    np.testing.assert_array_equal(denoiser.denoise(x, 0.0), x)


@pytest.mark.parametrize("denoiser", [
    GaussianSmoothDenoiser(),
    TVDenoiser(),
    MedianDenoiser(),
    LinearMatrixDenoiser(),
])
def test_constant_images_are_fixed_points(denoiser):
    flat = np.full((8, 8), 0.4)
    np.testing.assert_allclose(denoiser.denoise(flat, 0.3), flat,
                               atol=1e-12)


def test_negative_sigma_rejected():
    with pytest.raises(ValueError):
        TVDenoiser().denoise(np.zeros((4, 4)), -0.1)


def test_tv_improves_noisy_step_edge():
    clean, noisy = _noisy_step(0.1)
    denoised = TVDenoiser().denoise(noisy, 0.1)
    assert psnr(denoised, clean) > psnr(noisy, clean) + 1.0


def test_tv_weight_grows_with_sigma():
    # more smoothing at higher sigma: total variation must shrink more
    _, noisy = _noisy_step(0.2, seed=9)

    def tv(u):
        return np.abs(np.diff(u, axis=0)).sum() + np.abs(
            np.diff(u, axis=1)).sum()

    den = TVDenoiser()
    assert tv(den.denoise(noisy, 0.3)) < tv(den.denoise(noisy, 0.1)) < tv(
        noisy)


def test_gaussian_smooth_reduces_noise_variance():
    _, noisy = _noisy_step(0.2, seed=4)
    smoothed = GaussianSmoothDenoiser().denoise(noisy, 0.2)
    flat_region = (slice(4, 12), slice(2, 12))
    assert smoothed[flat_region].std() < noisy[flat_region].std()


def test_median_radius_thresholds():
    den = MedianDenoiser()
    assert den.radius(0.01) == 0
    assert den.radius(0.1) == 1
    assert den.radius(0.5) == 2


def test_median_kills_salt_and_pepper():
    clean = np.full((16, 16), 0.5)
    corrupted = clean.copy()
    corrupted[3, 3] = 1.0
    corrupted[10, 12] = 0.0
    out = MedianDenoiser().denoise(corrupted, 0.1)
    np.testing.assert_array_equal(out, clean)


def test_median_radius_zero_copies():
    x = RandomSource(5).standard_normal(36).reshape(6, 6)
    np.testing.assert_array_equal(MedianDenoiser().denoise(x, 0.01), x)


class TestLinearMatrixDenoiser:
    def test_identity_helper(self):
        x = RandomSource(6).standard_normal(16).reshape(4, 4)
        np.testing.assert_array_equal(identity_denoiser().denoise(x, 0.9), x)

    def test_blend_weight_saturates_at_one(self):
        den = LinearMatrixDenoiser()
        x = RandomSource(7).standard_normal(64).reshape(8, 8)
        np.testing.assert_allclose(den.denoise(x, 1.0), den.denoise(x, 5.0))

    def test_gain_scales_output(self):
        x = RandomSource(8).standard_normal(64).reshape(8, 8)
        base = LinearMatrixDenoiser(gain=1.0).denoise(x, 0.5)
        scaled = LinearMatrixDenoiser(gain=0.9).denoise(x, 0.5)
        np.testing.assert_allclose(scaled, 0.9 * base)

    def test_update_matrix_rows_sum_to_gain(self):
        den = LinearMatrixDenoiser(gain=0.8)
        matrix = den.update_matrix(6, 6, sigma=0.5)
        assert matrix.shape == (36, 36)
        np.testing.assert_allclose(matrix.sum(axis=1), 0.8)

    def test_update_matrix_matches_apply(self):
        den = LinearMatrixDenoiser(gain=1.1)
        x = RandomSource(9).standard_normal(36).reshape(6, 6)
        matrix = den.update_matrix(6, 6, sigma=0.3)
        via_matrix = (matrix @ x.ravel()).reshape(6, 6)
        np.testing.assert_allclose(via_matrix, den.denoise(x, 0.3),
                                   atol=1e-12)

    def test_update_matrix_refuses_huge_grids(self):
        with pytest.raises(ValueError):
            LinearMatrixDenoiser().update_matrix(128, 128, sigma=0.5)

    def test_kernel_must_be_nonnegative(self):
        with pytest.raises(ValueError):
            LinearMatrixDenoiser(kernel=[[1.0, -0.5]])


def test_amplifier_grows_without_bound():
    den = AmplifierDenoiser(gain=1.5)
    x = np.full((4, 4), 1.0)
    for _ in range(60):
        x = den.denoise(x, 0.5)
    assert np.max(np.abs(x)) > 1e6


def test_amplifier_gain_must_exceed_one():
    with pytest.raises(ValueError):
        AmplifierDenoiser(gain=1.0)


class TestClampedDenoiser:
    def test_output_stays_inside_bounds(self):
        den = clamp_wrap(AmplifierDenoiser(gain=1.5), 0.0, 1.0)
        rng = RandomSource(10)
        for scale in (1.0, 10.0, 100.0, 1000.0):
            for _ in range(20):
                x = scale * rng.standard_normal(64).reshape(8, 8)
                out = den.denoise(x, 0.5)
                assert out.min() >= 0.0
                assert out.max() <= 1.0

    def test_declared_bound(self):
        den = ClampedDenoiser(AmplifierDenoiser(gain=2.0), -0.5, 2.0)
        assert den.declared_bound == 2.0

    def test_clamped_amplifier_orbit_is_bounded(self):
        den = clamp_wrap(AmplifierDenoiser(gain=1.5), 0.0, 1.0)
        x = RandomSource(11).standard_normal(16).reshape(4, 4)
        for _ in range(10000):
            x = den.denoise(x, 0.3)
        assert np.max(np.abs(x)) <= 1.0

    def test_bounds_must_be_ordered(self):
        with pytest.raises(ValueError):
            clamp_wrap(AmplifierDenoiser(gain=1.5), 1.0, 1.0)


class TestResidualGaussianity:
    def _clean(self, size=64):
        ramp = np.linspace(0.2, 0.8, size)
        return np.tile(ramp, (size, 1))

    def test_identity_reports_injected_noise(self):
        report = check_residual_gaussianity(identity_denoiser(),
                                            self._clean(), 0.1,
                                            RandomSource(0))
        assert report.passed
        assert report.sigma_ratio == pytest.approx(1.0, abs=0.05)
        assert abs(report.skewness) < 0.2
        assert abs(report.excess_kurtosis) < 0.3

    def test_oracle_denoiser_passes_vacuously(self):
        clean = self._clean()

        class Oracle:
            def denoise(self, x, sigma):
                return clean.copy()

        report = check_residual_gaussianity(Oracle(), clean, 0.1,
                                            RandomSource(1))
        assert report.passed
        assert report.skewness == 0.0
        assert report.sigma_ratio == 0.0

    def test_hard_clipping_fails_kurtosis(self):
        # residual of a clamp tight around the signal is nearly two-sided
        # uniform, with excess kurtosis near -2
        clean = 0.48 + 0.04 * self._clean() / 0.8
        den = clamp_wrap(identity_denoiser(), 0.45, 0.55)
        report = check_residual_gaussianity(den, clean, 0.1, RandomSource(2))
        assert not report.passed
        assert report.excess_kurtosis < -1.0

    def test_constant_clean_rejected(self):
        with pytest.raises(ValueError):
            check_residual_gaussianity(identity_denoiser(),
                                       np.full((64, 64), 0.5), 0.1,
                                       RandomSource(3))

    def test_small_images_rejected(self):
        with pytest.raises(ValueError):
            check_residual_gaussianity(identity_denoiser(),
                                       self._clean(16), 0.1,
                                       RandomSource(4))
