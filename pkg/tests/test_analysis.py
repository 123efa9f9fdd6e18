import numpy as np
import pytest

from pnpsde.analysis import (ConvergenceCertificate, check_bounds,
                             compare_laws, detect_cauchy, energy_distance,
                             estimate_lipschitz, power_iteration_norm)
from pnpsde.core import (NoiseSchedule, PnPConfig, RandomSource, Trajectory)
from pnpsde.denoisers import (AmplifierDenoiser, GaussianSmoothDenoiser,
                              LinearMatrixDenoiser, clamp_wrap,
                              identity_denoiser)
from pnpsde.forward_models import IdentityOp, degrade
from pnpsde.io import synth_phantom
from pnpsde.sde_sim import SDEProblem, constant_diffusion, simulate_ensemble


def _corpus(size=16):
    grids = [synth_phantom(k, size, size)
             for k in ("ramp", "disk", "piecewise")]
    grids.append(np.full((size, size), 0.25))
    grids.append(np.full((size, size), 0.75))
    return grids


def _config(lam=0.7, steps=20, sigma0=0.5, seed=3):
    sched = NoiseSchedule(kind="constant", sigma0=sigma0, steps=steps)
    return PnPConfig(gamma=1.0, lam=lam, schedule=sched, max_iters=steps,
                     seed=seed)


class TestEstimateLipschitz:
    def test_linear_scaling_map_is_exact(self):
        got = estimate_lipschitz(lambda x: 2.0 * x, _corpus(), 16,
                                 RandomSource(0))
        assert got == pytest.approx(2.0)

    def test_translation_is_zero_gain(self):
        got = estimate_lipschitz(lambda x: x + 5.0, _corpus(), 16,
                                 RandomSource(1))
        assert got == pytest.approx(1.0)

    def test_is_a_lower_bound_on_the_matrix_norm(self):
        den = LinearMatrixDenoiser(gain=0.8)
        sigma = 0.6
        true_norm = power_iteration_norm(den.update_matrix(8, 8, sigma))
        sampled = estimate_lipschitz(lambda x: den.denoise(x, sigma),
                                     _corpus(8), 32, RandomSource(2))
        assert sampled <= true_norm + 1e-9

    def test_composition_submultiplicative(self):
        f = lambda x: np.tanh(x)
        g = lambda x: 1.5 * x
        rng = RandomSource(3)
        lip_f = estimate_lipschitz(f, _corpus(), 16, rng)
        lip_g = estimate_lipschitz(g, _corpus(), 16, rng)
        lip_fg = estimate_lipschitz(lambda x: f(g(x)), _corpus(), 16, rng)
        assert lip_fg <= lip_f * lip_g * 1.1

    def test_coincident_corpus_rejected(self):
        flat = np.full((4, 4), 0.5)
        with pytest.raises(ValueError):
            estimate_lipschitz(lambda x: x, [flat, flat.copy()], 0,
                               RandomSource(4))


def test_power_iteration_matches_svd():
    gen = np.random.default_rng(5)
    matrix = gen.standard_normal((30, 30))
    true_norm = np.linalg.svd(matrix, compute_uv=False)[0]
    assert power_iteration_norm(matrix) == pytest.approx(true_norm,
                                                         rel=1e-6)


def test_power_iteration_on_known_diagonal():
    assert power_iteration_norm(np.diag([3.0, 1.0, 0.5])) == pytest.approx(
        3.0)


class TestCheckBounds:
    def _obs(self, size=16):
        return degrade(IdentityOp(), synth_phantom("piecewise", size, size),
                       0.0)

    def test_contractive_blend_is_strong(self):
        cert = check_bounds(LinearMatrixDenoiser(gain=0.9), self._obs(),
                            _config(), _corpus())
        assert cert.regime == "strong"
        assert cert.d_lipschitz == pytest.approx(0.9, abs=1e-6)
        assert cert.denoiser_bound is not None

    def test_identity_denoiser_sits_on_the_boundary(self):
        # Lipschitz constant exactly 1: contraction fails, bounds hold
        cert = check_bounds(identity_denoiser(), self._obs(), _config(),
                            _corpus())
        assert cert.regime == "weak"
        assert cert.d_lipschitz == pytest.approx(1.0)

    def test_amplifier_has_no_bound(self):
        cert = check_bounds(AmplifierDenoiser(gain=1.5), self._obs(),
                            _config(), _corpus())
        assert cert.regime == "none"
        assert cert.denoiser_bound is None
        assert cert.d_lipschitz == pytest.approx(1.5)

    def test_clamped_smoother_is_weak(self):
        den = clamp_wrap(GaussianSmoothDenoiser(), 0.0, 1.0)
        cert = check_bounds(den, self._obs(), _config(), _corpus())
        assert cert.regime == "weak"
        assert cert.denoiser_bound is not None
        assert cert.denoiser_bound <= 1.0 + 1e-12

    def test_clamping_rescues_the_amplifier(self):
        den = clamp_wrap(AmplifierDenoiser(gain=1.5), 0.0, 1.0)
        cert = check_bounds(den, self._obs(), _config(), _corpus())
        assert cert.regime == "weak"

    def test_residual_bound_scales_with_smoothing(self):
        cert = check_bounds(GaussianSmoothDenoiser(), self._obs(),
                            _config(), _corpus())
        assert cert.residual_bound_c > 0.0
        assert np.isfinite(cert.residual_bound_c)

    def test_needs_two_corpus_images(self):
        with pytest.raises(ValueError):
            check_bounds(identity_denoiser(), self._obs(), _config(),
                         [np.zeros((16, 16))])

    def test_unknown_regime_rejected(self):
        with pytest.raises(ValueError):
            ConvergenceCertificate(h_lipschitz=1.0, d_lipschitz=1.0,
                                   drift_bound=1.0, denoiser_bound=1.0,
                                   residual_bound_c=1.0, regime="maybe")


def _traj_from_diffs(diffs, terminated="completed"):
    grids = [np.zeros((2, 2)) for _ in range(len(diffs) + 1)]
    return Trajectory(iterates=grids, step_diffs=list(diffs),
                      terminated=terminated)


class TestDetectCauchy:
    def test_shrinking_tail_passes(self):
        traj = _traj_from_diffs([1.0, 0.5, 1e-4, 5e-5, 2e-5, 1e-5])
        assert detect_cauchy(traj, tol=1e-3, window=4)

    def test_large_tail_fails(self):
        traj = _traj_from_diffs([1.0, 0.9, 0.8, 0.7, 0.6, 0.5])
        assert not detect_cauchy(traj, tol=1e-3, window=4)

    def test_rebounding_tail_fails(self):
        traj = _traj_from_diffs([1.0, 1e-5, 2e-5, 6e-5, 9e-4, 8e-4])
        assert not detect_cauchy(traj, tol=1e-3, window=5)

    def test_diverged_never_cauchy(self):
        traj = _traj_from_diffs([1e-6] * 6, terminated="diverged")
        assert not detect_cauchy(traj, tol=1e-3, window=4)

    def test_short_trajectory_raises(self):
        traj = _traj_from_diffs([1e-6, 1e-6])
        with pytest.raises(ValueError):
            detect_cauchy(traj, tol=1e-3, window=5)

    def test_parameter_validation(self):
        traj = _traj_from_diffs([1e-6] * 6)
        with pytest.raises(ValueError):
            detect_cauchy(traj, tol=0.0, window=4)
        with pytest.raises(ValueError):
            detect_cauchy(traj, tol=1e-3, window=1)


class TestEnergyDistance:
    def test_identical_samples_give_zero(self):
        a = np.array([0.1, 0.5, 0.9, 0.3])
        assert energy_distance(a, a.copy()) == 0.0

    def test_matches_brute_force(self):
        gen = np.random.default_rng(6)
        a = gen.standard_normal(40)
        b = gen.standard_normal(50) + 0.3
        cross = np.abs(a[:, None] - b[None, :]).mean()
        within_a = np.abs(a[:, None] - a[None, :]).mean()
        within_b = np.abs(b[:, None] - b[None, :]).mean()
        expected = 2.0 * cross - within_a - within_b
        assert energy_distance(a, b) == pytest.approx(expected, rel=1e-12)

    def test_positive_for_shifted_samples(self):
        gen = np.random.default_rng(7)
        a = gen.standard_normal(200)
        assert energy_distance(a, a + 1.0) > 0.1


class TestCompareLaws:
    def _ensemble(self, sigma, base_seed, n=16):
        prob = SDEProblem(drift=lambda t, v: np.zeros_like(v),
                          diffusion=constant_diffusion(sigma),
                          horizon=1.0, dt=0.25)
        return simulate_ensemble(prob, np.zeros((8, 8)), n,
                                 base_seed=base_seed)

    def test_identical_seed_sets_pass_with_zero_distance(self):
        e1 = self._ensemble(0.1, base_seed=10)
        e2 = self._ensemble(0.1, base_seed=10)
        cmp = compare_laws(e1, e2)
        assert cmp.same_pass
        assert cmp.mean_distance == 0.0
        assert cmp.energy_distance == 0.0
        assert cmp.variance_ratio == pytest.approx(1.0)

    def test_disjoint_seed_sets_same_law_pass(self):
        e1 = self._ensemble(0.1, base_seed=10)
        e2 = self._ensemble(0.1, base_seed=777)
        cmp = compare_laws(e1, e2)
        assert cmp.same_pass

    def test_different_noise_scales_fail(self):
        small = self._ensemble(0.1, base_seed=10)
        big = self._ensemble(0.5, base_seed=777)
        cmp = compare_laws(big, small)
        assert not cmp.same_pass
        assert cmp.variance_ratio > 5.0
        # and the ratio flips under argument exchange
        flipped = compare_laws(small, big)
        assert flipped.variance_ratio < 0.2

    def test_explicit_thresholds_override(self):
        e1 = self._ensemble(0.1, base_seed=10)
        e2 = self._ensemble(0.1, base_seed=777)
        cmp = compare_laws(e1, e2, tau_mean=1e-30, tau_energy=1e-30)
        assert not cmp.same_pass
