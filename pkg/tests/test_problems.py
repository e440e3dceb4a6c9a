"""Tests for synthetic problem generation, noise injection, and metrics."""

import numpy as np
import pytest

from tupre import (
    DecayModel,
    DegenerateInputError,
    DomainError,
    InputError,
    add_noise,
    estimate_noise_index,
    estimate_noise_variance,
    fit_decay,
    generate_blur_problem,
    generate_model_problem,
    normalize_data,
    rre,
    with_noise_level,
)
from tupre.problems import (
    load_instance,
    make_kronecker_blur,
    save_instance,
)
from tupre.spectral import SpectralCoefficients

MODERATE = DecayModel("moderate", 2.0)


class TestGenerateModelProblem:
    def test_deterministic_under_seed(self):
        a = generate_model_problem(MODERATE, 64, 0.5, 0.05, seed=9)
        b = generate_model_problem(MODERATE, 64, 0.5, 0.05, seed=9)
        np.testing.assert_array_equal(a.b, b.b)
        np.testing.assert_array_equal(a.x_true, b.x_true)
        np.testing.assert_array_equal(a.system.u_cols, b.system.u_cols)

    def test_unit_norm_clean_data(self):
        inst = generate_model_problem(MODERATE, 128, 0.5, 0.05, seed=2)
        assert np.linalg.norm(inst.b_true) == pytest.approx(1.0)
        assert inst.system.scale == 1.0

    def test_crossover_matches_reference_table_entry(self):
        inst = generate_model_problem(MODERATE, 256, 0.5, 1e-2, seed=4)
        assert inst.l_true == 4

    def test_picard_ratio_decreases_without_noise(self):
        inst = generate_model_problem(MODERATE, 64, 0.5, 1e-12, seed=5)
        coeffs = normalize_data(inst.system, inst.b)
        ratio = np.abs(coeffs.s) / inst.system.sigma
        assert np.all(np.diff(ratio) < 0)

    def test_noise_energy_near_nominal(self):
        inst = generate_model_problem(MODERATE, 512, 0.5, 0.1, seed=6)
        eta = inst.b - inst.b_true
        assert np.dot(eta, eta) / 512 == pytest.approx(0.01, rel=0.2)

    def test_tail_coefficients_noise_dominated(self):
        # Past the crossover the measured coefficient energy matches the
        # noise variance plus the residual clean-signal energy.
        inst = generate_model_problem(MODERATE, 1024, 0.5, 1e-2, seed=10)
        coeffs = normalize_data(inst.system, inst.b)
        clean = normalize_data(inst.system, inst.b_true)
        tail = slice(inst.l_true, None)
        expected = inst.noise_sigma**2 + float(np.mean(clean.s[tail] ** 2))
        measured = float(np.mean(coeffs.s[tail] ** 2))
        assert measured == pytest.approx(expected, rel=0.2)

    def test_forward_consistency(self):
        inst = generate_model_problem(MODERATE, 32, 0.5, 0.05, seed=7)
        sys = inst.system
        image = sys.scale * (sys.u_cols * sys.sigma) @ (sys.v_cols.T @ inst.x_true)
        np.testing.assert_allclose(image, inst.b_true, atol=1e-12)

    def test_degenerate_when_noise_swamps_signal(self):
        # The leading normalized coefficient is ~0.9914 for tau = 2, nu = 0.5.
        with pytest.raises(DegenerateInputError):
            generate_model_problem(MODERATE, 64, 0.5, 0.995, seed=8)

    def test_preconditions(self):
        with pytest.raises(InputError):
            generate_model_problem(MODERATE, 4, 0.5, 0.05, seed=0)
        with pytest.raises(InputError):
            generate_model_problem(MODERATE, 64, 1.5, 0.05, seed=0)


class TestWithNoiseLevel:
    def test_shares_truth_and_redraws_noise(self):
        base = generate_model_problem(MODERATE, 64, 0.5, 0.05, seed=11)
        sibling = with_noise_level(base, 0.01, seed=99)
        assert sibling.system is base.system
        np.testing.assert_array_equal(sibling.b_true, base.b_true)
        assert not np.array_equal(sibling.b, base.b)
        assert sibling.noise_sigma == 0.01
        assert sibling.l_true >= base.l_true  # lower noise keeps more terms

    def test_crossover_recomputed(self):
        base = generate_model_problem(MODERATE, 256, 0.5, 0.05, seed=11)
        assert with_noise_level(base, 1e-2, seed=1).l_true == 4


class TestAddNoise:
    def test_zero_noise_is_identity(self):
        b = np.arange(5.0)
        np.testing.assert_array_equal(add_noise(b, 0.0, seed=3), b)

    def test_seeded_reproducibility(self):
        b = np.zeros(100)
        np.testing.assert_array_equal(add_noise(b, 0.5, seed=3), add_noise(b, 0.5, seed=3))

    def test_sample_variance_within_chi_square_interval(self):
        eta = add_noise(np.zeros(10_000), 0.1, seed=12)
        assert 0.0094 <= np.var(eta) <= 0.0106


class TestRre:
    def test_exact_recovery(self):
        x = np.array([1.0, 2.0])
        assert rre(x, x) == 0.0

    def test_zero_estimate(self):
        x = np.array([3.0, 4.0])
        assert rre(np.zeros(2), x) == pytest.approx(1.0)

    def test_double_estimate(self):
        x = np.array([3.0, 4.0])
        assert rre(2 * x, x) == pytest.approx(1.0)

    def test_zero_truth_rejected(self):
        with pytest.raises(DomainError):
            rre(np.ones(2), np.zeros(2))


class TestNoiseEstimators:
    def test_constant_tail_variance(self):
        s = np.concatenate([np.array([5.0, 2.0]), np.full(30, 0.25)])
        coeffs = SpectralCoefficients(s=s, b_norm_sq=float(np.dot(s, s)), m=32)
        assert estimate_noise_variance(coeffs, 0.5) == pytest.approx(0.0625)

    def test_zero_tail(self):
        s = np.concatenate([np.ones(8), np.zeros(24)])
        coeffs = SpectralCoefficients(s=s, b_norm_sq=8.0, m=32)
        assert estimate_noise_variance(coeffs, 0.5) == 0.0

    def test_tail_too_small(self):
        coeffs = SpectralCoefficients(s=np.ones(16), b_norm_sq=16.0, m=16)
        with pytest.raises(InputError):
            estimate_noise_variance(coeffs, 0.25)

    def test_recovers_variance_on_synthetic_instance(self):
        inst = generate_model_problem(MODERATE, 1024, 0.5, 0.05, seed=13)
        coeffs = normalize_data(inst.system, inst.b)
        estimate = estimate_noise_variance(coeffs, 0.25)
        assert estimate == pytest.approx(0.0025, rel=0.15)

    def test_noise_index_near_crossover(self):
        inst = generate_model_problem(MODERATE, 1024, 0.5, 1e-2, seed=14)
        coeffs = normalize_data(inst.system, inst.b)
        estimate = estimate_noise_index(coeffs, 1e-4)
        assert abs(estimate - inst.l_true) <= 3

    def test_all_noise_coefficients(self):
        s = np.full(64, 0.1)
        coeffs = SpectralCoefficients(s=s, b_norm_sq=float(np.dot(s, s)), m=64)
        assert estimate_noise_index(coeffs, 0.01) == 1

    def test_everything_above_threshold(self):
        s = np.full(64, 1.0)
        coeffs = SpectralCoefficients(s=s, b_norm_sq=64.0, m=64)
        assert estimate_noise_index(coeffs, 0.01) == 64


class TestKroneckerBlur:
    def test_factor_svd_matches_dense_svd(self):
        blur = make_kronecker_blur(16, 1.5)
        inst = generate_blur_problem(16, 1.5, 0.01, seed=15)
        dense = np.kron(blur.a_left, blur.a_right)
        reference = np.linalg.svd(dense, compute_uv=False)
        assembled = inst.system.scale * inst.system.sigma
        np.testing.assert_allclose(assembled, reference[: assembled.size], atol=1e-10)

    def test_system_reconstructs_operator(self):
        blur = make_kronecker_blur(16, 1.5)
        inst = generate_blur_problem(16, 1.5, 0.01, seed=16)
        sys = inst.system
        dense = np.kron(blur.a_left, blur.a_right)
        rebuilt = sys.scale * (sys.u_cols * sys.sigma) @ sys.v_cols.T
        assert np.linalg.norm(rebuilt - dense) / np.linalg.norm(dense) < 1e-10

    def test_delta_kernel_gives_identity(self):
        inst = generate_blur_problem(16, 1e-6, 0.01, seed=17)
        np.testing.assert_allclose(inst.system.sigma, 1.0, atol=1e-14)

    def test_fitted_decay_in_imaging_range(self):
        # A separable Gaussian kernel yields a sorted 2D spectrum that is
        # exponential in rank with a per-step ratio barely above one, so the
        # automatic fit picks the exponential law with tau near 1 (decay as
        # slow as any imaging problem). The power-law projection of the same
        # range lands in the mild/moderate window reported for imaging data.
        inst = generate_blur_problem(64, 2.0, 0.05, seed=18)
        sigma = inst.system.sigma
        fit = fit_decay(sigma, (1, 1000))
        assert fit.kind == "severe" and fit.tau < 1.1
        idx = np.arange(1, 1001, dtype=float)
        power_tau = -np.polyfit(np.log(idx), np.log(sigma[:1000]), 1)[0]
        assert 0.5 <= power_tau <= 2.0

    def test_unit_norm_and_crossover(self):
        inst = generate_blur_problem(16, 1.5, 0.01, seed=19)
        assert np.linalg.norm(inst.b_true) == pytest.approx(1.0)
        assert inst.l_true >= 1

    def test_preconditions(self):
        with pytest.raises(InputError):
            make_kronecker_blur(24, 1.5)
        with pytest.raises(InputError):
            make_kronecker_blur(8, 1.5)
        with pytest.raises(InputError):
            make_kronecker_blur(16, 0.0)

    def test_deterministic_under_seed(self):
        a = generate_blur_problem(16, 1.5, 0.05, seed=20)
        b = generate_blur_problem(16, 1.5, 0.05, seed=20)
        np.testing.assert_array_equal(a.b, b.b)
        np.testing.assert_array_equal(a.x_true, b.x_true)


class TestSerialization:
    def test_round_trip_bit_exact(self, tmp_path):
        inst = generate_model_problem(MODERATE, 32, 0.5, 0.05, seed=21)
        save_instance(inst, tmp_path, problem_meta={"decay": "moderate", "tau": 2.0, "nu": 0.5})
        loaded, meta = load_instance(tmp_path)
        assert meta == {"decay": "moderate", "tau": 2.0, "nu": 0.5}
        np.testing.assert_array_equal(loaded.b, inst.b)
        np.testing.assert_array_equal(loaded.b_true, inst.b_true)
        np.testing.assert_array_equal(loaded.x_true, inst.x_true)
        np.testing.assert_array_equal(loaded.system.sigma, inst.system.sigma)
        np.testing.assert_array_equal(loaded.system.u_cols, inst.system.u_cols)
        assert loaded.l_true == inst.l_true
        assert loaded.noise_sigma == inst.noise_sigma
        assert loaded.seed == inst.seed

    def test_binary_files_are_little_endian_float64(self, tmp_path):
        inst = generate_model_problem(MODERATE, 16, 0.5, 0.05, seed=22)
        save_instance(inst, tmp_path)
        raw = (tmp_path / "b.bin").read_bytes()
        assert len(raw) == 16 * 8
        np.testing.assert_array_equal(np.frombuffer(raw, dtype="<f8"), inst.b)
