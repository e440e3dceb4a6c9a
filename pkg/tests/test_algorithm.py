"""Tests for the iterative truncated-UPRE estimation loop."""

import math

import numpy as np
import pytest

from tupre import (
    DecayModel,
    EstimatorInput,
    InputError,
    TupreConfig,
    alpha_lower_bound,
    generate_model_problem,
    run_tupre,
    upre_value,
)
from tupre.algorithm import window_mean


def flat_tail_input(n=200, noise_sigma=0.05, signal=0.9):
    """One strong coefficient, exactly noise-level coefficients beyond it."""
    sigma = np.arange(1, n + 1, dtype=float) ** -2.0
    s = np.full(n, noise_sigma)
    s[0] = signal
    return EstimatorInput(
        sigma=sigma, s=s, b_norm_sq=float(np.dot(s, s)), m=n, noise_var=noise_sigma**2
    )


def problem_input(instance):
    coeffs = instance.coefficients()
    return EstimatorInput.from_spectral(
        instance.system, coeffs, instance.noise_var_normalized
    )


class TestWindowMean:
    def test_injected_sequence(self):
        changes = [0.05, 0.002, 0.001, 0.0005, 0.0004, 0.0003]
        assert window_mean(changes, 5) == pytest.approx(0.00084)

    def test_short_sequence_uses_all_entries(self):
        assert window_mean([0.4, 0.2], 5) == pytest.approx(0.3)

    def test_empty_is_infinite(self):
        assert window_mean([], 5) == math.inf


class TestConfigValidation:
    def test_defaults(self):
        config = TupreConfig()
        assert (config.k0, config.delta_k, config.w) == (10, 10, 5)
        assert config.delta == 1e-3
        assert config.k_max is None

    def test_bad_values(self):
        with pytest.raises(InputError):
            TupreConfig(k0=0)
        with pytest.raises(InputError):
            TupreConfig(delta_k=0)
        with pytest.raises(InputError):
            TupreConfig(k0=20, k_max=10)
        with pytest.raises(InputError):
            TupreConfig(delta=0.0)
        with pytest.raises(InputError):
            TupreConfig(w=0)


class TestRunTupre:
    def test_constant_alpha_regime_stops_after_window_fills(self):
        inp = flat_tail_input()
        result = run_tupre(inp, TupreConfig(k0=10, delta_k=10, k_max=200))
        assert result.terminated_by == "tolerance"
        # initial evaluation plus exactly w window-filling steps
        assert len(result.trace) == 6
        assert result.k_opt == 60
        assert result.c_hat < 1e-3

    def test_degenerate_single_evaluation(self):
        inp = flat_tail_input()
        result = run_tupre(inp, TupreConfig(k0=15, delta_k=10, k_max=15))
        assert result.terminated_by == "k_max"
        assert result.k_opt == 15
        assert len(result.trace) == 1
        assert result.trace[0].change is None
        assert math.isinf(result.c_hat)

    def test_final_step_clamped_to_k_max(self):
        inp = flat_tail_input()
        result = run_tupre(inp, TupreConfig(k0=10, delta_k=7, k_max=20, delta=1e-12, w=50))
        assert [step.k for step in result.trace] == [10, 17, 20]
        assert result.terminated_by == "k_max"

    def test_iteration_budget(self):
        inp = flat_tail_input()
        config = TupreConfig(k0=10, delta_k=10, k_max=200, delta=1e-15, w=3)
        result = run_tupre(inp, config)
        assert len(result.trace) <= math.ceil((200 - 10) / 10) + 1
        assert result.k_opt == 200

    def test_k_max_exceeding_spectrum_rejected(self):
        inp = flat_tail_input(n=50)
        with pytest.raises(InputError):
            run_tupre(inp, TupreConfig(k_max=51))

    def test_k_max_defaults_to_effective_rank(self):
        inp = flat_tail_input(n=50)
        result = run_tupre(inp, TupreConfig(k0=10, delta_k=10, delta=1e-15, w=50))
        assert result.k_opt == 50

    def test_trace_contract(self):
        inp = flat_tail_input()
        result = run_tupre(inp, TupreConfig(k0=10, delta_k=10, k_max=120, delta=1e-9, w=4))
        ks = [step.k for step in result.trace]
        assert ks == list(range(10, result.k_opt + 1, 10))
        for step in result.trace:
            assert 0.0 < step.alpha <= 1.0
            assert step.alpha >= step.alpha_min or step.at_boundary
        changes = [step.change for step in result.trace[1:]]
        assert all(c is not None for c in changes)
        assert result.c_hat == pytest.approx(window_mean(changes, 4))
        assert result.alpha_opt == result.trace[-1].alpha
        assert result.k_opt == result.trace[-1].k

    def test_tolerance_exit_requires_alpha_above_floor(self):
        inp = flat_tail_input()
        result = run_tupre(inp, TupreConfig(k0=10, delta_k=10, k_max=200))
        assert result.terminated_by == "tolerance"
        final = result.trace[-1]
        assert final.alpha > final.alpha_min
        assert not final.at_boundary

    def test_fixed_floor_with_l_estimate(self):
        inp = flat_tail_input()
        config = TupreConfig(k0=10, delta_k=10, k_max=80, l_estimate=1)
        result = run_tupre(inp, config)
        expected = alpha_lower_bound(float(inp.sigma[1]))
        assert all(step.alpha_min == pytest.approx(expected) for step in result.trace)

    def test_moving_floor_without_l_estimate(self):
        inp = flat_tail_input()
        result = run_tupre(inp, TupreConfig(k0=10, delta_k=10, k_max=60, delta=1e-15, w=50))
        floors = [step.alpha_min for step in result.trace]
        expected = [alpha_lower_bound(float(inp.sigma[k - 1])) for k in (10, 20, 30, 40, 50, 60)]
        np.testing.assert_allclose(floors, expected)

    def test_l_estimate_validated(self):
        inp = flat_tail_input(n=50)
        with pytest.raises(InputError):
            run_tupre(inp, TupreConfig(k_max=50, l_estimate=50))


@pytest.fixture(scope="module")
def instance():
    return generate_model_problem(
        DecayModel("moderate", 1.5), n=512, nu=0.5, noise_sigma=0.05, seed=123
    )


class TestOnSyntheticProblem:
    def test_converges_by_tolerance(self, instance):
        result = run_tupre(problem_input(instance), TupreConfig())
        assert result.terminated_by == "tolerance"
        assert result.k_opt < 512 // 2

    def test_minimum_values_nondecreasing_along_trace(self, instance):
        inp = problem_input(instance)
        result = run_tupre(inp, TupreConfig())
        values = [upre_value(inp, step.k, step.alpha) for step in result.trace]
        for previous, current in zip(values, values[1:]):
            assert current >= previous * (1.0 - 1e-12)

    def test_deterministic(self, instance):
        inp = problem_input(instance)
        first = run_tupre(inp, TupreConfig())
        second = run_tupre(inp, TupreConfig())
        assert first == second
