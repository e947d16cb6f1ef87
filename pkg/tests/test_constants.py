"""
Tests for the constants calculator.
"""

import math

import numpy as np
import pytest

from models.errors import DomainError, RegimeFlagError


@pytest.fixture
def desk_params(constants):
    """A finite-order parameter set with every regime flag satisfied."""
    return constants.nekho_params(n=1, a=1.0, rho_H=0.2, sigma_H=1.0, C_h=1.0, d=0.25, epsilon=1e-25)


class TestIsoSchedule:
    """Step sizes, radii and the smallness threshold of the isochronous scheme."""

    def threshold(self, constants):
        return constants.iso_schedule(1, 1.0, 0.5, 0.5, 2.0, 0.0).eps_a

    def test_variant_constant_does_not_depend_on_rate(self, constants):
        K = constants.iso_variant_constants("exponential", 1, 0.5, 0.5, 2.0)
        assert K == pytest.approx(2.0 * (math.e / 0.25) ** 5 / 0.25)
        slow = constants.iso_schedule(1, 0.1, 0.5, 0.5, 2.0, 0.0)
        fast = constants.iso_schedule(1, 1.0, 0.5, 0.5, 2.0, 0.0)
        assert slow.K == fast.K
        assert fast.eps_a == pytest.approx(10 * slow.eps_a)

    def test_in_regime(self, constants):
        eps = self.threshold(constants) / 10
        params = constants.iso_schedule(1, 1.0, 0.5, 0.5, 2.0, eps)
        assert params.in_regime
        assert not params.d_fallback
        assert params.d_sum_ok
        assert params.tau == 5
        assert params.eps_seq[1] == pytest.approx(eps / 2 ** 10)
        assert params.rho_seq[1] == pytest.approx(0.5 * (1 - 3 * params.d_seq[0]))
        assert params.sigma_seq[1] == pytest.approx(0.5 * (1 - 3 * params.d_seq[0]))
        assert params.recursion_max_rel_error <= 1e-10
        assert params.decay_ladder[:3] == [1.0, 2.0, 4.0]

    def test_out_of_regime_falls_back(self, constants):
        eps = self.threshold(constants) * 10
        params = constants.iso_schedule(1, 1.0, 0.5, 0.5, 2.0, eps)
        assert not params.in_regime
        assert params.d_fallback
        assert params.d_seq[0] == pytest.approx(1 / math.pi ** 2)
        assert params.step_fraction(100) == pytest.approx(1 / (math.pi ** 2 * 101 ** 2))

    def test_fallback_step_fraction_beyond_the_stored_sequence(self, constants):
        params = constants.iso_schedule(1, 1.0, 0.5, 0.5, 2.0, self.threshold(constants) * 10)
        assert params.step_fraction(100) == 1.0 / (math.pi ** 2 * 101 ** 2)

    def test_radii_shrink_monotonically(self, constants):
        params = constants.iso_schedule(1, 1.0, 0.5, 0.5, 2.0, self.threshold(constants) / 100)
        assert all(b < a for a, b in zip(params.rho_seq, params.rho_seq[1:]))
        assert params.radius_product > 0.5

    def test_rejects_non_positive_rate(self, constants):
        with pytest.raises(ValueError):
            constants.iso_schedule(1, 0.0, 0.5, 0.5, 2.0, 0.0)

    def test_quadratic_class_ignores_rate(self, constants):
        params = constants.iso_schedule(1, 0.0, 0.5, 0.5, 2.0, 0.0, time_class="quadratic")
        assert params.rate_factor == 1.0
        assert params.decay_ladder == []

    def test_bump_constant(self, constants):
        base = constants.iso_variant_constants("exponential", 1, 0.5, 0.5, 2.0)
        K = constants.iso_variant_constants("bumps", 1, 0.5, 0.5, 2.0, bump_centers=[2.0, 5.0],
                                            bump_amplitudes=[1.0, -0.5], bump_width=1.0)
        assert K == pytest.approx(2 * base * 1.0 * 1.5)

    def test_overlapping_bumps(self, constants):
        with pytest.raises(DomainError):
            constants.check_bump_spacing([1.0, 2.0], 0.6)
        with pytest.raises(DomainError):
            constants.check_bump_spacing([0.5], 0.6)


class TestHomologicalBounds:
    """Class-specific sizes of chi and chi_t."""

    def test_exponential(self, constants):
        bounds = constants.variant_homological_bounds("exponential", 1.0, 1, 2.0, 0.5, 0.5, a=2.0)
        E = (math.e / 0.25) ** 2
        assert bounds.chi == pytest.approx(E / 2)
        assert bounds.chi_t == pytest.approx(E)
        assert bounds.rate == 2.0

    def test_quadratic_gains_a_power(self, constants):
        bounds = constants.variant_homological_bounds("quadratic", 1.0, 1, 2.0, 0.5, 0.5)
        assert bounds.power == 1
        assert bounds.rate == 0.0

    def test_bumps(self, constants):
        bounds = constants.variant_homological_bounds("bumps", 1.0, 1, 2.0, 0.5, 0.5, bump_width=0.5,
                                                      bump_amplitudes=[1.0, 1.0])
        E = (math.e / 0.25) ** 2
        assert bounds.chi == pytest.approx(2 * 2.0 * 0.5 * E)

    def test_zero_restriction_rejected(self, constants):
        with pytest.raises(ValueError):
            constants.variant_homological_bounds("exponential", 1.0, 1, 2.0, 0.0, 0.5, a=1.0)


class TestNekhoParams:
    """Finite-order parameters and smallness flags."""

    def test_unperturbed(self, constants):
        params = constants.nekho_params(1, 1.0, 0.2, 1.0, 1.0, 0.25, 0.0)
        assert params.sigma == pytest.approx(0.5)
        assert params.N == 13
        assert params.r == 1
        assert params.gamma == 6
        assert params.a_ladder == pytest.approx([1.0, 0.5])
        assert params.rho == pytest.approx(1 / 52)
        assert params.flags_ok

    def test_small_perturbation(self, desk_params):
        assert desk_params.r == 1
        assert not desk_params.r_forced
        assert desk_params.flags_ok
        assert desk_params.Delta == pytest.approx(desk_params.tau + desk_params.Gamma)

    def test_large_perturbation_forces_order_one(self, constants):
        params = constants.nekho_params(1, 1.0, 0.2, 1.0, 1.0, 0.25, 1e-3)
        assert params.r == 1
        assert params.r_forced
        assert not params.flags["eps_ok"]
        assert "eps_ok" in params.failed_flags()

    def test_order_override(self, constants):
        params = constants.nekho_params(1, 1.0, 0.2, 1.0, 1.0, 0.25, 1e-25, r_override=3)
        assert params.r == 3
        assert params.a_ladder == pytest.approx([1.0, 5 / 6, 5 / 6 * 4 / 6, 5 / 6 * 4 / 6 * 3 / 6])

    def test_d_range_flag(self, constants):
        params = constants.nekho_params(1, 1.0, 0.2, 1.0, 1.0, 0.4, 0.0)
        assert not params.flags["d_range"]

    def test_rejects_non_positive_inputs(self, constants):
        with pytest.raises(ValueError):
            constants.nekho_params(1, 0.0, 0.2, 1.0, 1.0, 0.25, 0.0)
        with pytest.raises(ValueError):
            constants.nekho_params(1, 1.0, 0.2, 1.0, 1.0, 0.25, -1.0)

    def test_step_radius(self, desk_params):
        assert desk_params.step_radius(1) == 0.0
        assert desk_params.step_radius(2) == pytest.approx(0.25)


class TestSequenceOracles:
    """Recursions against their closed forms."""

    def test_kappa_gamma(self, constants):
        result = constants.kappa_gamma(A=1.0, Gamma=0.01, tau=0.1, kappa1=1.0, gamma0=1.0)
        assert result.kappa[1] == pytest.approx(0.01 * 1.0 + 0.1 * 1.0)
        assert result.gamma[1] == pytest.approx(0.01)
        assert result.agree

    @pytest.mark.parametrize("A, Gamma, tau", [(1.0, 0.01, 0.1), (2.5, 0.2, 0.5), (0.3, 1e-4, 0.9)])
    def test_kappa_gamma_closed_forms_to_fifty_terms(self, constants, A, Gamma, tau):
        result = constants.kappa_gamma(A=A, Gamma=Gamma, tau=tau, kappa1=1.0, gamma0=1.0, s_max=50)
        assert len(result.kappa) == 50
        assert result.max_rel_error <= 1e-12
        assert result.agree

    def test_beta_theta(self, constants):
        h, Gamma = 0.1, 1e-3
        result = constants.beta_theta(h, Gamma, 2)
        assert result.beta == pytest.approx([1.0, h + Gamma ** 2 / 2])
        assert result.theta == pytest.approx([1.0, Gamma])
        assert result.within_bound
        assert result.choice_holds

    @pytest.mark.parametrize("r", [1, 2, 3, 5, 8])
    def test_auxiliary_inequality(self, constants, r):
        assert constants.beta_theta(0.1, 1e-4, r).ineq_holds

    def test_beta_bound_on_random_admissible_triples(self, constants):
        rng = np.random.default_rng(7)
        for _ in range(100):
            r = int(rng.integers(1, 6))
            h = float(rng.uniform(0.02, 1 / (8 * math.e)))
            Gamma = float(rng.uniform(0.05, 1.0)) * h / (2 * r ** 2)
            result = constants.beta_theta(h, Gamma, r)
            assert result.choice_holds
            assert result.within_bound, (h, Gamma, r)

    def test_auxiliary_inequality_to_order_fifty(self, constants):
        result = constants.beta_theta(0.04, 1e-6, 50)
        assert len(result.y) == 50
        assert result.ineq_holds

    def test_beta_theta_rejects_order_zero(self, constants):
        with pytest.raises(ValueError):
            constants.beta_theta(0.1, 1e-3, 0)

    def test_lie_bracket_bound(self, constants):
        value = constants.lie_bracket_bound(2.0, 0.5, 0.1, 0.3, 0.2, 0.5, 1.0, 1)
        factor = 2 * math.e * 0.5 / (0.2 * (0.2 + 0.2) * 0.5 * 1.0)
        assert value == pytest.approx(factor * 2.0 / math.e ** 2)

    def test_lie_bracket_bound_rejects_large_restriction(self, constants):
        with pytest.raises(ValueError):
            constants.lie_bracket_bound(1.0, 1.0, 0.2, 0.0, 0.9, 0.5, 1.0, 2)


class TestStabilityAndRemainder:
    """Drift, transform and remainder estimates."""

    def test_stability_bound(self, constants, desk_params):
        bound = constants.stability_bound(desk_params)
        assert bound.consistent
        assert bound.total == pytest.approx(math.sqrt(1e-25) * 0.25 * desk_params.rho / 2)

    def test_stability_bound_needs_flags(self, constants):
        params = constants.nekho_params(1, 1.0, 0.2, 1.0, 1.0, 0.25, 1e-3)
        with pytest.raises(RegimeFlagError):
            constants.stability_bound(params)

    def test_remainder_series(self, constants, desk_params):
        audit = constants.remainder_series(desk_params)
        assert audit.within_bound
        assert audit.power_check
        assert audit.total == pytest.approx(audit.closed_form, rel=1e-10)
        assert audit.closed_form <= audit.majorant <= audit.bound
        assert audit.note is None

    def test_transform_bound(self, constants, desk_params):
        bound = constants.transform_bound(desk_params)
        assert bound.within_bound
        assert bound.admissible
        assert bound.D_sigma == pytest.approx(1 * 1 * desk_params.C_r / (2 * 0.25 * 0.5 * 1.0))
        assert bound.displacement_bound == pytest.approx(desk_params.F_cal * bound.D_sigma, rel=1e-6)


class TestSweeps:
    """Parameter sweeps as tables."""

    def test_threshold_sweep_is_monotone(self, constants):
        df = constants.threshold_sweep([0.4, 0.1, 0.2], 1, 0.5, 0.5, 2.0, 0.2, 1.0, 1.0, 0.25)
        assert list(df.columns) == ["a", "eps_a", "eps_a_star", "monotone"]
        assert df["a"].tolist() == [0.1, 0.2, 0.4]
        assert df["monotone"].all()

    def test_epsilon_sweep(self, constants):
        df = constants.epsilon_sweep([1e-25, 1e-3], 1, 1.0, 0.2, 1.0, 1.0, 0.25)
        assert df["flags_ok"].tolist() == [True, False]
        assert (df["r"] >= 1).all()
