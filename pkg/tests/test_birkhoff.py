"""
Tests for the isochronous normal form.
"""

import math

import numpy as np
import pytest

from models.errors import DomainError, TailDivergenceError
from models.hamiltonian import ExtendedHamiltonian
from models.series import FourierTaylorSeries, TaylorBasis
from models.timefn import Envelope, ExpPoly


@pytest.fixture
def resonant_pair():
    """omega = (1, -1) with an action-dependent perturbation on the resonance k = (1, 1)."""
    basis = TaylorBasis([(0.0, 1.0), (0.0, 1.0)], 4)
    resonant = ExpPoly.exponential(basis.from_polynomial({(0, 0): 1.0, (1, 0): 1.0}) / 2, 1.0)
    mixed = ExpPoly.exponential(basis.from_polynomial({(0, 1): 1.0}) / 2, 1.0)
    f = FourierTaylorSeries(basis, 4, 0.5, 0.5, {
        (1, 1): resonant, (-1, -1): resonant, (1, 0): mixed, (-1, 0): mixed,
    })
    return ExtendedHamiltonian(
        h_terms={(1, 0): 1.0, (0, 1): -1.0}, perturbation=f, hat_epsilon=1e-5,
        envelope=Envelope(3.0, 1.0, 0),
    )


class TestHomologicalEquation:
    """chi_t + omega . chi_phi = F."""

    def test_closed_form_tail(self, birkhoff, pendulum_kick):
        F = pendulum_kick.scaled_perturbation
        chi = birkhoff.solve_homological_iso(F, [1.0])
        expected = 0.5e-3 * math.exp(-2.0) / complex(-1.0, 1.0)
        assert complex(chi[(1,)].value(2.0)[0]) == pytest.approx(expected)
        assert birkhoff.homological_residual(chi, F, [1.0], horizon=20.0) < 1e-12

    def test_zero_initial_condition(self, birkhoff, resonant_pair):
        F = resonant_pair.scaled_perturbation
        omega = resonant_pair.constant_frequency()
        chi = birkhoff.solve_homological_iso(F, omega, initial_condition="zero")
        for _, c in chi.items():
            assert np.allclose(c.value(0.0), 0.0, atol=1e-18)
        assert birkhoff.homological_residual(chi, F, omega, horizon=20.0) < 1e-12

    def test_resonant_mode_is_solvable(self, birkhoff, resonant_pair):
        F = resonant_pair.scaled_perturbation
        chi = birkhoff.solve_homological_iso(F, resonant_pair.constant_frequency())
        assert (1, 1) in chi

    def test_non_decaying_mode(self, birkhoff):
        basis = TaylorBasis([(0.0, 1.0)], 2)
        F = FourierTaylorSeries(basis, 2, 0.5, 0.5, {(1,): ExpPoly.constant(np.array([1.0, 0.0, 0.0]))})
        with pytest.raises(TailDivergenceError) as info:
            birkhoff.solve_homological_iso(F, [0.0])
        assert info.value.harmonic == (1,)

    def test_frequency_length_checked(self, birkhoff, pendulum_kick):
        with pytest.raises(ValueError):
            birkhoff.solve_homological_iso(pendulum_kick.scaled_perturbation, [1.0, 2.0])

    def test_divisor_ratio(self, birkhoff, pendulum_kick):
        ratio = birkhoff.min_divisor_ratio(pendulum_kick.scaled_perturbation, [1.0])
        assert ratio == pytest.approx(math.sqrt(2.0))

    def test_generator_within_its_bounds_for_random_modes(self, birkhoff, lie, constants):
        rng = np.random.default_rng(11)
        delta, rho, sigma = 0.25, 0.5, 0.5
        for _ in range(20):
            n = int(rng.integers(1, 3))
            basis = TaylorBasis([(0.0, 1.0)] * n, 2)
            k = tuple(int(x) for x in rng.integers(-2, 3, size=n))
            if not any(k):
                k = (1,) + k[1:]
            rate = float(rng.uniform(0.2, 2.0))
            omega = rng.uniform(-2.0, 2.0, size=n)
            vec = 1e-3 * (rng.normal(size=basis.size) + 1j * rng.normal(size=basis.size))
            F = FourierTaylorSeries(basis, 4, rho, sigma, {k: ExpPoly.exponential(vec, rate)})
            M = lie.fourier_norm(F, rate=rate).M
            c_omega = 1.0 + float(np.max(np.abs(omega)))
            bounds = constants.variant_homological_bounds("exponential", M, n, c_omega, delta, sigma, a=rate)
            chi = birkhoff.solve_homological_iso(F, omega)
            inner = ((1 - delta) * rho, (1 - delta) * sigma)
            assert lie.fourier_norm(chi, *inner, rate=rate).M <= bounds.chi
            assert lie.fourier_norm(chi.d_time(), *inner, rate=rate).M <= bounds.chi_t


class TestBirkhoffIteration:
    """Quadratic steps and the composed map."""

    def test_requires_isochronous_part(self, birkhoff, desk_system):
        with pytest.raises(ValueError):
            birkhoff.initial_state(desk_system)

    def test_angle_only_perturbation_is_removed_in_one_step(self, birkhoff, pendulum_kick):
        state, near_identity = birkhoff.run_birkhoff(pendulum_kick, j_max=3, stop_tol=1e-14)
        assert state.j == 1
        assert state.measured_M == 0.0
        assert state.perturbation.is_zero()
        assert near_identity.kind == "lie_series"
        assert len(near_identity.stages) == 1

    def test_step_is_quadratic(self, birkhoff, resonant_pair):
        state = birkhoff.initial_state(resonant_pair)
        M0 = state.measured_M
        state = birkhoff.birkhoff_step(state)
        assert state.j == 1
        assert 0 < state.measured_M < M0 / 10
        rho0, sigma0 = state.radii_history[0]
        rho1, sigma1 = state.radii_history[1]
        d0 = state.schedule.step_fraction(0)
        assert rho1 == pytest.approx(rho0 * (1 - 3 * d0))
        assert sigma1 == pytest.approx(sigma0 * (1 - 3 * d0))
        record = state.records[0]
        assert record.residual_ok
        assert record.chi_ok
        assert record.lie_orders >= 1

    def test_zero_perturbation_gives_identity(self, birkhoff, pendulum_kick):
        silent = ExtendedHamiltonian(
            h_terms=pendulum_kick.h_terms, perturbation=pendulum_kick.perturbation,
            hat_epsilon=0.0, envelope=pendulum_kick.envelope,
        )
        state, near_identity = birkhoff.run_birkhoff(silent, j_max=3, stop_tol=1e-14)
        assert state.j == 0
        assert near_identity.is_identity

    def test_negative_step_budget(self, birkhoff, pendulum_kick):
        with pytest.raises(ValueError):
            birkhoff.run_birkhoff(pendulum_kick, j_max=-1, stop_tol=1e-14)


class TestNearIdentityMap:
    """Evaluating the composed map and its inverse."""

    def test_action_shift(self, birkhoff, pendulum_kick):
        _, near_identity = birkhoff.run_birkhoff(pendulum_kick, j_max=3, stop_tol=1e-14)
        action, angle, eta = birkhoff.map_point(near_identity, ([0.5], [0.0], 0.0, 0.0))
        # I_old = I_new - chi_phi with chi_phi(0, 0) = hat_eps / 2
        assert action[0] == pytest.approx(0.5 - 0.5e-3)
        assert angle[0] == pytest.approx(0.0, abs=1e-15)
        assert np.isfinite(eta)

    def test_inverse_undoes_the_map(self, birkhoff, pendulum_kick):
        _, near_identity = birkhoff.run_birkhoff(pendulum_kick, j_max=3, stop_tol=1e-14)
        action, angle = near_identity.map_point([0.4], [1.2], 0.7)
        back_action, back_angle = near_identity.inverse().map_point(action, angle, 0.7)
        assert back_action[0] == pytest.approx(0.4, abs=1e-14)
        assert back_angle[0] == pytest.approx(1.2, abs=1e-14)

    def test_inverse_on_random_points(self, birkhoff, resonant_pair):
        _, near_identity = birkhoff.run_birkhoff(resonant_pair, j_max=2, stop_tol=1e-14)
        inverse = near_identity.inverse()
        rng = np.random.default_rng(5)
        for _ in range(100):
            action = rng.uniform(0.2, 0.8, 2)
            angle = rng.uniform(0.0, 2 * np.pi, 2)
            t = float(rng.uniform(0.0, 5.0))
            back_action, back_angle = inverse.map_point(*near_identity.map_point(action, angle, t), t)
            assert np.allclose(back_action, action, rtol=0, atol=1e-11)
            assert np.allclose(back_angle, angle, rtol=0, atol=1e-11)

    def test_outside_domain(self, birkhoff, pendulum_kick):
        _, near_identity = birkhoff.run_birkhoff(pendulum_kick, j_max=3, stop_tol=1e-14)
        with pytest.raises(DomainError):
            near_identity.map_point([2.0], [0.0], 0.0)
        with pytest.raises(DomainError):
            near_identity.map_point([0.5], [0.0], -1.0)

    def test_new_actions_are_conserved(self, birkhoff, dynamics, pendulum_kick):
        _, near_identity = birkhoff.run_birkhoff(pendulum_kick, j_max=3, stop_tol=1e-14)
        traj = dynamics.integrate(pendulum_kick, [0.5], [0.3], 10.0, samples=101)
        check = dynamics.verify_normal_form(near_identity, traj, rate=1.0)
        assert check.map_kind == "lie_series"
        assert check.raw_variation > 1e-4
        assert check.improvement is None or check.improvement > 100


class TestBirkhoffReport:
    """Run-level audits."""

    def test_report_has_no_hard_failures(self, birkhoff, pendulum_kick):
        state, near_identity = birkhoff.run_birkhoff(pendulum_kick, j_max=3, stop_tol=1e-14)
        report = birkhoff.build_report(state, near_identity, stop_tol=1e-14)
        assert report.converged
        assert report.iterations == 1
        assert report.outside_proven_regime
        assert report.schedule_dominates is None
        assert report.hard_failures() == []
        assert report.map_displacement[0][0] == 0.0

    def test_cauchy_audit(self, birkhoff, pendulum_kick):
        state, _ = birkhoff.run_birkhoff(pendulum_kick, j_max=3, stop_tol=1e-14)
        shift, bound = birkhoff.cauchy_audit(state)
        assert shift is not None and shift > 0
        assert bound > 0

    def test_cauchy_audit_before_any_step(self, birkhoff, pendulum_kick):
        assert birkhoff.cauchy_audit(birkhoff.initial_state(pendulum_kick)) == (None, None)
