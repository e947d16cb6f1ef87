"""
Tests for the finite-order normal form on a Chebyshev grid.
"""

import math

import numpy as np
import pytest

from models.errors import DomainError, RadiusError, TailDivergenceError
from models.hamiltonian import ExtendedHamiltonian
from models.series import FourierTaylorSeries, GridBasis
from models.timefn import Envelope, ExpPoly
from services.nekhoroshev_service import f_tilde, rate_ladder


def grid_system(cosine_series, nodes, harmonics, k_max, hat_epsilon):
    """h = I^2 / 2 with cosine harmonics decaying at rate 0.5 on a Chebyshev grid over [0.5, 1.5]."""
    basis = GridBasis([(0.5, 1.5)], [nodes])
    f = cosine_series(basis, harmonics, rate=0.5, k_max=k_max, rho=0.1, sigma=1.0)
    return ExtendedHamiltonian(h_terms={(2,): 0.5}, perturbation=f, hat_epsilon=hat_epsilon,
                               envelope=Envelope(1.0, 0.5, 0))


@pytest.fixture
def order_one(nekhoroshev, desk_system):
    shells = nekhoroshev.build_shells(desk_system, N=2, r=1)
    return nekhoroshev.normalize_order_r(shells)


class TestHelpers:
    def test_rate_ladder(self):
        assert rate_ladder(1.0, 2) == pytest.approx([1.0, 0.75, 0.375])

    def test_f_tilde(self):
        q = math.exp(-0.5)
        assert f_tilde(2, 1.0) == pytest.approx(((1 + q) / (1 - q)) ** 2)


class TestShells:
    """Harmonic shells of width N."""

    def test_shells(self, nekhoroshev, desk_system):
        sh = nekhoroshev.build_shells(desk_system, N=2, r=1)
        assert len(sh.shells) == 2
        assert sh.shell(1).harmonics() == [(-1,), (1,)]
        assert sh.shell(2).harmonics() == [(-3,), (3,)]
        assert sh.shell(3) is None
        assert sh.sigma == pytest.approx(0.5)
        assert sh.h == pytest.approx(math.exp(-0.5))
        assert sh.H0.eta == 1.0

    def test_shell_envelopes_use_the_decay_rate(self, nekhoroshev, desk_system):
        sh = nekhoroshev.build_shells(desk_system, N=2, r=1)
        env = sh.shell_envelopes[0]
        assert env.a == 0.5
        # two half-amplitude modes at |k| = 1, hat_eps = 1e-3, constant over the grid and doubled
        # by the grid inflation
        assert env.M == pytest.approx(2e-3 * math.exp(0.5), rel=1e-6)

    def test_too_few_harmonics(self, nekhoroshev, desk_system):
        with pytest.raises(DomainError):
            nekhoroshev.build_shells(desk_system, N=3, r=2)

    def test_needs_a_grid(self, nekhoroshev, pendulum_kick):
        with pytest.raises(ValueError):
            nekhoroshev.build_shells(pendulum_kick, N=1, r=1)
        sh = nekhoroshev.build_shells(pendulum_kick, N=1, r=1, grid=GridBasis([(0.0, 1.0)], [5]))
        assert isinstance(sh.basis, GridBasis)
        assert sh.shell(1).is_zero()
        assert sh.shell(2).harmonics() == [(-1,), (1,)]

    def test_needs_exponential_decay(self, nekhoroshev, desk_system):
        flat = ExtendedHamiltonian(
            h_terms=desk_system.h_terms, perturbation=desk_system.perturbation,
            hat_epsilon=1e-3, envelope=Envelope(1.0, 0.0, 0),
        )
        with pytest.raises(ValueError):
            nekhoroshev.build_shells(flat, N=2, r=1)

    def test_rejects_bad_orders(self, nekhoroshev, desk_system):
        with pytest.raises(ValueError):
            nekhoroshev.build_shells(desk_system, N=0, r=1)


class TestHomologicalEquation:
    """chi_t + omega(I) . chi_phi = Psi node by node."""

    def test_solution_annihilates_the_source(self, nekhoroshev, desk_system):
        sh = nekhoroshev.build_shells(desk_system, N=2, r=1)
        psi = sh.shell(1)
        chi = nekhoroshev.solve_homological_general(psi, desk_system)
        assert nekhoroshev.homological_residual(chi, psi, sh.H0, horizon=40.0) < 1e-12

    def test_frequency_depends_on_the_node(self, nekhoroshev, desk_system):
        sh = nekhoroshev.build_shells(desk_system, N=2, r=1)
        chi = nekhoroshev.solve_homological_general(sh.shell(1), desk_system)
        nodes = sh.basis.points[:, 0]
        values = chi[(1,)].value(0.0)
        # c' + i I c = f with f = (hat_eps / 2) e^{-t/2}
        expected = 0.5e-3 / (-0.5 + 1j * nodes)
        assert np.allclose(values, expected)

    def test_needs_a_grid(self, nekhoroshev, pendulum_kick):
        with pytest.raises(ValueError):
            nekhoroshev.solve_homological_general(pendulum_kick.perturbation, pendulum_kick)

    def test_divergent_mode_names_the_node(self, nekhoroshev, desk_system):
        basis = GridBasis([(0.5, 1.5)], [5])
        psi = FourierTaylorSeries(basis, 4, 0.1, 0.5, {(0,): ExpPoly.constant(np.ones(5))})
        with pytest.raises(TailDivergenceError) as info:
            nekhoroshev.solve_homological_general(psi, desk_system, s=1)
        assert info.value.harmonic == (0,)
        assert info.value.node == tuple(basis.points[0])


class TestNormalization:
    """Generators, levels and remainder."""

    def test_order_one(self, order_one):
        assert order_one.r == 1
        assert len(order_one.chi_seq) == 1
        assert order_one.s_total == 6
        assert len(order_one.levels) == 6
        assert order_one.a_ladder == pytest.approx([0.5, 0.25])
        record = order_one.level_records[0]
        assert record.level_ok
        assert record.homological_ok
        assert record.rate_ok

    def test_remainder_keeps_the_unnormalized_shell(self, lie, order_one):
        assert (3,) in order_one.remainder
        assert lie.majorant(order_one.levels[0]) <= 1e-10 * order_one.shells.epsilon

    def test_remainder_norm(self, nekhoroshev, order_one):
        env = nekhoroshev.remainder_norm(order_one)
        assert env.a >= order_one.a_ladder[1]
        assert env.M > 0

    def test_remainder_radius_checked(self, nekhoroshev, order_one):
        with pytest.raises(RadiusError):
            nekhoroshev.remainder_norm(order_one, rho=order_one.shells.rho)

    def test_remainder_checks(self, nekhoroshev, order_one):
        checks = nekhoroshev.remainder_checks(order_one)
        assert [c.t for c in checks] == pytest.approx([0.0, 2.0, 10.0, 40.0])
        assert all(c.below for c in checks)

    def test_s_total_must_exceed_order(self, nekhoroshev, desk_system):
        sh = nekhoroshev.build_shells(desk_system, N=2, r=1)
        with pytest.raises(ValueError):
            nekhoroshev.normalize_order_r(sh, s_total=1)

    def test_order_two(self, lie, nekhoroshev, desk_system):
        sh = nekhoroshev.build_shells(desk_system, N=2, r=2)
        res = nekhoroshev.normalize_order_r(sh)
        assert len(res.chi_seq) == 2
        assert all(rec.level_ok for rec in res.level_records)
        assert all(rec.homological_ok for rec in res.level_records)
        assert lie.majorant(res.levels[1]) <= 1e-10 * sh.epsilon

    @pytest.mark.slow
    def test_remainder_is_stable_under_grid_refinement(self, nekhoroshev, make_cosine_series):
        norms = []
        for nodes in (5, 9):
            H = grid_system(make_cosine_series, nodes, {(1,): 1.0, (3,): 1.0}, 4, 1e-3)
            res = nekhoroshev.normalize_order_r(nekhoroshev.build_shells(H, N=2, r=1))
            norms.append(nekhoroshev.remainder_norm(res).M)
        assert abs(norms[1] - norms[0]) < 0.01 * norms[0]

    @pytest.mark.slow
    def test_remainder_decreases_geometrically_with_the_order(self, nekhoroshev, make_cosine_series):
        harmonics = {(1,): 1.0, (3,): 0.05, (5,): 0.05 ** 2, (7,): 0.05 ** 3}
        H = grid_system(make_cosine_series, 5, harmonics, 8, 1e-6)
        norms = []
        for r in range(1, 5):
            res = nekhoroshev.normalize_order_r(nekhoroshev.build_shells(H, N=2, r=r))
            norms.append(nekhoroshev.remainder_norm(res).M)
        assert all(later <= 0.5 * earlier for earlier, later in zip(norms, norms[1:])), norms


class TestTransformAndReport:
    """The coordinate map and the run report."""

    def test_transform_map(self, nekhoroshev, order_one):
        near_identity = nekhoroshev.transform_map(order_one)
        assert near_identity.kind == "lie_transform"
        assert near_identity.margin == pytest.approx(0.25 * order_one.shells.rho)
        action, angle = near_identity.map_point([1.0], [0.4], 0.0)
        back_action, back_angle = near_identity.inverse().map_point(action, angle, 0.0)
        assert back_action[0] == pytest.approx(1.0, abs=1e-9)
        assert back_angle[0] == pytest.approx(0.4, abs=1e-9)

    def test_inverse_on_random_points(self, nekhoroshev, order_one):
        near_identity = nekhoroshev.transform_map(order_one)
        inverse = near_identity.inverse()
        rng = np.random.default_rng(3)
        for _ in range(100):
            action = rng.uniform(0.6, 1.4, 1)
            angle = rng.uniform(0.0, 2 * np.pi, 1)
            t = float(rng.uniform(0.0, 10.0))
            back_action, back_angle = inverse.map_point(*near_identity.map_point(action, angle, t), t)
            assert np.allclose(back_action, action, rtol=0, atol=1e-9)
            assert np.allclose(back_angle, angle, rtol=0, atol=1e-9)

    def test_report(self, nekhoroshev, order_one):
        report = nekhoroshev.build_report(order_one, flags={"eps_ok": True}, check_conservation=True)
        assert report.N == 2
        assert report.remainder_rate_ok
        assert report.conservation_defect < 1e-6
        assert report.hard_failures() == []

    def test_trajectory_through_the_map(self, nekhoroshev, dynamics, desk_system, order_one):
        near_identity = nekhoroshev.transform_map(order_one)
        traj = dynamics.integrate(desk_system, [1.0], [0.2], 10.0, samples=51)
        check = dynamics.verify_normal_form(near_identity, traj, rate=0.5, max_points=20)
        assert check.map_kind == "lie_transform"
        assert np.isfinite(check.transformed_variation)
