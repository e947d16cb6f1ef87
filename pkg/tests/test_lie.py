"""
Tests for Poisson brackets, weighted norms and Lie series.
"""

import math

import numpy as np
import pytest

from models.errors import LieSeriesDivergenceError, RadiusError
from models.series import Coordinate, FourierTaylorSeries, TaylorBasis
from models.timefn import ExpPoly


@pytest.fixture
def basis():
    return TaylorBasis([(0.0, 1.0)], 3)


def harmonic(basis, k, poly, rate):
    """poly(I) * cos(k phi) * e^{-rate t} as a Fourier-Taylor series."""
    vec = basis.from_polynomial(poly) / 2
    coeff = ExpPoly.exponential(vec, rate)
    return FourierTaylorSeries(basis, 4, 0.5, 0.5, {(k,): coeff, (-k,): coeff})


class TestPoissonBracket:
    """{F, G} = F_phi G_I - G_phi F_I + F_t G_eta - F_eta G_t."""

    def test_action_coordinate(self, lie, basis, make_cosine_series):
        G = make_cosine_series(basis, {(1,): 1.0}, rate=1.0, k_max=4, rho=0.5, sigma=0.5)
        bracket = lie.poisson_bracket(Coordinate.action(0), G)
        assert complex(bracket[(1,)].value(0.0)[0]) == pytest.approx(-0.5j)
        assert complex(bracket[(-1,)].value(0.0)[0]) == pytest.approx(0.5j)

    def test_angle_coordinate(self, lie, basis):
        G = harmonic(basis, 1, {(2,): 1.0}, 1.0)
        bracket = lie.poisson_bracket(Coordinate.angle(0), G)
        # d/dI (I^2 cos phi) = 2 I cos phi
        value = bracket.evaluate([0.3], [0.2], 0.0)
        assert value.real == pytest.approx(2 * 0.3 * math.cos(0.2))

    def test_matches_gradients(self, lie, basis):
        F = harmonic(basis, 1, {(1,): 1.0}, 1.0)
        G = harmonic(basis, 2, {(2,): 1.0}, 0.5)
        bracket = lie.poisson_bracket(F, G)
        action, angle, t = [0.3], [0.7], 0.4
        _, f_i, f_phi = F.evaluate_with_gradient(action, angle, t)
        _, g_i, g_phi = G.evaluate_with_gradient(action, angle, t)
        expected = f_phi[0] * g_i[0] - g_phi[0] * f_i[0]
        assert bracket.evaluate(action, angle, t).real == pytest.approx(expected)
        assert bracket.ledger == 0.0

    def test_antisymmetry(self, lie, basis):
        F = harmonic(basis, 1, {(1,): 1.0}, 1.0)
        G = harmonic(basis, 2, {(2,): 1.0}, 0.5)
        total = lie.poisson_bracket(F, G) + lie.poisson_bracket(G, F)
        assert abs(total.evaluate([0.6], [1.1], 0.2)) < 1e-12

    def test_jacobi_identity(self, lie, basis):
        F = harmonic(basis, 1, {(1,): 1.0}, 1.0)
        G = harmonic(basis, 2, {(1,): 1.0}, 0.5)
        H = harmonic(basis, 1, {(0,): 1.0, (1,): 1.0}, 0.3)
        pb = lie.poisson_bracket
        total = pb(pb(F, G), H) + pb(pb(G, H), F) + pb(pb(H, F), G)
        assert abs(total.evaluate([0.4], [0.9], 0.3)) < 1e-10
        assert abs(total.evaluate([0.8], [2.5], 1.7)) < 1e-10

    def test_eta_couples_to_time(self, lie, basis, make_cosine_series):
        F = make_cosine_series(basis, {(1,): 1.0}, rate=1.0, k_max=4, rho=0.5, sigma=0.5)
        H0 = FourierTaylorSeries(basis, 4, 0.5, 0.5,
                                 {(0,): ExpPoly.constant(basis.from_polynomial({(1,): 1.0}))}, eta=1.0)
        bracket = lie.poisson_bracket(F, H0)
        phi, t = 0.3, 0.2
        expected = -(math.sin(phi) + math.cos(phi)) * math.exp(-t)
        assert bracket.evaluate([0.5], [phi], t).real == pytest.approx(expected)

    def test_truncated_harmonics_go_to_the_ledger(self, lie, basis):
        F = harmonic(basis, 3, {(1,): 1.0}, 1.0)
        G = harmonic(basis, 2, {(1,): 1.0}, 1.0)
        bracket = lie.poisson_bracket(F, G)
        assert (5,) not in bracket
        assert bracket.ledger > 0.0

    def test_two_coordinates_rejected(self, lie):
        with pytest.raises(TypeError):
            lie.poisson_bracket(Coordinate.action(0), Coordinate.angle(0))


class TestNorms:
    """Weighted Fourier norms as time envelopes."""

    def test_single_harmonic(self, lie, basis, make_cosine_series):
        F = make_cosine_series(basis, {(1,): 1.0}, rate=1.0, k_max=4, rho=0.5, sigma=0.5)
        env = lie.fourier_norm(F)
        assert env.a == pytest.approx(1.0)
        assert env.M == pytest.approx(math.exp(0.5), rel=1e-6)

    def test_smaller_strip(self, lie, basis, make_cosine_series):
        F = make_cosine_series(basis, {(2,): 1.0}, rate=1.0, k_max=4, rho=0.5, sigma=0.5)
        assert lie.fourier_norm(F, sigma=0.25).M == pytest.approx(math.exp(0.5), rel=1e-6)

    def test_radius_beyond_series(self, lie, basis, make_cosine_series):
        F = make_cosine_series(basis, {(1,): 1.0}, rate=1.0, k_max=4, rho=0.5, sigma=0.5)
        with pytest.raises(RadiusError):
            lie.fourier_norm(F, rho=1.0)

    def test_frozen_norm_decays(self, lie, basis, make_cosine_series):
        F = make_cosine_series(basis, {(1,): 1.0}, rate=1.0, k_max=4, rho=0.5, sigma=0.5)
        assert lie.fourier_norm_at(F, 1.0) == pytest.approx(math.exp(0.5) * math.exp(-1.0))

    def test_relative_residual(self, lie, basis, make_cosine_series):
        F = make_cosine_series(basis, {(1,): 1.0}, rate=1.0, k_max=4, rho=0.5, sigma=0.5)
        assert lie.relative_residual(F.scale(1e-3), F, horizon=10.0) == pytest.approx(1e-3)
        assert lie.relative_residual(F - F, F, horizon=10.0) == 0.0


class TestLieSeries:
    """exp(L_chi) on series and coordinates."""

    def test_linear_generator_shifts_the_angle(self, lie, basis):
        eps = 1e-2
        chi = FourierTaylorSeries.from_coordinate(Coordinate.action(0), basis, 4, 0.5, 0.5).scale(eps)
        result = lie.lie_series_terms(chi, Coordinate.angle(0))
        assert result.orders_used == 2
        assert result.term_norms[-1] == 0.0
        assert result.displacement.evaluate([0.2], [0.0], 0.0).real == pytest.approx(eps)

    def test_shift_of_every_coordinate(self, lie, basis):
        eps = 1e-2
        chi = FourierTaylorSeries.from_coordinate(Coordinate.action(0), basis, 4, 0.5, 0.5).scale(eps)
        shift = lie.lie_series_shift(chi)
        assert shift.angle[0].evaluate([0.4], [1.0], 0.0).real == pytest.approx(eps)
        assert shift.action[0].evaluate([0.4], [1.0], 0.0) == 0

    def test_zero_generator(self, lie, basis, make_cosine_series):
        F = make_cosine_series(basis, {(1,): 1.0}, rate=1.0, k_max=4, rho=0.5, sigma=0.5)
        result = lie.lie_series_terms(FourierTaylorSeries.zero_like(F), F)
        assert result.orders_used == 0
        assert result.series() is F

    def test_divergence_is_reported(self, lie, basis):
        chi = harmonic(basis, 1, {(1,): 1.0}, 1.0)
        with pytest.raises(LieSeriesDivergenceError):
            lie.lie_series_terms(chi, Coordinate.angle(0), s_max=1)

    def test_transform_with_one_generator_is_a_lie_series(self, lie, basis):
        chi = harmonic(basis, 1, {(1,): 1e-2}, 1.0)
        F = harmonic(basis, 1, {(2,): 1.0}, 0.5)
        levels = lie.lie_transform_levels([chi], F, 2).levels
        series = lie.lie_series_terms(chi, F, s_max=50).terms
        point = ([0.4], [0.9], 0.3)
        for level, term in zip(levels, series[:2]):
            assert level.evaluate(*point) == pytest.approx(term.evaluate(*point), abs=1e-14)

    def test_transform_shift_of_the_time_conjugate(self, lie, basis, make_cosine_series):
        chi = make_cosine_series(basis, {(1,): 1e-2}, rate=1.0, k_max=4, rho=0.5, sigma=0.5)
        shift = lie.lie_transform_shift([chi], 3, chi)
        # {eta, chi} = -chi_t
        expected = 1e-2 * math.cos(0.5) * math.exp(-0.2)
        assert shift.eta.evaluate([0.5], [0.5], 0.2).real == pytest.approx(expected, rel=1e-6)
        assert np.isfinite(lie.majorant(shift.angle[0]))

    def test_series_and_transform_rotate_the_angle(self, lie, basis, make_cosine_series):
        eps = 1e-2
        chi = FourierTaylorSeries.from_coordinate(Coordinate.action(0), basis, 4, 0.5, 0.5).scale(eps)
        F = make_cosine_series(basis, {(1,): 1.0}, rate=1.0, k_max=4, rho=0.5, sigma=0.5)
        expected = math.cos(0.3 + eps) * math.exp(-0.2)
        # {F, eps I} = eps F_phi, so both flows shift phi by eps
        via_series = lie.lie_series_apply(chi, F).series()
        via_transform = lie.lie_transform_apply([chi], F, 8)
        assert via_series.evaluate([0.5], [0.3], 0.2).real == pytest.approx(expected, abs=1e-13)
        assert via_transform.evaluate([0.5], [0.3], 0.2).real == pytest.approx(expected, abs=1e-13)
