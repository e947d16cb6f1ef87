"""
Tests for Fourier-Taylor series and their coefficient bases.
"""

import math

import numpy as np
import pytest

from models.errors import DomainError, MetadataMismatchError
from models.series import (
    Coordinate,
    FourierTaylorSeries,
    GridBasis,
    TaylorBasis,
    harmonic_order,
    shell_split,
)
from models.timefn import ExpPoly


class TestTaylorBasis:
    """Monomials around the box center."""

    def test_monomial_order(self):
        basis = TaylorBasis([(0.0, 2.0), (0.0, 2.0)], 2)
        assert basis.monomials == [(0, 0), (1, 0), (0, 1), (2, 0), (1, 1), (0, 2)]
        assert basis.size == 6
        assert np.allclose(basis.center, [1.0, 1.0])

    def test_from_polynomial_recenters(self):
        basis = TaylorBasis([(0.0, 2.0)], 2)
        # I^2 = (1 + dI)^2
        assert np.allclose(basis.from_polynomial({(2,): 1.0}), [1.0, 2.0, 1.0])

    def test_from_polynomial_rejects_high_degree(self):
        basis = TaylorBasis([(0.0, 2.0)], 1)
        with pytest.raises(ValueError):
            basis.from_polynomial({(2,): 1.0})

    def test_product_reports_dropped_monomials(self):
        basis = TaylorBasis([(0.0, 2.0)], 1)
        delta = ExpPoly.constant(np.array([0.0, 1.0]))
        kept, dropped = basis.product(delta, delta, rho=0.5)
        assert np.allclose(kept.value(0.0), 0.0)
        # dI^2 on a radius 1 + 0.5 disc
        assert dropped == pytest.approx(2.25)

    def test_derivative(self):
        basis = TaylorBasis([(0.0, 2.0)], 2)
        f = ExpPoly.constant(basis.from_polynomial({(2,): 1.0}))
        df = basis.derivative(f, 0)
        assert np.allclose(df.value(0.0), [2.0, 2.0, 0.0])

    def test_coordinate_vector(self):
        basis = TaylorBasis([(1.0, 3.0)], 2)
        assert np.allclose(basis.coordinate(0), [2.0, 1.0, 0.0])

    def test_rejects_inverted_box(self):
        with pytest.raises(ValueError):
            TaylorBasis([(1.0, 0.0)], 2)


class TestGridBasis:
    """Chebyshev-Lobatto values over the box."""

    def test_nodes_cover_the_box(self):
        basis = GridBasis([(0.0, 2.0)], [5])
        assert basis.size == 5
        assert basis.points[:, 0].max() == pytest.approx(2.0)
        assert basis.points[:, 0].min() == pytest.approx(0.0)

    def test_derivative_is_exact_on_polynomials(self):
        basis = GridBasis([(0.0, 2.0)], [5])
        x = basis.points[:, 0]
        df = basis.derivative(ExpPoly.constant(x ** 2), 0)
        assert np.allclose(df.value(0.0), 2 * x, atol=1e-10)

    def test_interpolation_between_nodes(self):
        basis = GridBasis([(0.0, 2.0)], [5])
        x = basis.points[:, 0]
        assert float(np.dot(basis.weights([0.7]), x ** 2)) == pytest.approx(0.49)

    def test_mismatched_node_counts(self):
        with pytest.raises(ValueError):
            GridBasis([(0.0, 1.0), (0.0, 1.0)], [5])

    def test_sup_majorant_inflates_node_maximum(self):
        basis = GridBasis([(0.0, 1.0)], [3], inflation=1.5)
        assert basis.sup_majorant(np.array([1.0, 0.5, 0.0]), rho=0.1) == pytest.approx(1.5)

    def test_sup_majorant_of_constant_amplitudes(self):
        basis = GridBasis([(0.0, 1.0)], [3])
        assert basis.inflation == 2.0
        assert basis.sup_majorant(np.array([0.5, 0.5, 0.5]), rho=0.1) == pytest.approx(1.0)


class TestFourierTaylorSeries:
    """Sparse harmonics with time-dependent coefficients."""

    def test_rejects_harmonic_beyond_k_max(self, make_cosine_series):
        basis = TaylorBasis([(0.0, 1.0)], 2)
        with pytest.raises(ValueError):
            make_cosine_series(basis, {(3,): 1.0}, rate=1.0, k_max=2, rho=0.5, sigma=0.5)

    def test_rejects_wrong_coefficient_shape(self):
        basis = TaylorBasis([(0.0, 1.0)], 2)
        with pytest.raises(ValueError):
            FourierTaylorSeries(basis, 2, 0.5, 0.5, {(1,): ExpPoly.exponential(np.ones(2), 1.0)})

    def test_incompatible_series(self, make_cosine_series):
        a = make_cosine_series(TaylorBasis([(0.0, 1.0)], 2), {(1,): 1.0}, 1.0, 2, 0.5, 0.5)
        b = make_cosine_series(TaylorBasis([(0.0, 1.0)], 3), {(1,): 1.0}, 1.0, 2, 0.5, 0.5)
        with pytest.raises(MetadataMismatchError):
            a + b

    def test_angles_are_not_series(self):
        basis = TaylorBasis([(0.0, 1.0)], 2)
        with pytest.raises(DomainError):
            FourierTaylorSeries.from_coordinate(Coordinate.angle(0), basis, 2, 0.5, 0.5)

    def test_action_coordinate(self):
        basis = TaylorBasis([(0.0, 1.0)], 2)
        action = FourierTaylorSeries.from_coordinate(Coordinate.action(0), basis, 2, 0.5, 0.5)
        assert action.evaluate([0.3], [1.0], 0.0) == pytest.approx(0.3)

    def test_evaluate_cosine(self, make_cosine_series):
        basis = TaylorBasis([(0.0, 1.0)], 2)
        f = make_cosine_series(basis, {(1,): 2.0}, rate=0.5, k_max=2, rho=0.5, sigma=0.5)
        value = f.evaluate([0.4], [0.3], 1.0)
        assert value.real == pytest.approx(2.0 * math.cos(0.3) * math.exp(-0.5))
        assert value.imag == pytest.approx(0.0, abs=1e-14)

    def test_angle_derivative(self, make_cosine_series):
        basis = TaylorBasis([(0.0, 1.0)], 2)
        f = make_cosine_series(basis, {(1,): 1.0}, rate=1.0, k_max=2, rho=0.5, sigma=0.5)
        value = f.d_phi(0).evaluate([0.5], [0.3], 0.0)
        assert value.real == pytest.approx(-math.sin(0.3))

    def test_time_derivative(self, make_cosine_series):
        basis = TaylorBasis([(0.0, 1.0)], 2)
        f = make_cosine_series(basis, {(1,): 1.0}, rate=2.0, k_max=2, rho=0.5, sigma=0.5)
        value = f.d_time().evaluate([0.5], [0.0], 0.5)
        assert value.real == pytest.approx(-2.0 * math.exp(-1.0))

    def test_gradient_matches_evaluate(self, make_cosine_series):
        basis = GridBasis([(0.5, 1.5)], [5])
        f = make_cosine_series(basis, {(1,): 1.0, (2,): 0.5}, rate=1.0, k_max=3, rho=0.1, sigma=1.0)
        value, d_action, d_angle = f.evaluate_with_gradient([0.9], [0.4], 0.3)
        assert value == pytest.approx(f.evaluate([0.9], [0.4], 0.3).real)
        assert d_action[0] == pytest.approx(0.0, abs=1e-10)
        expected = -(math.sin(0.4) + math.sin(0.8)) * math.exp(-0.3)
        assert d_angle[0] == pytest.approx(expected)

    def test_real_series_has_no_reality_defect(self, make_cosine_series):
        basis = TaylorBasis([(0.0, 1.0)], 2)
        f = make_cosine_series(basis, {(1,): 1.0}, rate=1.0, k_max=2, rho=0.5, sigma=0.5)
        assert f.reality_defect() == 0.0
        skewed = FourierTaylorSeries(basis, 2, 0.5, 0.5,
                                     {(1,): ExpPoly.exponential(np.array([1.0, 0.0, 0.0]), 1.0)})
        assert skewed.reality_defect() > 0.5

    def test_truncation_and_pruning(self, make_cosine_series):
        basis = TaylorBasis([(0.0, 1.0)], 2)
        f = make_cosine_series(basis, {(1,): 1.0, (2,): 1e-16}, rate=1.0, k_max=2, rho=0.5, sigma=0.5)
        assert (2,) not in f.truncated(1)
        assert (2,) not in f.pruned(1e-12)
        assert (1,) in f.pruned(1e-12)

    def test_record_roundtrip(self, make_cosine_series):
        basis = GridBasis([(0.5, 1.5)], [5])
        f = make_cosine_series(basis, {(1,): 1.0, (3,): 0.2}, rate=0.5, k_max=4, rho=0.1, sigma=1.0)
        g = FourierTaylorSeries.from_record(f.to_record())
        assert g.harmonics() == f.harmonics()
        assert g.evaluate([1.1], [0.7], 2.0) == pytest.approx(f.evaluate([1.1], [0.7], 2.0))

    def test_taylor_to_grid(self):
        taylor = TaylorBasis([(0.0, 2.0)], 2)
        grid = GridBasis([(0.0, 2.0)], [5])
        coeffs = {(0,): ExpPoly.constant(taylor.from_polynomial({(2,): 1.0}))}
        f = FourierTaylorSeries(taylor, 1, 0.1, 0.5, coeffs)
        g = f.to_basis(grid)
        assert g.evaluate([0.7], [0.0], 0.0) == pytest.approx(0.49)


class TestShellSplit:
    """Harmonic shells partition a series."""

    def test_shells_partition_the_harmonics(self, make_cosine_series):
        basis = GridBasis([(0.5, 1.5)], [5])
        f = make_cosine_series(basis, {(1,): 1.0, (2,): 1.0, (3,): 1.0}, rate=0.5, k_max=4,
                               rho=0.1, sigma=1.0)
        shells = shell_split(f, 2)
        assert len(shells) == 3
        assert shells[0].harmonics() == [(-1,), (1,)]
        assert shells[1].harmonics() == [(-3,), (-2,), (2,), (3,)]
        assert shells[2].is_zero()
        for m, shell in enumerate(shells, start=1):
            assert all((m - 1) * 2 <= harmonic_order(k) < m * 2 for k in shell.harmonics())
        total = shells[0] + shells[1] + shells[2]
        assert total.evaluate([1.0], [0.4], 0.5) == pytest.approx(f.evaluate([1.0], [0.4], 0.5))

    def test_width_must_be_positive(self, make_cosine_series):
        basis = TaylorBasis([(0.0, 1.0)], 2)
        f = make_cosine_series(basis, {(1,): 1.0}, rate=1.0, k_max=2, rho=0.5, sigma=0.5)
        with pytest.raises(ValueError):
            shell_split(f, 0)
