"""
Lie Algebra Service.
Poisson brackets, weighted Fourier norms, Lie series and Lie transforms on Fourier-Taylor series.
"""

import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Union

import numpy as np

from models.errors import LieSeriesDivergenceError, RadiusError
from models.series import (
    Coordinate,
    FourierTaylorSeries,
    MultiIndex,
    harmonic_order,
    shell_split,
)
from models.timefn import Envelope, TimeFn, add
from models.transform import CoordinateShift
from services.base_service import BaseService

Operand = Union[FourierTaylorSeries, Coordinate]


@dataclass
class LieSeriesResult:
    """Outcome of exp(L_chi) applied to a series or a coordinate."""

    base: Operand
    terms: List[FourierTaylorSeries]
    term_norms: List[float]
    tail_estimate: float

    @property
    def orders_used(self) -> int:
        return len(self.terms)

    @property
    def displacement(self) -> Optional[FourierTaylorSeries]:
        if not self.terms:
            return None
        total = self.terms[0]
        for term in self.terms[1:]:
            total = total + term
        return total

    def series(self, like: Optional[FourierTaylorSeries] = None) -> FourierTaylorSeries:
        """Base plus displacement; coordinates are lifted to series on the basis of `like`."""
        base = self.base
        if isinstance(base, Coordinate):
            template = like if like is not None else (self.terms[0] if self.terms else None)
            if template is None:
                raise ValueError("Cannot lift a coordinate without a template series")
            base = FourierTaylorSeries.from_coordinate(base, template.basis, template.k_max,
                                                       template.rho, template.sigma)
        shift = self.displacement
        return base if shift is None else base + shift


@dataclass
class LieTransformResult:
    """Levels E_s F, s = 1..S, of a Lie transform with generator sequence chi_1..chi_r."""

    base: Operand
    levels: List[Optional[FourierTaylorSeries]]
    level_norms: List[float] = field(default_factory=list)

    @property
    def displacement(self) -> Optional[FourierTaylorSeries]:
        total: Optional[FourierTaylorSeries] = None
        for level in self.levels:
            if level is None:
                continue
            total = level if total is None else total + level
        return total


class LieAlgebraService(BaseService):
    """
    Service for the Poisson algebra of Fourier-Taylor series.
    Everything here is exact in the time direction and truncated in harmonics and degree.
    """

    def _initialize(self) -> None:
        """Initialize Lie algebra service resources."""
        self._max_order = self.settings.LIE_SERIES_MAX_ORDER
        self._tol = self.settings.LIE_SERIES_TOL
        self.logger.info("LieAlgebraService initialized")

    # ==================== Poisson Bracket ====================

    def poisson_bracket(self, F: Operand, G: Operand) -> FourierTaylorSeries:
        """
        Extended Poisson bracket {F, G} = F_phi G_I - G_phi F_I + F_t G_eta - F_eta G_t.

        Args:
            F: Series or coordinate
            G: Series or coordinate (at least one of F, G must be a series)

        Returns:
            Bracket series with |k| <= k_max; dropped harmonics go to the ledger

        Raises:
            MetadataMismatchError: If the two series are incompatible
        """
        if isinstance(F, Coordinate) and isinstance(G, Coordinate):
            raise TypeError("Bracket of two coordinates is a constant, not a series")
        if isinstance(F, Coordinate):
            return self._coordinate_bracket(F, G)  # type: ignore[arg-type]
        if isinstance(G, Coordinate):
            return -self._coordinate_bracket(G, F)

        F.check_compatible(G)
        basis = F.basis
        n = F.n
        rho = min(F.rho, G.rho)
        sigma = min(F.sigma, G.sigma)
        k_max = F.k_max
        f_grad = {k: [basis.derivative(c, axis) for axis in range(n)] for k, c in F.items()}
        g_grad = {k: [basis.derivative(c, axis) for axis in range(n)] for k, c in G.items()}

        out: Dict[MultiIndex, TimeFn] = {}
        ledger = 0.0
        for k1, f in F.items():
            for k2, g in G.items():
                # f * sum_l (i k1_l) d_l g  -  g * sum_l (i k2_l) d_l f
                a_term = self._directional(g_grad[k2], k1)
                b_term = self._directional(f_grad[k1], k2)
                if a_term is None and b_term is None:
                    continue
                k = tuple(x + y for x, y in zip(k1, k2))
                order = harmonic_order(k)
                if order > k_max:
                    weight = math.exp(order * sigma)
                    for left, right in ((f, a_term), (g, b_term)):
                        if right is not None:
                            ledger += weight * basis.sup_majorant(left.sup_bound(), rho) * \
                                basis.sup_majorant(right.sup_bound(), rho)
                    continue
                total: Optional[TimeFn] = None
                for left, right, sign in ((f, a_term, 1.0), (g, b_term, -1.0)):
                    if right is None:
                        continue
                    prod, dropped = basis.product(left, right, rho)
                    ledger += math.exp(order * sigma) * dropped
                    prod = prod if sign > 0 else prod.scale(-1.0)
                    total = prod if total is None else add(total, prod)
                if total is not None and not total.is_zero():
                    out[k] = add(out[k], total) if k in out else total

        result = FourierTaylorSeries(basis, k_max, rho, sigma, out, 0.0, ledger + F.ledger + G.ledger)
        if G.eta:
            result = result + F.d_time().scale(G.eta)
        if F.eta:
            result = result - G.d_time().scale(F.eta)
        return result

    @staticmethod
    def _directional(grads: Sequence[TimeFn], k: MultiIndex) -> Optional[TimeFn]:
        total: Optional[TimeFn] = None
        for axis, kl in enumerate(k):
            if kl == 0 or grads[axis].is_zero():
                continue
            term = grads[axis].scale(1j * kl)
            total = term if total is None else add(total, term)
        return total

    @staticmethod
    def _coordinate_bracket(coord: Coordinate, G: FourierTaylorSeries) -> FourierTaylorSeries:
        if coord.kind == "action":
            return -G.d_phi(coord.index)
        if coord.kind == "angle":
            return G.d_action(coord.index)
        return -G.d_time()

    def lie_derivative(self, chi: FourierTaylorSeries, F: Operand) -> FourierTaylorSeries:
        """L_chi F = {F, chi}."""
        return self.poisson_bracket(F, chi)

    # ==================== Norms ====================

    def series_rate(self, F: FourierTaylorSeries) -> float:
        """Slowest natural decay rate over all coefficients."""
        rates = [c.natural_envelope().a for _, c in F.items()]
        return float(min(rates)) if rates else 0.0

    def fourier_norm(self, F: FourierTaylorSeries, rho: Optional[float] = None,
                     sigma: Optional[float] = None, rate: Optional[float] = None,
                     power: int = 0) -> Envelope:
        """
        Weighted norm sum_k e^{|k| sigma} sup_{G_rho} |c_k| as a time envelope.

        Args:
            F: Series to measure
            rho: Action radius (defaults to the series radius)
            sigma: Angle strip width (defaults to the series width)
            rate: Decay rate to certify (defaults to the slowest natural rate)
            power: Extra algebraic decay (t + 1)^(-power)

        Returns:
            Envelope (M, rate, power) with sup-norm at time t <= M e^{-rate t} (t+1)^{-power}

        Raises:
            RadiusError: If rho or sigma exceed the series radii
            EnvelopeError: If some coefficient decays slower than the requested rate
        """
        rho = F.rho if rho is None else float(rho)
        sigma = F.sigma if sigma is None else float(sigma)
        if rho > F.rho * (1 + 1e-12) + 1e-15 or sigma > F.sigma * (1 + 1e-12) + 1e-15:
            raise RadiusError(
                f"Norm radii ({rho}, {sigma}) exceed series radii ({F.rho}, {F.sigma})"
            )
        if rate is None:
            rate = self.series_rate(F)
        total = 0.0
        for k, c in F.items():
            amps = c.amplitudes(rate, power)
            total += math.exp(harmonic_order(k) * sigma) * F.basis.sup_majorant(amps, rho)
        return Envelope(total, float(rate), int(power))

    def fourier_norm_at(self, F: FourierTaylorSeries, t: float, rho: Optional[float] = None,
                        sigma: Optional[float] = None) -> float:
        """Weighted norm of the coefficients frozen at time t."""
        rho = F.rho if rho is None else float(rho)
        sigma = F.sigma if sigma is None else float(sigma)
        total = 0.0
        for k, c in F.items():
            values = np.abs(np.asarray(c.value(float(t))))
            total += math.exp(harmonic_order(k) * sigma) * F.basis.sup_majorant(values, rho)
        return total

    def majorant(self, F: FourierTaylorSeries) -> float:
        """Cheap time-uniform bound on the weighted norm at the series radii."""
        total = 0.0
        for k, c in F.items():
            total += math.exp(harmonic_order(k) * F.sigma) * F.basis.sup_majorant(c.sup_bound(), F.rho)
        return total

    def relative_residual(self, residual: FourierTaylorSeries, reference: FourierTaylorSeries,
                          horizon: float) -> float:
        """max_t ||residual(t)|| / max_t ||reference(t)|| on evenly spaced samples of [0, horizon]."""
        times = np.linspace(0.0, horizon, self.settings.HOMOLOGICAL_RESIDUAL_SAMPLES)
        ref = float(np.max(reference.sampled_norm(times))) if len(reference) else 0.0
        res = float(np.max(residual.sampled_norm(times))) if len(residual) else 0.0
        if ref == 0.0:
            return 0.0 if res == 0.0 else math.inf
        return res / ref

    # ==================== Lie Series ====================

    def lie_series_terms(self, chi: FourierTaylorSeries, F: Operand, s_max: Optional[int] = None,
                         tol: Optional[float] = None) -> LieSeriesResult:
        """
        Terms B_s = L_chi^s F / s! until ||B_s|| <= tol * ||B_1||.

        Raises:
            LieSeriesDivergenceError: If the tolerance is not met within s_max orders
        """
        s_max = self._max_order if s_max is None else s_max
        tol = self._tol if tol is None else tol
        terms: List[FourierTaylorSeries] = []
        norms: List[float] = []
        current: Operand = F
        if chi.is_zero():
            return LieSeriesResult(F, [], [], 0.0)
        for s in range(1, s_max + 1):
            current = self.poisson_bracket(current, chi).scale(1.0 / s)
            norm = self.majorant(current)
            terms.append(current)
            norms.append(norm)
            if norm == 0.0 or norm <= tol * norms[0]:
                break
        else:
            raise LieSeriesDivergenceError(f"Lie series did not converge within {s_max} orders", norms)
        tail = 0.0
        if len(norms) >= 2 and norms[-2] > 0:
            ratio = norms[-1] / norms[-2]
            tail = norms[-1] * ratio / (1.0 - ratio) if ratio < 1 else math.inf
        self.logger.debug(f"Lie series converged after {len(norms)} orders (tail {tail:.3e})")
        return LieSeriesResult(F, terms, norms, tail)

    def lie_series_apply(self, chi: FourierTaylorSeries, F: Operand, s_max: Optional[int] = None,
                         tol: Optional[float] = None) -> LieSeriesResult:
        """exp(L_chi) F = sum_s L_chi^s F / s!, with the terms and tail estimate recorded."""
        return self.lie_series_terms(chi, F, s_max, tol)

    def lie_series_shift(self, chi: FourierTaylorSeries, s_max: Optional[int] = None,
                         tol: Optional[float] = None) -> CoordinateShift:
        """Displacements exp(L_chi) x - x for every action, angle and eta."""
        template = FourierTaylorSeries.zero_like(chi)
        actions = []
        angles = []
        for axis in range(chi.n):
            for coord, bucket in ((Coordinate.action(axis), actions), (Coordinate.angle(axis), angles)):
                result = self.lie_series_terms(chi, coord, s_max, tol)
                shift = result.displacement
                bucket.append(shift if shift is not None else template)
        eta_shift = self.lie_series_terms(chi, Coordinate.eta(), s_max, tol).displacement
        return CoordinateShift(tuple(actions), tuple(angles), eta_shift)

    # ==================== Lie Transform ====================

    def lie_transform_levels(self, chi_seq: Sequence[Optional[FourierTaylorSeries]], F: Operand,
                             s_total: int) -> LieTransformResult:
        """
        E_0 F = F, E_s F = sum_{j=1}^{min(s, r)} (j / s) L_{chi_j} E_{s-j} F.

        Args:
            chi_seq: Generators chi_1..chi_r (None or zero entries are skipped)
            F: Series or coordinate
            s_total: Highest level computed

        Returns:
            LieTransformResult with levels E_1..E_{s_total}
        """
        r = len(chi_seq)
        levels: List[Optional[Operand]] = [F]
        norms: List[float] = []
        for s in range(1, s_total + 1):
            acc: Optional[FourierTaylorSeries] = None
            for j in range(1, min(s, r) + 1):
                chi = chi_seq[j - 1]
                prev = levels[s - j]
                if chi is None or chi.is_zero() or prev is None:
                    continue
                if isinstance(prev, FourierTaylorSeries) and prev.is_zero():
                    continue
                term = self.poisson_bracket(prev, chi).scale(j / s)
                acc = term if acc is None else acc + term
            levels.append(acc)
            norms.append(self.majorant(acc) if acc is not None else 0.0)
        return LieTransformResult(F, levels[1:], norms)  # type: ignore[arg-type]

    def lie_transform_apply(self, chi_seq: Sequence[Optional[FourierTaylorSeries]],
                            F: FourierTaylorSeries, s_total: int) -> FourierTaylorSeries:
        """T_chi F truncated after level s_total."""
        result = self.lie_transform_levels(chi_seq, F, s_total)
        shift = result.displacement
        return F if shift is None else F + shift

    def lie_transform_shift(self, chi_seq: Sequence[Optional[FourierTaylorSeries]],
                            s_total: int, template: FourierTaylorSeries) -> CoordinateShift:
        """Displacements T_chi x - x for every action, angle and eta."""
        zero = FourierTaylorSeries.zero_like(template)
        actions = []
        angles = []
        for axis in range(template.n):
            for coord, bucket in ((Coordinate.action(axis), actions), (Coordinate.angle(axis), angles)):
                shift = self.lie_transform_levels(chi_seq, coord, s_total).displacement
                bucket.append(shift if shift is not None else zero)
        eta_shift = self.lie_transform_levels(chi_seq, Coordinate.eta(), s_total).displacement
        return CoordinateShift(tuple(actions), tuple(angles), eta_shift)

    # ==================== Shells ====================

    def shell_split(self, F: FourierTaylorSeries, width: int) -> List[FourierTaylorSeries]:
        """Harmonic shells (m-1) width <= |k| < m width."""
        return shell_split(F, width)
