"""
Birkhoff Service.
Strong normal form for isochronous integrable parts h(I) = omega . I: iterated
time-dependent homological solves and quadratic Lie-series steps, plus the
composed near-identity map.
"""

import math
from dataclasses import dataclass, field, replace
from typing import List, Optional, Sequence, Tuple

import numpy as np

from config.settings import Settings
from models.errors import EnvelopeError, LieSeriesDivergenceError, TailDivergenceError
from models.hamiltonian import ExtendedHamiltonian
from models.parameters import IsoScheduleParams
from models.reports import BirkhoffReport, BirkhoffStepRecord, EnvelopeRecord
from models.series import FourierTaylorSeries
from models.timefn import Envelope, ExpPoly, QuadFn, TimeFn, add, oscillatory_tail
from models.transform import NearIdentityMap, identity_map
from services.base_service import BaseService
from services.constants_service import ConstantsService
from services.lie_service import LieAlgebraService


@dataclass(frozen=True)
class BirkhoffState:
    """
    Snapshot of the isochronous scheme after j steps.

    Attributes:
        j: Iteration index
        hamiltonian: Original Hamiltonian (integrable part and declared envelope)
        perturbation: Current perturbation F^(j), already scaled by hat_epsilon
        chi_history: Generators chi^(0)..chi^(j-1)
        norm_history: Measured envelopes of F^(0)..F^(j)
        radii_history: (rho_i, sigma_i) for i = 0..j
        records: One audit record per completed step
        schedule: Step schedule of the iteration
    """

    j: int
    hamiltonian: ExtendedHamiltonian
    perturbation: FourierTaylorSeries
    chi_history: Tuple[FourierTaylorSeries, ...]
    norm_history: Tuple[Envelope, ...]
    radii_history: Tuple[Tuple[float, float], ...]
    schedule: IsoScheduleParams
    records: Tuple[BirkhoffStepRecord, ...] = field(default=())

    @property
    def omega(self) -> np.ndarray:
        return self.hamiltonian.constant_frequency()

    @property
    def measured_M(self) -> float:
        return self.norm_history[-1].M

    def hamiltonian_series(self) -> FourierTaylorSeries:
        """H^(j) = omega . I + eta + F^(j) as one series."""
        F = self.perturbation
        rho, sigma = self.radii_history[-1]
        return self.hamiltonian.integrable_series(F.basis, F.k_max, rho, sigma) + F

    def __repr__(self) -> str:
        return f"<BirkhoffState(j={self.j}, M={self.measured_M:.3e}, generators={len(self.chi_history)})>"


class BirkhoffService(BaseService):
    """
    Service driving the isochronous perturbation to zero.
    """

    def __init__(self, settings: Optional[Settings] = None,
                 lie: Optional[LieAlgebraService] = None,
                 constants: Optional[ConstantsService] = None):
        """
        Initialize Birkhoff service.

        Args:
            settings: Engine settings (optional)
            lie: Lie algebra service (optional, created if not provided)
            constants: Constants service (optional, created if not provided)
        """
        self._lie = lie
        self._constants = constants
        super().__init__(settings)

    def _initialize(self) -> None:
        """Initialize Birkhoff service resources."""
        if self._lie is None:
            self._lie = LieAlgebraService(self.settings)
        if self._constants is None:
            self._constants = ConstantsService(self.settings)
        self._initial_condition = self.settings.BIRKHOFF_INITIAL_CONDITION
        self._residual_tol = self.settings.HOMOLOGICAL_RESIDUAL_TOL
        self.logger.info("BirkhoffService initialized")

    @property
    def lie(self) -> LieAlgebraService:
        return self._lie  # type: ignore[return-value]

    @property
    def constants(self) -> ConstantsService:
        return self._constants  # type: ignore[return-value]

    # ==================== Homological Equation ====================

    def solve_homological_iso(self, F: FourierTaylorSeries, omega: Sequence[float],
                              initial_condition: Optional[str] = None) -> FourierTaylorSeries:
        """
        Solve chi_t + omega . chi_phi = F mode by mode.

        Mode k solves c' + i (omega . k) c = f_k. The "decaying" choice is the
        tail -int_t^inf e^{i lam (s - t)} f_k(s) ds; "zero" adds the free solution
        so that c(0) = 0.

        Args:
            F: Source series
            omega: Constant frequency vector
            initial_condition: "decaying" or "zero" (defaults to the configured choice)

        Returns:
            Generator chi on the same basis and radii as F

        Raises:
            TailDivergenceError: If some mode is not integrable (names the harmonic)
        """
        choice = initial_condition or self._initial_condition
        if choice not in ("decaying", "zero"):
            raise ValueError(f"Unknown initial condition '{choice}'")
        omega = np.asarray(omega, dtype=float)
        if omega.shape != (F.n,):
            raise ValueError(f"Frequency vector of length {omega.size} does not match n={F.n}")

        coeffs = {}
        for k, f in F.items():
            lam = float(np.dot(omega, k))
            try:
                c = oscillatory_tail(f, lam)
            except TailDivergenceError as e:
                self.logger.error(f"Homological equation not solvable for k={k}: {e}")
                raise TailDivergenceError(str(e), harmonic=k) from e
            if choice == "zero":
                c = self._zero_at_start(c, lam)
            coeffs[k] = c
        return FourierTaylorSeries(F.basis, F.k_max, F.rho, F.sigma, coeffs)

    @staticmethod
    def _zero_at_start(c: TimeFn, lam: float) -> TimeFn:
        start = np.asarray(c.value(0.0), dtype=complex)
        if not np.any(start):
            return c
        free = ExpPoly(-start[..., None], [0], [-1j * lam])
        return add(c, free)

    def homological_residual(self, chi: FourierTaylorSeries, F: FourierTaylorSeries,
                             omega: Sequence[float], horizon: float) -> float:
        """Relative residual of chi_t + omega . chi_phi - F on sampled times in [0, horizon]."""
        residual = chi.d_time() - F
        for axis, w in enumerate(np.asarray(omega, dtype=float)):
            if w != 0.0:
                residual = residual + chi.d_phi(axis).scale(w)
        return self.lie.relative_residual(residual, F, horizon)

    @staticmethod
    def min_divisor_ratio(F: FourierTaylorSeries, omega: Sequence[float]) -> Optional[float]:
        """
        Smallest |mu + i omega.k| / |Re mu| over the exp-polynomial terms of F.

        The closed-form tail divides by mu + i lambda; a ratio below one would
        mean a divisor smaller than the decay rate.
        """
        omega = np.asarray(omega, dtype=float)
        worst: Optional[float] = None
        for k, f in F.items():
            if not isinstance(f, ExpPoly) or f.num_terms == 0:
                continue
            lead = tuple(range(f.coeffs.ndim - 1))
            active = np.any(np.abs(f.coeffs) > 0, axis=lead) if lead else np.abs(f.coeffs) > 0
            mu = f.exponents[active]
            mu = mu[np.abs(mu.real) > 0]
            if mu.size == 0:
                continue
            ratio = float(np.min(np.abs(mu + 1j * np.dot(omega, k)) / np.abs(mu.real)))
            worst = ratio if worst is None else min(worst, ratio)
        return worst

    # ==================== Iteration ====================

    def initial_state(self, H: ExtendedHamiltonian, j_report: Optional[int] = None) -> BirkhoffState:
        """
        State at j = 0 with its step schedule.

        Raises:
            ValueError: If the integrable part is not isochronous
        """
        if not H.is_isochronous:
            raise ValueError("The Birkhoff scheme needs an integrable part linear in the actions")
        F0 = H.scaled_perturbation
        omega = H.constant_frequency()
        c_omega = 1.0 + float(np.max(np.abs(omega))) if omega.size else 1.0
        bumps = H.bump_data or {}
        schedule = self.constants.iso_schedule(
            n=H.n, a=H.decay_rate, rho0=F0.rho, sigma0=F0.sigma, c_omega=c_omega,
            epsilon=H.epsilon, time_class=H.time_class,
            bump_centers=bumps.get("centers"), bump_amplitudes=bumps.get("amplitudes"),
            bump_width=bumps.get("width"), j_report=j_report,
        )
        return BirkhoffState(
            j=0, hamiltonian=H, perturbation=F0, chi_history=(),
            norm_history=(self._measure(F0),), radii_history=((F0.rho, F0.sigma),),
            schedule=schedule,
        )

    def _measure(self, F: FourierTaylorSeries) -> Envelope:
        if F.is_zero():
            return Envelope(0.0, 0.0, 0)
        return self.lie.fourier_norm(F)

    def _horizon(self, H: ExtendedHamiltonian) -> float:
        return 20.0 / H.decay_rate if H.decay_rate > 0 else 40.0

    def birkhoff_step(self, state: BirkhoffState, tol: Optional[float] = None) -> BirkhoffState:
        """
        One step F^(j) -> F^(j+1) = sum_{s>=1} s/(s+1) L_chi^s F / s!.

        Args:
            state: Current state
            tol: Relative tolerance of the Lie series (defaults to LIE_SERIES_TOL)

        Returns:
            New state with chi^(j), F^(j+1), shrunk radii and the step record appended

        Raises:
            LieSeriesDivergenceError: If the Lie series does not converge (carries theta_j)
            TailDivergenceError: If a mode of F^(j) is not integrable
        """
        F = state.perturbation
        j = state.j
        if F.is_zero():
            return replace(state, j=j + 1)

        H = state.hamiltonian
        schedule = state.schedule
        omega = state.omega
        rho, sigma = state.radii_history[-1]
        d = schedule.step_fraction(j)
        theta = schedule.theta_seq[j] if j < len(schedule.theta_seq) else None
        rate = self.lie.series_rate(F)
        M = state.norm_history[-1].M

        chi = self.solve_homological_iso(F, omega)
        try:
            lie = self.lie.lie_series_apply(chi, F, tol=tol)
        except LieSeriesDivergenceError as e:
            self.logger.error(f"Lie series diverged at step j={j}")
            raise LieSeriesDivergenceError(f"Birkhoff step j={j} diverged", e.history, theta) from e

        F_new: Optional[FourierTaylorSeries] = None
        for s, term in enumerate(lie.terms, start=1):
            piece = term.scale(s / (s + 1))
            F_new = piece if F_new is None else F_new + piece
        shrink = 1.0 - 3.0 * d
        if F_new is None:
            F_new = FourierTaylorSeries.zero_like(F)
        F_new = F_new.pruned().with_radii(rho * shrink, sigma * shrink)

        record = self._audit_step(state, chi, F, rate, M, d, theta, lie.orders_used, F_new.ledger)
        self.logger.info(
            f"Birkhoff step j={j}: M={M:.3e} -> {self.lie.majorant(F_new):.3e}, rate={rate:.4g}, "
            f"lie orders={lie.orders_used}"
        )
        return BirkhoffState(
            j=j + 1, hamiltonian=H, perturbation=F_new,
            chi_history=state.chi_history + (chi,),
            norm_history=state.norm_history + (self._measure(F_new),),
            radii_history=state.radii_history + ((rho * shrink, sigma * shrink),),
            schedule=schedule, records=state.records + (record,),
        )

    def _audit_step(self, state: BirkhoffState, chi: FourierTaylorSeries, F: FourierTaylorSeries,
                    rate: float, M: float, d: float, theta: Optional[float], orders: int,
                    ledger: float) -> BirkhoffStepRecord:
        H = state.hamiltonian
        schedule = state.schedule
        rho, sigma = state.radii_history[-1]
        bumps = H.bump_data or {}
        bound = self.constants.variant_homological_bounds(
            H.time_class, M, H.n, schedule.c_omega, delta=d, sigma_hat=sigma,
            a=rate if rate > 0 else None, bump_width=bumps.get("width"),
            bump_amplitudes=bumps.get("amplitudes"),
        )
        inner_rho, inner_sigma = (1.0 - d) * rho, (1.0 - d) * sigma
        chi_M = self._certified(chi, inner_rho, inner_sigma, bound.rate, bound.power)
        chi_t_M = self._certified(chi.d_time(), inner_rho, inner_sigma, bound.rate, bound.power)

        tol = self._residual_tol
        if any(isinstance(c, QuadFn) for _, c in chi.items()):
            tol = 100.0 * self.settings.QUAD_TOL
        residual = self.homological_residual(chi, F, state.omega, self._horizon(H))
        theta_ok = None
        if schedule.in_regime and theta is not None:
            theta_ok = theta <= 2 * d and theta <= 0.5
        return BirkhoffStepRecord(
            j=state.j, measured_M=M, achieved_rate=rate,
            scheduled_eps=schedule.eps_seq[state.j] if state.j < len(schedule.eps_seq) else None,
            rho=rho, sigma=sigma, d=d, theta=theta, theta_ok=theta_ok,
            chi_M=chi_M, chi_bound=bound.chi, chi_ok=chi_M <= bound.chi * (1 + 1e-9),
            chi_t_M=chi_t_M, chi_t_bound=bound.chi_t, chi_t_ok=chi_t_M <= bound.chi_t * (1 + 1e-9),
            residual=residual, residual_ok=residual <= tol,
            min_divisor_ratio=self.min_divisor_ratio(F, state.omega),
            ledger=ledger, lie_orders=orders,
        )

    def _certified(self, series: FourierTaylorSeries, rho: float, sigma: float,
                   rate: float, power: int) -> float:
        if series.is_zero():
            return 0.0
        try:
            return self.lie.fourier_norm(series, rho, sigma, rate=rate, power=power).M
        except EnvelopeError as e:
            self.logger.warning(f"Could not certify generator envelope at rate {rate}: {e}")
            return math.inf

    def run_birkhoff(self, H: ExtendedHamiltonian, j_max: int, stop_tol: float,
                     tol: Optional[float] = None) -> Tuple[BirkhoffState, NearIdentityMap]:
        """
        Iterate birkhoff_step until the measured M_j <= stop_tol or j = j_max.

        Args:
            H: Isochronous Hamiltonian
            j_max: Maximal number of steps
            stop_tol: Stopping threshold on the measured norm
            tol: Lie-series tolerance

        Returns:
            Tuple of (final state, composed near-identity map from new to old coordinates)
        """
        if j_max < 0:
            raise ValueError(f"j_max must be non-negative, got {j_max}")
        state = self.initial_state(H, j_report=max(j_max, 1))
        F0 = state.perturbation
        box, margin = F0.basis.box, F0.rho / 2.0
        if H.epsilon == 0 or F0.is_zero():
            self.logger.info("Zero perturbation: identity map")
            return state, identity_map(box, margin)

        while state.measured_M > stop_tol and state.j < j_max:
            try:
                state = self.birkhoff_step(state, tol)
            except Exception as e:
                self.logger.error(f"Birkhoff run aborted at j={state.j}: {e}")
                raise
            if state.perturbation.is_zero():
                break

        self.logger.info(
            f"Birkhoff run finished after {state.j} steps, M={state.measured_M:.3e} "
            f"(stop_tol={stop_tol:.1e})"
        )
        return state, self.compose_map(state, box, margin)

    def compose_map(self, state: BirkhoffState, box, margin: float) -> NearIdentityMap:
        """Forward map exp(L_chi0) ... exp(L_chi_{J-1}) as coordinate stages, with its exact inverse."""
        chis = [chi for chi in state.chi_history if not chi.is_zero()]
        if not chis:
            return identity_map(box, margin)
        forward = tuple(self.lie.lie_series_shift(chi) for chi in reversed(chis))
        inverse = tuple(self.lie.lie_series_shift(-chi) for chi in chis)
        return NearIdentityMap(forward, "lie_series", "forward", box, margin, inverse,
                               self.settings.INVERSE_MAP_ITERATIONS)

    # ==================== Map Evaluation ====================

    @staticmethod
    def map_point(near_identity: NearIdentityMap, point: Sequence) -> Tuple[np.ndarray, np.ndarray, float]:
        """
        Evaluate the composed map at (I, phi, eta, t).

        Raises:
            DomainError: If the point lies outside the validity domain
        """
        action, angle, eta, t = point
        return near_identity.map_extended(action, angle, eta, t)

    def sample_points(self, box, n: int, count: int = 3) -> List[Tuple[np.ndarray, np.ndarray]]:
        """A few deterministic test points inside the box."""
        rng = np.random.default_rng(0)
        lo = np.array([b[0] for b in box])
        hi = np.array([b[1] for b in box])
        points = [((lo + hi) / 2.0, np.zeros(n))]
        for _ in range(count - 1):
            points.append((lo + (hi - lo) * rng.uniform(0.2, 0.8, n), rng.uniform(0, 2 * np.pi, n)))
        return points

    def map_displacement(self, near_identity: NearIdentityMap, box, n: int,
                         times: Sequence[float]) -> List[Tuple[float, float]]:
        """Largest |map(x) - x| over the sample points at each time."""
        out = []
        for t in times:
            worst = 0.0
            for action, angle in self.sample_points(box, n):
                d_a, d_p = near_identity.displacement(action, angle, t)
                worst = max(worst, float(np.linalg.norm(np.concatenate([d_a, d_p]), ord=np.inf)))
            out.append((float(t), worst))
        return out

    # ==================== Report ====================

    def cauchy_audit(self, state: BirkhoffState) -> Tuple[Optional[float], Optional[float]]:
        """
        First-order coordinate shift against n (e d_0 min(rho_0, sigma_0))^(-1) ||chi^(0)||.

        Returns:
            Tuple of (measured shift, bound), or (None, None) before the first step
        """
        if not state.chi_history or state.chi_history[0].is_zero():
            return None, None
        chi = state.chi_history[0]
        rho0, sigma0 = state.radii_history[0]
        d0 = state.schedule.step_fraction(0)
        shift = self.lie.lie_series_shift(chi)
        measured = 0.0
        for series in shift.action + shift.angle:
            if series.is_zero():
                continue
            measured = max(measured, self.lie.fourier_norm(
                series, (1 - d0) * rho0, (1 - d0) * sigma0, rate=0.0).M)
        bound = state.hamiltonian.n * self.lie.majorant(chi) / (math.e * d0 * min(rho0, sigma0))
        return measured, bound

    def build_report(self, state: BirkhoffState, near_identity: NearIdentityMap,
                     stop_tol: float) -> BirkhoffReport:
        """Per-step table plus the run-level audits."""
        H = state.hamiltonian
        schedule = state.schedule
        schedule_dominates = None
        if schedule.in_regime:
            schedule_dominates = all(
                env.M <= schedule.eps_seq[j] * (1 + 1e-9)
                for j, env in enumerate(state.norm_history) if j < len(schedule.eps_seq)
            )
        a = H.decay_rate
        times = [0.0, 5.0 / a, 20.0 / a] if a > 0 else [0.0, 5.0, 20.0]
        displacement: List[Tuple[float, float]] = []
        map_ok = None
        if not near_identity.is_identity:
            displacement = self.map_displacement(near_identity, near_identity.box, H.n, times)
            if H.time_class == "exponential" and a > 0:
                start = displacement[0][1]
                map_ok = all(value <= 3.0 * start * math.exp(-a * t) + 1e-15 for t, value in displacement)
        cauchy_shift, cauchy_bound = self.cauchy_audit(state)
        ledger = sum(r.ledger for r in state.records)
        return BirkhoffReport(
            steps=list(state.records),
            norms=[EnvelopeRecord.from_envelope(env) for env in state.norm_history],
            converged=state.measured_M <= stop_tol,
            iterations=state.j,
            stop_tol=stop_tol,
            in_regime=schedule.in_regime,
            outside_proven_regime=not schedule.in_regime,
            schedule_dominates=schedule_dominates,
            initial_condition=self._initial_condition,
            cauchy_shift=cauchy_shift,
            cauchy_bound=cauchy_bound,
            map_displacement=displacement,
            map_bound_ok=map_ok,
            ledger_total=ledger,
        )
