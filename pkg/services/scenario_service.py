"""
Scenario Service.
Turns a validated scenario into a Hamiltonian and runs the pipeline
constants -> normalization -> dynamics, writing every report into a run directory.
"""

import time
from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from config.settings import Settings
from models.errors import (
    DomainError,
    EnvelopeError,
    NormalFormError,
    RegimeFlagError,
    ScenarioValidationError,
)
from models.hamiltonian import ExtendedHamiltonian
from models.reports import (
    BirkhoffReport,
    DriftReport,
    NekhoroshevReport,
    NormalFormCheck,
    ScenarioRunSummary,
    ScheduleReport,
)
from models.scenario import (
    BumpsClass,
    ExponentialClass,
    QuadraticClass,
    Scenario,
    builtin_path,
    load_scenario,
)
from models.series import CoeffBasis, FourierTaylorSeries, GridBasis, TaylorBasis
from models.timefn import Envelope, ExpPoly, PiecewisePoly, RationalDecay, TimeFn
from models.transform import NearIdentityMap
from services.base_service import BaseService
from services.birkhoff_service import BirkhoffService
from services.constants_service import ConstantsService
from services.dynamics_service import DynamicsService
from services.lie_service import LieAlgebraService
from services.nekhoroshev_service import NekhoroshevService
from utils.export import provenance_table, write_json, write_rows, write_table

MODES = ("constants", "normalize", "verify", "sweep")
EXIT_OK, EXIT_HARD_FAILURE, EXIT_VALIDATION = 0, 1, 2

SEQUENCE_COLUMNS = ["sequence", "index", "value", "provenance"]
PROVENANCE_COLUMNS = ["section", "index", "quantity", "value", "provenance"]


@dataclass
class NormalizationOutcome:
    """Normalization report and the map it produced."""

    mode: str
    near_identity: NearIdentityMap
    birkhoff: Optional[BirkhoffReport] = None
    nekhoroshev: Optional[NekhoroshevReport] = None
    displacement_bound: Optional[float] = None
    a_last: Optional[float] = None

    def hard_failures(self) -> List[str]:
        report = self.birkhoff or self.nekhoroshev
        return report.hard_failures() if report is not None else []


@dataclass
class VerificationOutcome:
    drifts: List[DriftReport] = field(default_factory=list)
    checks: List[Optional[NormalFormCheck]] = field(default_factory=list)
    trajectories: List[pd.DataFrame] = field(default_factory=list)
    domain_exits: int = 0


class ScenarioService(BaseService):
    """
    Service running one scenario end to end.
    """

    def __init__(self, settings: Optional[Settings] = None,
                 lie: Optional[LieAlgebraService] = None):
        """
        Initialize scenario service.

        Args:
            settings: Engine settings (optional)
            lie: Lie algebra service shared by the normal-form services (optional)
        """
        self._lie = lie
        super().__init__(settings)

    def _initialize(self) -> None:
        """Initialize scenario service resources."""
        if self._lie is None:
            self._lie = LieAlgebraService(self.settings)
        self._constants = ConstantsService(self.settings)
        self._birkhoff = BirkhoffService(self.settings, self._lie, self._constants)
        self._nekhoroshev = NekhoroshevService(self.settings, self._lie)
        self._dynamics = DynamicsService(self.settings)
        self.logger.info("ScenarioService initialized")

    @property
    def constants(self) -> ConstantsService:
        return self._constants

    @property
    def dynamics(self) -> DynamicsService:
        return self._dynamics

    # ==================== Hamiltonian ====================

    @staticmethod
    def coefficient_basis(scenario: Scenario) -> CoeffBasis:
        algo = scenario.algorithm
        box = scenario.system.box
        if algo.backend == "grid":
            return GridBasis(box, algo.nodes)
        return TaylorBasis(box, algo.degree)

    @staticmethod
    def grid_basis(scenario: Scenario) -> Optional[GridBasis]:
        nodes = scenario.algorithm.nodes
        return GridBasis(scenario.system.box, nodes) if nodes is not None else None

    @staticmethod
    def time_factor(time_class: Union[ExponentialClass, QuadraticClass, BumpsClass]) -> TimeFn:
        """Scalar time profile of the perturbation."""
        if isinstance(time_class, ExponentialClass):
            return ExpPoly.exponential(1.0, time_class.a)
        if isinstance(time_class, QuadraticClass):
            return RationalDecay([1.0], [2])
        ConstantsService.check_bump_spacing(time_class.centers, time_class.width)
        return PiecewisePoly.bumps(time_class.centers, time_class.amplitudes, time_class.width)

    @staticmethod
    def envelope_shape(time_class: Union[ExponentialClass, QuadraticClass, BumpsClass]) -> Tuple[float, int]:
        """(rate, power) of the declared envelope."""
        if isinstance(time_class, ExponentialClass):
            return time_class.a, 0
        if isinstance(time_class, QuadraticClass):
            return 0.0, 2
        return 0.0, 0

    def _field_values(self, basis: CoeffBasis, terms: Dict[Tuple[int, ...], float]) -> np.ndarray:
        if isinstance(basis, TaylorBasis):
            return basis.from_polynomial(terms)
        return np.array([
            sum(c * np.prod(p ** np.asarray(m)) for m, c in terms.items()) for p in basis.points
        ], dtype=complex)

    def build_perturbation(self, scenario: Scenario, basis: CoeffBasis) -> FourierTaylorSeries:
        """
        Assemble sum_harmonics amplitude P(I) cos(k . phi) g(t) in complex form.

        Raises:
            ScenarioValidationError: If a polynomial exceeds the Taylor degree or the bumps overlap
        """
        system, pert = scenario.system, scenario.perturbation
        n = system.n
        zero = (0,) * n
        vectors: Dict[Tuple[int, ...], np.ndarray] = {}

        def accumulate(k: Tuple[int, ...], vec: np.ndarray) -> None:
            vectors[k] = vectors.get(k, np.zeros(basis.size, dtype=complex)) + vec

        for i, harmonic in enumerate(pert.harmonics):
            terms: Dict[Tuple[int, ...], float] = {}
            for term in harmonic.polynomial or []:
                key = tuple(term.monomial)
                terms[key] = terms.get(key, 0.0) + term.coeff
            if harmonic.polynomial is None:
                terms = {zero: 1.0}
            try:
                vec = harmonic.amplitude * self._field_values(basis, terms)
            except ValueError as e:
                raise ScenarioValidationError(
                    str(e), field=f"perturbation.harmonics.{i}.polynomial"
                ) from e
            k = tuple(harmonic.k)
            minus = tuple(-x for x in k)
            if k == zero:
                if harmonic.phase == "cos":
                    accumulate(zero, vec)
            elif harmonic.phase == "cos":
                accumulate(k, vec / 2)
                accumulate(minus, vec / 2)
            else:
                accumulate(k, vec / 2j)
                accumulate(minus, -vec / 2j)

        try:
            profile = self.time_factor(pert.time_class)
        except (DomainError, ValueError) as e:
            raise ScenarioValidationError(str(e), field="perturbation.time_class") from e
        coeffs = {k: profile.scale(vec) for k, vec in sorted(vectors.items()) if np.any(vec != 0)}
        return FourierTaylorSeries(basis, scenario.algorithm.k_max, system.rho_H, system.sigma_H, coeffs)

    def build_hamiltonian(self, scenario: Scenario) -> ExtendedHamiltonian:
        """
        Hamiltonian of a scenario with its certified envelope.

        M_f defaults to the measured Fourier norm; a declared M_f must dominate it.

        Raises:
            ScenarioValidationError: If the perturbation violates its declared envelope
        """
        basis = self.coefficient_basis(scenario)
        f = self.build_perturbation(scenario, basis)
        tc = scenario.perturbation.time_class
        rate, power = self.envelope_shape(tc)
        try:
            measured = self._lie.fourier_norm(f, rate=rate, power=power)
        except EnvelopeError as e:
            raise ScenarioValidationError(
                f"Perturbation does not decay as declared: {e}", field="perturbation.time_class"
            ) from e
        M_f = measured.M if tc.M_f is None else tc.M_f
        if M_f < measured.M * (1 - 1e-9):
            raise ScenarioValidationError(
                f"Declared M_f={M_f:.6e} is below the measured envelope {measured.M:.6e}",
                field="perturbation.time_class.M_f",
            )
        bump_data = None
        if isinstance(tc, BumpsClass):
            bump_data = {"centers": list(tc.centers), "amplitudes": list(tc.amplitudes), "width": tc.width}
        H = ExtendedHamiltonian(
            h_terms=scenario.system.h_terms, perturbation=f,
            hat_epsilon=scenario.perturbation.hat_epsilon,
            envelope=Envelope(M_f, rate, power), time_class=tc.kind, bump_data=bump_data,
        )
        self.logger.info(f"Built {H!r} with {len(f)} harmonics")
        return H

    def c_omega(self, H: ExtendedHamiltonian) -> float:
        """1 + sup |omega(I)| over the corners and center of the box."""
        box = np.array(H.perturbation.basis.box)
        corners = np.array(np.meshgrid(*box, indexing="ij")).reshape(H.n, -1).T
        points = np.vstack([corners, box.mean(axis=1)])
        return 1.0 + float(np.max(np.abs(H.frequencies_at(points))))

    # ==================== Constants ====================

    def schedule_report(self, scenario: Scenario, H: ExtendedHamiltonian) -> ScheduleReport:
        """Every constant of the scheme selected by the scenario."""
        system, algo = scenario.system, scenario.algorithm
        n, eps = system.n, H.epsilon
        if algo.mode == "birkhoff":
            bumps = H.bump_data or {}
            c_omega = self.c_omega(H)
            iso = self._constants.iso_schedule(
                n, H.decay_rate, system.rho_H, system.sigma_H, c_omega, eps,
                time_class=H.time_class, bump_centers=bumps.get("centers"),
                bump_amplitudes=bumps.get("amplitudes"), bump_width=bumps.get("width"),
                j_report=max(algo.j_max, 1),
            )
            K = self._constants.iso_variant_constants(
                H.time_class, n, system.rho_H, system.sigma_H, c_omega,
                bump_centers=bumps.get("centers"), bump_amplitudes=bumps.get("amplitudes"),
                bump_width=bumps.get("width"),
            )
            bounds = None
            if eps > 0 and iso.d_seq[0] > 0:
                bounds = self._constants.variant_homological_bounds(
                    H.time_class, eps, n, c_omega, delta=iso.d_seq[0], sigma_hat=iso.sigma_seq[0],
                    a=H.decay_rate if H.decay_rate > 0 else None, bump_width=bumps.get("width"),
                    bump_amplitudes=bumps.get("amplitudes"),
                )
            return ScheduleReport(iso=iso, variant_K=K, variant_bounds=bounds)

        C_h = system.C_h if system.C_h is not None else H.hessian_constant(system.box, system.rho_H)
        nekho = self._constants.nekho_params(
            n, H.decay_rate, system.rho_H, system.sigma_H, C_h, algo.d, eps, r_override=algo.r,
        )
        kappa_gamma = self._constants.kappa_gamma(1.0, nekho.Gamma, nekho.tau, 1.0, 1.0)
        beta_theta = self._constants.beta_theta(nekho.h, nekho.Gamma, nekho.r)
        stability = None
        try:
            stability = self._constants.stability_bound(nekho)
        except RegimeFlagError as e:
            self.logger.warning(f"No stability bound: {e}")
        return ScheduleReport(
            nekho=nekho, kappa_gamma=kappa_gamma, beta_theta=beta_theta, stability=stability,
            transform=self._constants.transform_bound(nekho),
            remainder=self._constants.remainder_series(nekho),
        )

    @staticmethod
    def schedule_sequences(report: ScheduleReport) -> List[Dict[str, Any]]:
        """Long-format rows of every sequence in a ScheduleReport."""
        rows: List[Dict[str, Any]] = []

        def add(name: str, values: Sequence[float], provenance: str, start: int = 0) -> None:
            rows.extend({"sequence": name, "index": i, "value": float(v), "provenance": provenance}
                        for i, v in enumerate(values, start=start))

        if report.iso is not None:
            iso = report.iso
            add("eps", iso.eps_seq, "schedule")
            add("d", iso.d_seq, "schedule")
            add("rho", iso.rho_seq, "schedule")
            add("sigma", iso.sigma_seq, "schedule")
            add("theta", iso.theta_seq, "schedule")
            add("decay_ladder", iso.decay_ladder, "schedule")
        if report.nekho is not None:
            add("a_ladder", report.nekho.a_ladder, "schedule")
        if report.kappa_gamma is not None:
            add("kappa", report.kappa_gamma.kappa, "theoretical", 1)
            add("kappa_closed", report.kappa_gamma.kappa_closed, "theoretical", 1)
            add("gamma", report.kappa_gamma.gamma, "theoretical")
            add("gamma_closed", report.kappa_gamma.gamma_closed, "theoretical")
        if report.beta_theta is not None:
            add("beta", report.beta_theta.beta, "theoretical", 1)
            add("beta_bound", report.beta_theta.beta_bound, "theoretical", 1)
            add("theta_level", report.beta_theta.theta, "theoretical")
            add("y", report.beta_theta.y, "theoretical", 1)
        if report.transform is not None:
            add("u", report.transform.u, "theoretical", 1)
            add("u_bound", report.transform.u_bound, "theoretical", 1)
        if report.remainder is not None:
            add("remainder_terms", report.remainder.terms, "theoretical", report.nekho.r + 1 if report.nekho else 1)
        return rows

    # ==================== Normalization ====================

    def normalize(self, scenario: Scenario, H: ExtendedHamiltonian,
                  schedule: ScheduleReport) -> NormalizationOutcome:
        """
        Run the normal form selected by the scenario.

        Raises:
            ScenarioValidationError: If the truncation cannot represent the requested shells
        """
        algo = scenario.algorithm
        if algo.mode == "birkhoff":
            state, near_identity = self._birkhoff.run_birkhoff(H, algo.j_max, algo.stop_tol, algo.lie_tol)
            report = self._birkhoff.build_report(state, near_identity, algo.stop_tol)
            bound = scenario.system.rho_H / 6.0 if schedule.iso is not None and schedule.iso.in_regime else None
            return NormalizationOutcome("birkhoff", near_identity, birkhoff=report, displacement_bound=bound)

        nekho = schedule.nekho
        N = algo.N or nekho.N
        r = algo.r or nekho.r
        try:
            shells = self._nekhoroshev.build_shells(
                H, N, r, algo.d, grid=self.grid_basis(scenario), rho=nekho.rho,
            )
        except DomainError as e:
            raise ScenarioValidationError(str(e), field="algorithm.k_max") from e
        result = self._nekhoroshev.normalize_order_r(shells, algo.s_total)
        report = self._nekhoroshev.build_report(
            result, flags=nekho.flags, check_conservation=scenario.verification.check_conservation,
        )
        bound = schedule.transform.displacement_bound if nekho.flags_ok and schedule.transform else None
        return NormalizationOutcome(
            "nekhoroshev", self._nekhoroshev.transform_map(result), nekhoroshev=report,
            displacement_bound=bound, a_last=result.a_ladder[result.r],
        )

    # ==================== Verification ====================

    def horizon(self, scenario: Scenario, H: ExtendedHamiltonian,
                a_last: Optional[float] = None) -> float:
        """Integration horizon: the scenario's, or long enough for the drift to saturate."""
        if scenario.verification.horizon is not None:
            return scenario.verification.horizon
        T = self._dynamics.required_horizon(H.decay_rate, a_last)
        if H.bump_data:
            T = max(T, max(H.bump_data["centers"]) + 2.0 * H.bump_data["width"])
        return T

    def verify(self, scenario: Scenario, H: ExtendedHamiltonian, schedule: ScheduleReport,
               outcome: Optional[NormalizationOutcome]) -> VerificationOutcome:
        """Integrate every initial condition and compare with the bounds."""
        ver = scenario.verification
        a_last = outcome.a_last if outcome is not None else None
        T = self.horizon(scenario, H, a_last)
        required = self._dynamics.required_horizon(H.decay_rate, a_last) if H.decay_rate > 0 else None
        if ver.initial_conditions:
            starts = [(np.array(ic.action), np.array(ic.angle)) for ic in ver.initial_conditions]
        else:
            starts = self._dynamics.initial_conditions(scenario.system.box, ver.count)
        rate = H.decay_rate if H.time_class == "exponential" else None

        result = VerificationOutcome()
        for index, (action0, angle0) in enumerate(starts):
            traj = self._dynamics.integrate(H, action0, angle0, T, ver.rtol, ver.atol, samples=ver.samples)
            result.trajectories.append(traj.to_frame().assign(ic=index))
            result.drifts.append(self._dynamics.measure_drift(traj, schedule.stability, required))
            check = None
            if outcome is not None:
                try:
                    check = self._dynamics.verify_normal_form(
                        outcome.near_identity, traj, rate, outcome.displacement_bound,
                    )
                except DomainError:
                    result.domain_exits += 1
            result.checks.append(check)
        self.logger.info(f"Verified {len(starts)} trajectories up to T={T:.4g}")
        return result

    # ==================== Sweeps ====================

    def sweep(self, scenario: Scenario, H: ExtendedHamiltonian, param: str,
              values: Sequence[float]) -> pd.DataFrame:
        """Threshold tables over a grid of epsilon or decay rates."""
        system, algo = scenario.system, scenario.algorithm
        C_h = system.C_h if system.C_h is not None else H.hessian_constant(system.box, system.rho_H)
        c_omega = self.c_omega(H)
        if param == "a":
            return self._constants.threshold_sweep(
                values, system.n, system.rho_H, system.sigma_H, c_omega,
                system.rho_H, system.sigma_H, C_h, algo.d,
            )
        if param != "epsilon":
            raise ValueError(f"Unknown sweep parameter '{param}', expected 'epsilon' or 'a'")
        a = H.decay_rate
        if a <= 0:
            raise ScenarioValidationError("An epsilon sweep needs an exponential time class",
                                          field="perturbation.time_class")
        df = self._constants.epsilon_sweep(values, system.n, a, system.rho_H, system.sigma_H, C_h, algo.d)
        if H.is_isochronous:
            iso = [self._constants.iso_schedule(system.n, a, system.rho_H, system.sigma_H, c_omega, eps,
                                                j_report=0)
                   for eps in df["epsilon"]]
            df["eps_a"] = [s.eps_a for s in iso]
            df["iso_in_regime"] = [s.in_regime for s in iso]
        return df

    # ==================== Orchestration ====================

    def run_directory(self, scenario: Scenario, mode: str, out: Optional[Union[str, Path]] = None) -> Path:
        root = Path(out) if out is not None else Path(self.settings.OUTPUT_DIR)
        stamp = datetime.now().strftime("%Y%m%d-%H%M%S")
        path = root / f"{scenario.name}_{mode}_{stamp}"
        path.mkdir(parents=True, exist_ok=True)
        return path

    def run(self, scenario: Scenario, mode: str = "verify", out: Optional[Union[str, Path]] = None,
            sweep_param: Optional[str] = None,
            sweep_values: Optional[Sequence[float]] = None) -> ScenarioRunSummary:
        """
        Run one scenario and write its artifacts.

        Args:
            scenario: Validated scenario
            mode: One of constants, normalize, verify, sweep
            out: Root directory for the timestamped run directory
            sweep_param: epsilon or a (sweep mode)
            sweep_values: Grid of values (sweep mode)

        Returns:
            ScenarioRunSummary; exit_code is 1 iff a hard invariant failed

        Raises:
            ScenarioValidationError: If the scenario cannot be turned into a Hamiltonian
        """
        if mode not in MODES:
            raise ValueError(f"Unknown mode '{mode}', expected one of {MODES}")
        timings: Dict[str, float] = {}
        failures: List[str] = []
        flags: Dict[str, bool] = {}
        provenance: List[Dict[str, Any]] = []

        start = time.perf_counter()
        H = self.build_hamiltonian(scenario)
        timings["build"] = time.perf_counter() - start
        directory = self.run_directory(scenario, mode, out)
        artifacts = [write_json(scenario.to_dict(), directory / "scenario.json")]

        if mode == "sweep":
            values = list(sweep_values or [])
            if not values:
                raise ScenarioValidationError("sweep mode needs --sweep-values", field="sweep_values")
            start = time.perf_counter()
            df = self.sweep(scenario, H, sweep_param or "epsilon", values)
            timings["sweep"] = time.perf_counter() - start
            artifacts.append(write_table(df, directory / f"sweep_{sweep_param or 'epsilon'}.csv"))
            if "monotone" in df:
                flags["sweep.monotone"] = bool(df["monotone"].iloc[0]) if len(df) else True
            return self._finish(scenario, mode, directory, artifacts, failures, flags, timings)

        start = time.perf_counter()
        schedule = self.schedule_report(scenario, H)
        timings["constants"] = time.perf_counter() - start
        flags.update(schedule.flags())
        failures.extend(schedule.hard_failures())
        artifacts.append(write_json(schedule, directory / "schedule_report.json"))
        artifacts.append(write_rows(self.schedule_sequences(schedule), directory / "schedule_sequences.csv",
                                    SEQUENCE_COLUMNS))
        if mode == "constants":
            return self._finish(scenario, mode, directory, artifacts, failures, flags, timings)

        start = time.perf_counter()
        try:
            outcome = self.normalize(scenario, H, schedule)
        except ScenarioValidationError:
            raise
        except NormalFormError as e:
            self.logger.error(f"Normalization failed: {e}")
            failures.append(f"normalization failed: {e}")
            return self._finish(scenario, mode, directory, artifacts, failures, flags, timings)
        timings["normalize"] = time.perf_counter() - start
        failures.extend(outcome.hard_failures())
        if outcome.birkhoff is not None:
            report = outcome.birkhoff
            flags["birkhoff.converged"] = report.converged
            artifacts.append(write_json(report, directory / "birkhoff_report.json"))
            artifacts.append(write_table(
                pd.DataFrame([s.model_dump() for s in report.steps]), directory / "birkhoff_steps.csv"))
            artifacts.append(write_table(
                pd.DataFrame([n.model_dump() for n in report.norms]).rename_axis("j").reset_index(),
                directory / "birkhoff_norms.csv"))
            for step in report.steps:
                provenance.extend(provenance_table(step.to_rows(), "birkhoff"))
        else:
            report = outcome.nekhoroshev
            flags["nekho.remainder_rate_ok"] = report.remainder_rate_ok
            artifacts.append(write_json(report, directory / "nekhoroshev_report.json"))
            artifacts.append(write_table(
                pd.DataFrame([lv.model_dump() for lv in report.levels]), directory / "nekhoroshev_levels.csv"))
            artifacts.append(write_table(
                pd.DataFrame([c.model_dump() for c in report.remainder_checks]),
                directory / "nekhoroshev_remainder.csv"))
            for level in report.levels:
                provenance.extend(provenance_table(level.to_rows(), "nekhoroshev"))
            for check in report.remainder_checks:
                provenance.extend(provenance_table(check.to_rows(), "remainder"))

        if mode == "verify":
            start = time.perf_counter()
            try:
                verification = self.verify(scenario, H, schedule, outcome)
            except NormalFormError as e:
                self.logger.error(f"Verification failed: {e}")
                failures.append(f"verification failed: {e}")
                verification = None
            timings["verify"] = time.perf_counter() - start
            if verification is not None:
                artifacts.extend(self._write_verification(directory, verification, provenance))
                flags["verify.horizon_ok"] = not any(d.horizon_short for d in verification.drifts)
                flags["verify.within_domain"] = verification.domain_exits == 0
                if schedule.nekho is not None and schedule.nekho.flags_ok:
                    failures.extend(
                        f"drift bound violated for initial condition {i}"
                        for i, d in enumerate(verification.drifts) if d.violation
                    )

        if provenance:
            artifacts.append(write_rows(provenance, directory / "provenance.csv", PROVENANCE_COLUMNS))
        return self._finish(scenario, mode, directory, artifacts, failures, flags, timings)

    def _write_verification(self, directory: Path, verification: VerificationOutcome,
                            provenance: List[Dict[str, Any]]) -> List[Path]:
        written = [write_table(pd.concat(verification.trajectories, ignore_index=True),
                               directory / "trajectories.csv")]
        drift_rows = []
        for i, drift in enumerate(verification.drifts):
            drift_rows.append({"ic": i, **drift.model_dump(exclude={"per_component", "initial_action"})})
            provenance.extend(provenance_table([{**row, "index": i} for row in drift.to_rows()], "drift"))
        written.append(write_table(pd.DataFrame(drift_rows), directory / "drift.csv"))
        check_rows = [{"ic": i, **check.model_dump()} for i, check in enumerate(verification.checks)
                      if check is not None]
        if check_rows:
            written.append(write_table(pd.DataFrame(check_rows), directory / "normal_form_checks.csv"))
            for row, check in zip(check_rows, (c for c in verification.checks if c is not None)):
                provenance.extend(provenance_table(
                    [{**r, "index": row["ic"]} for r in check.to_rows()], "normal_form"))
        written.append(write_json({"drift": verification.drifts, "normal_form": verification.checks,
                                   "domain_exits": verification.domain_exits},
                                  directory / "verify_report.json"))
        return written

    def _finish(self, scenario: Scenario, mode: str, directory: Path, artifacts: List[Path],
                failures: List[str], flags: Dict[str, bool], timings: Dict[str, float]) -> ScenarioRunSummary:
        exit_code = EXIT_HARD_FAILURE if failures else EXIT_OK
        for failure in failures:
            self.logger.error(f"Hard invariant failed: {failure}")
        for name, ok in sorted(flags.items()):
            if not ok:
                self.logger.warning(f"Regime flag {name} is false")
        summary_path = directory / "summary.json"
        summary = ScenarioRunSummary(
            scenario=scenario.name, mode=mode, exit_code=exit_code, output_dir=str(directory),
            hard_failures=failures, flags=flags,
            artifacts=sorted(p.name for p in artifacts + [summary_path]), timings=timings,
        )
        write_json(summary, summary_path)
        self.logger.info(f"Scenario '{scenario.name}' ({mode}) finished with exit code {exit_code}")
        return summary

    def run_scenario(self, config_path: Optional[Union[str, Path]] = None, mode: str = "verify",
                     out: Optional[Union[str, Path]] = None, overrides: Sequence[str] = (),
                     builtin: Optional[str] = None, sweep_param: Optional[str] = None,
                     sweep_values: Optional[Sequence[float]] = None) -> ScenarioRunSummary:
        """
        Load a scenario file (or a built-in) and run it.

        Returns:
            ScenarioRunSummary; validation problems give exit code 2 and no run directory
        """
        name = builtin or (Path(config_path).stem if config_path else "scenario")
        try:
            if builtin is not None:
                config_path = builtin_path(builtin)
            if config_path is None:
                raise ScenarioValidationError("No scenario given (use --config or --builtin)")
            scenario = load_scenario(config_path, overrides)
            return self.run(scenario, mode, out, sweep_param, sweep_values)
        except ScenarioValidationError as e:
            self.logger.error(f"Invalid scenario: {e}")
            return ScenarioRunSummary(
                scenario=name, mode=mode, exit_code=EXIT_VALIDATION, hard_failures=[str(e)],
            )
