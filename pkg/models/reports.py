"""
Run reports.
Pydantic models emitted by the normal-form and dynamics services and written by the CLI.

Every numeric field is tagged with a provenance: "measured" (computed from the
run), "theoretical" (an a-priori estimate) or "schedule" (bookkeeping of the
iterative scheme). Tables built with to_rows() carry that tag per value.
"""

from typing import Any, ClassVar, Dict, List, Literal, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field

from models.parameters import (
    BetaThetaResult,
    HomologicalBounds,
    IsoScheduleParams,
    KappaGammaResult,
    NekhoParams,
    RemainderSeries,
    StabilityBound,
    TransformBound,
)
from models.timefn import Envelope

Provenance = Literal["measured", "theoretical", "schedule"]


class ReportRow(BaseModel):
    """Base for report rows; PROVENANCE maps numeric fields to their origin."""

    model_config = ConfigDict(frozen=True)

    PROVENANCE: ClassVar[Dict[str, str]] = {}
    INDEX: ClassVar[Optional[str]] = None

    def to_rows(self) -> List[Dict[str, Any]]:
        """Long-format rows (index, quantity, value, provenance), one per numeric field."""
        data = self.model_dump()
        index = data.get(self.INDEX) if self.INDEX else None
        rows = []
        for name, provenance in self.PROVENANCE.items():
            value = data.get(name)
            if value is None or isinstance(value, (list, dict)):
                continue
            rows.append({"index": index, "quantity": name, "value": float(value),
                         "provenance": provenance})
        return rows


class EnvelopeRecord(ReportRow):
    """Serializable Envelope with its provenance."""

    M: float
    a: float
    power: int = 0
    provenance: Provenance = "measured"

    @classmethod
    def from_envelope(cls, env: Envelope, provenance: Provenance = "measured") -> "EnvelopeRecord":
        return cls(M=env.M, a=env.a, power=env.power, provenance=provenance)

    def bound(self, t: float) -> float:
        return self.M * pow(2.718281828459045, -self.a * t) * (t + 1.0) ** (-self.power)


# ==================== Constants ====================

class ScheduleReport(BaseModel):
    """Every evaluated constant, sequence and threshold with its pass/fail flags."""

    model_config = ConfigDict(frozen=True)

    iso: Optional[IsoScheduleParams] = None
    nekho: Optional[NekhoParams] = None
    kappa_gamma: Optional[KappaGammaResult] = None
    beta_theta: Optional[BetaThetaResult] = None
    stability: Optional[StabilityBound] = None
    transform: Optional[TransformBound] = None
    remainder: Optional[RemainderSeries] = None
    variant_bounds: Optional[HomologicalBounds] = None
    variant_K: Optional[float] = None
    provenance: Provenance = "theoretical"

    def flags(self) -> Dict[str, bool]:
        """All regime flags in one flat mapping."""
        out: Dict[str, bool] = {}
        if self.iso is not None:
            out["iso.in_regime"] = self.iso.in_regime
            out["iso.d_sum_ok"] = self.iso.d_sum_ok
        if self.nekho is not None:
            out.update({f"nekho.{k}": v for k, v in self.nekho.flags.items()})
        if self.stability is not None:
            out["stability.consistent"] = self.stability.consistent
        return out

    def hard_failures(self) -> List[str]:
        """Oracle disagreements (these are bugs, not regime conditions)."""
        failures = []
        if self.kappa_gamma is not None and not self.kappa_gamma.agree:
            failures.append("kappa_gamma closed forms disagree with the recursion")
        if self.beta_theta is not None and not self.beta_theta.ineq_holds:
            failures.append("auxiliary inequality y(s) <= e^(s-1) fails")
        if self.remainder is not None and not self.remainder.power_check:
            failures.append("(r+4) e^r <= 5 4^r fails")
        if self.iso is not None and self.iso.in_regime and self.iso.recursion_max_rel_error > 1e-10:
            failures.append("schedule recursion does not reproduce eps_j")
        return failures


# ==================== Birkhoff ====================

class BirkhoffStepRecord(ReportRow):
    """One iteration of the isochronous scheme."""

    PROVENANCE: ClassVar[Dict[str, str]] = {
        "measured_M": "measured",
        "achieved_rate": "measured",
        "scheduled_eps": "schedule",
        "rho": "schedule",
        "sigma": "schedule",
        "d": "schedule",
        "theta": "schedule",
        "chi_M": "measured",
        "chi_bound": "theoretical",
        "chi_t_M": "measured",
        "chi_t_bound": "theoretical",
        "residual": "measured",
        "min_divisor_ratio": "measured",
        "ledger": "measured",
        "lie_orders": "measured",
    }
    INDEX: ClassVar[Optional[str]] = "j"

    j: int
    measured_M: float
    achieved_rate: float
    scheduled_eps: Optional[float] = None
    rho: float
    sigma: float
    d: float
    theta: Optional[float] = None
    theta_ok: Optional[bool] = None
    chi_M: float = 0.0
    chi_bound: float = 0.0
    chi_ok: bool = True
    chi_t_M: float = 0.0
    chi_t_bound: float = 0.0
    chi_t_ok: bool = True
    residual: float = 0.0
    residual_ok: bool = True
    min_divisor_ratio: Optional[float] = None
    ledger: float = 0.0
    lie_orders: int = 0


class BirkhoffReport(BaseModel):
    """Per-step table and audits of a Birkhoff run."""

    model_config = ConfigDict(frozen=True)

    steps: List[BirkhoffStepRecord]
    norms: List[EnvelopeRecord]
    converged: bool
    iterations: int
    stop_tol: float
    in_regime: bool
    outside_proven_regime: bool
    schedule_dominates: Optional[bool] = None
    initial_condition: str = "decaying"
    cauchy_shift: Optional[float] = None
    cauchy_bound: Optional[float] = None
    map_displacement: List[Tuple[float, float]] = Field(default_factory=list)
    map_bound_ok: Optional[bool] = None
    ledger_total: float = 0.0
    provenance: Provenance = "measured"

    def hard_failures(self) -> List[str]:
        failures = []
        for step in self.steps:
            if not step.residual_ok:
                failures.append(f"homological residual {step.residual:.3e} at j={step.j}")
            if not step.chi_ok or not step.chi_t_ok:
                failures.append(f"generator bound violated at j={step.j}")
            if step.min_divisor_ratio is not None and step.min_divisor_ratio < 1 - 1e-12:
                failures.append(f"divisor below decay rate at j={step.j}")
        if self.in_regime and self.schedule_dominates is False:
            failures.append("measured norms exceed the schedule inside the proven regime")
        return failures


# ==================== Nekhoroshev ====================

class NekhoroshevLevelRecord(ReportRow):
    """One normalization level s of the finite-order scheme."""

    PROVENANCE: ClassVar[Dict[str, str]] = {
        "shell_M": "measured",
        "shell_bound": "theoretical",
        "psi_M": "measured",
        "chi_M": "measured",
        "chi_t_M": "measured",
        "chi_bound": "theoretical",
        "chi_t_bound": "theoretical",
        "a_s": "schedule",
        "achieved_rate": "measured",
        "level_residual": "measured",
        "homological_residual": "measured",
    }
    INDEX: ClassVar[Optional[str]] = "s"

    s: int
    shell_M: float = 0.0
    shell_bound: float = 0.0
    psi_M: float = 0.0
    chi_M: float = 0.0
    chi_t_M: float = 0.0
    chi_bound: float = 0.0
    chi_t_bound: float = 0.0
    a_s: float = 0.0
    achieved_rate: float = 0.0
    rate_ok: bool = True
    level_residual: float = 0.0
    level_ok: bool = True
    homological_residual: float = 0.0
    homological_ok: bool = True


class RemainderRecord(ReportRow):
    """Measured remainder against the exponentially small bound at one time."""

    PROVENANCE: ClassVar[Dict[str, str]] = {
        "t": "measured",
        "measured": "measured",
        "bound": "theoretical",
    }
    INDEX: ClassVar[Optional[str]] = "r"

    r: int
    t: float
    measured: float
    bound: float
    below: bool


class NekhoroshevReport(BaseModel):
    """Level table, remainder table and audits of a finite-order run."""

    model_config = ConfigDict(frozen=True)

    N: int
    r: int
    s_total: int
    levels: List[NekhoroshevLevelRecord]
    remainder_envelope: EnvelopeRecord
    remainder_rate_target: float
    remainder_rate_ok: bool
    remainder_checks: List[RemainderRecord]
    tail_ledger: float
    ledger_total: float
    conservation_defect: Optional[float] = None
    flags: Dict[str, bool] = Field(default_factory=dict)
    provenance: Provenance = "measured"

    def hard_failures(self) -> List[str]:
        failures = []
        for level in self.levels:
            if not level.level_ok:
                failures.append(f"level {level.s} not annihilated (residual {level.level_residual:.3e})")
            if not level.homological_ok:
                failures.append(f"homological residual {level.homological_residual:.3e} at s={level.s}")
        if not self.remainder_rate_ok:
            failures.append("remainder decays slower than the degraded rate a_(r+1)")
        if all(self.flags.values()) and any(not c.below for c in self.remainder_checks):
            failures.append("remainder exceeds its bound inside the proven regime")
        return failures


# ==================== Dynamics ====================

class DriftReport(ReportRow):
    """Measured action drift against the predicted stability bound."""

    PROVENANCE: ClassVar[Dict[str, str]] = {
        "euclidean": "measured",
        "bound": "theoretical",
        "margin": "measured",
        "horizon": "measured",
        "required_horizon": "schedule",
    }

    per_component: List[float]
    euclidean: float
    bound: Optional[float] = None
    margin: Optional[float] = None
    violation: bool = False
    horizon: float
    required_horizon: Optional[float] = None
    horizon_short: bool = False
    bound_source: str = "none"
    initial_action: List[float] = Field(default_factory=list)


class NormalFormCheck(ReportRow):
    """Trajectory pushed through a normalizing map."""

    PROVENANCE: ClassVar[Dict[str, str]] = {
        "raw_variation": "measured",
        "transformed_variation": "measured",
        "improvement": "measured",
        "displacement_start": "measured",
        "displacement_late": "measured",
        "late_time": "measured",
        "displacement_bound_start": "theoretical",
    }

    map_kind: str
    raw_variation: float
    transformed_variation: float
    improvement: Optional[float] = None
    displacement_start: float
    displacement_late: float
    late_time: float
    decay_consistent: bool
    displacement_bound_start: Optional[float] = None
    within_displacement_bound: Optional[bool] = None


class ScenarioRunSummary(BaseModel):
    """Outcome of one CLI invocation."""

    model_config = ConfigDict(frozen=True)

    scenario: str
    mode: str
    exit_code: int
    output_dir: Optional[str] = None
    hard_failures: List[str] = Field(default_factory=list)
    flags: Dict[str, bool] = Field(default_factory=dict)
    artifacts: List[str] = Field(default_factory=list)
    timings: Dict[str, float] = Field(default_factory=dict)
