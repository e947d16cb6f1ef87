"""
Derived constants and schedules.
Pure data produced by the constants service and consumed by the normal-form services.
"""

import math
from typing import Dict, List, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field


class IsoScheduleParams(BaseModel):
    """Step schedule for the isochronous normal form."""

    model_config = ConfigDict(frozen=True)

    n: int
    a: float
    rho0: float
    sigma0: float
    c_omega: float
    epsilon: float
    time_class: Literal["exponential", "quadratic", "bumps"] = "exponential"
    tau: int
    K: float
    rate_factor: float = Field(description="Effective decay factor dividing K (a, or 1 for non-exponential classes)")
    eps_a: float
    in_regime: bool
    rho_star: float
    sigma_star: float
    eps_seq: List[float]
    d_seq: List[float]
    d_fallback: bool
    rho_seq: List[float]
    sigma_seq: List[float]
    theta_seq: List[float]
    d_sum: float
    d_sum_tail: float
    d_sum_ok: bool
    radius_product: float
    recursion_max_rel_error: float
    decay_ladder: List[float]

    def step_fraction(self, j: int) -> float:
        """d_j for any j, using the same rule as the stored sequence."""
        if j < len(self.d_seq):
            return self.d_seq[j]
        if self.d_fallback:
            return 1.0 / (math.pi ** 2 * (j + 1) ** 2)
        return (self.epsilon * self.K / self.rate_factor) ** (1.0 / self.tau) * (j + 2) ** 2 / (j + 1) ** 4


class NekhoParams(BaseModel):
    """Constants of the finite-order normal form."""

    model_config = ConfigDict(frozen=True)

    n: int
    a: float
    rho_H: float
    sigma_H: float
    C_h: float
    d: float
    epsilon: float
    sigma: float
    N: int
    h: float
    tau: float
    F_tilde: float
    F_cal: float
    sqrt_eps_a_star: float
    eps_a_star: float
    gamma: int
    r: int
    r_forced: bool
    rho: float
    C_r: float
    Gamma: float
    Delta: float
    A: float
    a_ladder: List[float]
    flags: Dict[str, bool]

    @property
    def flags_ok(self) -> bool:
        return all(self.flags.values())

    def failed_flags(self) -> List[str]:
        return [name for name, ok in self.flags.items() if not ok]

    def step_radius(self, s: float) -> float:
        """d_s = d (s - 1) / r."""
        return self.d * (s - 1) / self.r


class KappaGammaResult(BaseModel):
    model_config = ConfigDict(frozen=True)

    kappa: List[float]
    kappa_closed: List[float]
    gamma: List[float]
    gamma_closed: List[float]
    max_rel_error: float
    agree: bool


class BetaThetaResult(BaseModel):
    model_config = ConfigDict(frozen=True)

    beta: List[float]
    theta: List[float]
    beta_bound: List[float]
    within_bound: bool
    choice_holds: bool
    y: List[float] = Field(default_factory=list, description="y(s) of the auxiliary inequality, s = 1..r")
    ineq_holds: bool = True


class StabilityBound(BaseModel):
    """Components of the action-stability estimate for the finite-order normal form."""

    model_config = ConfigDict(frozen=True)

    transform_piece: float
    drift_piece: float
    total: float
    consistent: bool
    epsilon: float


class TransformBound(BaseModel):
    """Displacement estimate for the Lie transform coordinates."""

    model_config = ConfigDict(frozen=True)

    D_sigma: float
    u: List[float]
    u_bound: List[float]
    within_bound: bool
    displacement_bound: float
    piece: float
    admissible: bool


class HomologicalBounds(BaseModel):
    """Class-specific bounds on a homological solution and its time derivative."""

    model_config = ConfigDict(frozen=True)

    time_class: Literal["exponential", "quadratic", "bumps"]
    chi: float
    chi_t: float
    rate: float
    power: int


class RemainderSeries(BaseModel):
    """Audit of sum_{s>r} (2 + s) Delta^(s-1), the level-by-level remainder majorant."""

    model_config = ConfigDict(frozen=True)

    terms: List[float]
    total: float
    closed_form: float
    majorant: float
    bound: float
    final_bound: float
    within_bound: bool
    power_check: bool
    note: Optional[str] = None
