"""
Extended Hamiltonian h(I) + eta + hat_epsilon * f(I, phi, t).
"""

from dataclasses import dataclass, field
from typing import Any, Dict, Mapping, Optional, Sequence, Tuple

import numpy as np

from models.series import (
    CoeffBasis,
    FourierTaylorSeries,
    GridBasis,
    MultiIndex,
    TaylorBasis,
)
from models.timefn import Envelope, ExpPoly

TIME_CLASSES = ("exponential", "quadratic", "bumps")


@dataclass(frozen=True)
class ExtendedHamiltonian:
    """
    Integrable part given as a polynomial in absolute actions, perturbation as a series.

    Attributes:
        h_terms: Mapping monomial exponent -> coefficient of I^m
        perturbation: Unscaled perturbation f
        hat_epsilon: Perturbation prefactor
        envelope: Declared envelope of f (M_f and its decay)
        time_class: One of "exponential", "quadratic", "bumps"
    """

    h_terms: Mapping[MultiIndex, float]
    perturbation: FourierTaylorSeries
    hat_epsilon: float
    envelope: Envelope
    time_class: str = "exponential"
    bump_data: Optional[Dict[str, Any]] = field(default=None)

    def __post_init__(self) -> None:
        if self.time_class not in TIME_CLASSES:
            raise ValueError(f"Unknown time class '{self.time_class}', expected one of {TIME_CLASSES}")
        for mono in self.h_terms:
            if len(mono) != self.n:
                raise ValueError(f"Monomial {mono} in h does not match dimension {self.n}")

    @property
    def n(self) -> int:
        return self.perturbation.n

    @property
    def epsilon(self) -> float:
        """Effective size hat_epsilon * M_f."""
        return abs(self.hat_epsilon) * self.envelope.M

    @property
    def decay_rate(self) -> float:
        return self.envelope.a

    @property
    def scaled_perturbation(self) -> FourierTaylorSeries:
        return self.perturbation.scale(self.hat_epsilon)

    @property
    def is_isochronous(self) -> bool:
        return all(sum(m) <= 1 for m, c in self.h_terms.items() if c != 0)

    # ---- integrable part ----

    def h_value(self, action: Sequence[float]) -> float:
        point = np.asarray(action, dtype=float)
        return float(sum(c * np.prod(point ** np.asarray(m)) for m, c in self.h_terms.items()))

    def frequency(self, action: Sequence[float]) -> np.ndarray:
        """omega(I) = grad h(I)."""
        point = np.asarray(action, dtype=float)
        omega = np.zeros(self.n)
        for mono, c in self.h_terms.items():
            m = np.asarray(mono)
            for axis in range(self.n):
                if m[axis] == 0:
                    continue
                lowered = m.copy()
                lowered[axis] -= 1
                omega[axis] += c * m[axis] * np.prod(point ** lowered)
        return omega

    def frequencies_at(self, points: np.ndarray) -> np.ndarray:
        return np.stack([self.frequency(p) for p in np.asarray(points, dtype=float)])

    def constant_frequency(self) -> np.ndarray:
        """Frequency vector of an isochronous integrable part."""
        if not self.is_isochronous:
            raise ValueError("Integrable part is not linear in the actions")
        return self.frequency(np.zeros(self.n))

    def hessian_constant(self, box: Sequence[Tuple[float, float]], rho: float) -> float:
        """
        C_h = max(1, sum_{l,j} sup |d_l d_j h|) over the box enlarged by rho.
        Uses the polynomial majorant on the complex polydisc, an upper bound for the sup.
        """
        reach = np.array([max(abs(lo), abs(hi)) for lo, hi in box]) + rho
        total = 0.0
        for mono, c in self.h_terms.items():
            m = np.asarray(mono)
            for l_axis in range(self.n):
                for j_axis in range(self.n):
                    lowered = m.copy()
                    factor = int(lowered[l_axis])
                    if factor == 0:
                        continue
                    lowered[l_axis] -= 1
                    factor *= int(lowered[j_axis])
                    if factor == 0:
                        continue
                    lowered[j_axis] -= 1
                    total += abs(c) * factor * float(np.prod(reach ** lowered))
        return max(1.0, total)

    def integrable_series(self, basis: CoeffBasis, k_max: int, rho: float,
                          sigma: float) -> FourierTaylorSeries:
        """h(I) + eta as a series on the given basis."""
        zero = (0,) * self.n
        if isinstance(basis, TaylorBasis):
            values = basis.from_polynomial(self.h_terms)
        elif isinstance(basis, GridBasis):
            values = np.array([self.h_value(p) for p in basis.points], dtype=complex)
        else:
            raise TypeError(f"Unsupported basis {type(basis).__name__}")
        return FourierTaylorSeries(basis, k_max, rho, sigma, {zero: ExpPoly.constant(values)}, eta=1.0)

    def total_energy(self, action: Sequence[float], angle: Sequence[float], t: float) -> float:
        """h(I) + hat_epsilon f(I, phi, t), without the eta term."""
        value, _, _ = self.perturbation.evaluate_with_gradient(action, angle, t)
        return self.h_value(action) + self.hat_epsilon * value

    def __repr__(self) -> str:
        return (
            f"<ExtendedHamiltonian(n={self.n}, class={self.time_class}, "
            f"hat_epsilon={self.hat_epsilon:.3e}, M_f={self.envelope.M:.3e}, a={self.envelope.a})>"
        )
