"""
Exception hierarchy shared by the algebra, the normal-form services and the CLI.
Regime conditions (thresholds exceeded, short horizons) are report flags, not exceptions.
"""

from typing import Any, Dict, List, Optional, Sequence


class NormalFormError(Exception):
    """Base class for every error raised by the engine."""


class TailDivergenceError(NormalFormError):
    """An oscillatory tail integral over [t, inf) does not converge."""

    def __init__(self, message: str, harmonic: Optional[Sequence[int]] = None,
                 node: Optional[Sequence[float]] = None) -> None:
        self.harmonic = tuple(harmonic) if harmonic is not None else None
        self.node = tuple(node) if node is not None else None
        details = []
        if self.harmonic is not None:
            details.append(f"k={self.harmonic}")
        if self.node is not None:
            details.append(f"I_g={self.node}")
        suffix = f" ({', '.join(details)})" if details else ""
        super().__init__(f"{message}{suffix}")


class EnvelopeError(NormalFormError):
    """The requested decay rate exceeds what the function can certify."""


class DifferentiabilityError(NormalFormError):
    """A piecewise function is not differentiable at one of its breakpoints."""


class MetadataMismatchError(NormalFormError):
    """Two series with incompatible metadata were combined."""


class RadiusError(NormalFormError):
    """Norm radii exceed the analyticity radii carried by a series."""


class DomainError(NormalFormError):
    """A point or a parameter lies outside the admissible domain."""


class LieSeriesDivergenceError(NormalFormError):
    """
    A Lie series or Lie transform failed to reach its tolerance.
    Carries the term-norm history and, for Birkhoff steps, the convergence indicator.
    """

    def __init__(self, message: str, history: Sequence[float],
                 theta: Optional[float] = None) -> None:
        self.history: List[float] = list(history)
        self.theta = theta
        extra = f", theta={theta:.3e}" if theta is not None else ""
        super().__init__(f"{message} (term norms={self._format(self.history)}{extra})")

    @staticmethod
    def _format(history: Sequence[float]) -> str:
        tail = history[-6:]
        return "[" + ", ".join(f"{h:.3e}" for h in tail) + "]"


class IntegrationError(NormalFormError):
    """The ODE integrator aborted (typically step-size underflow)."""

    def __init__(self, message: str, state: Optional[Dict[str, Any]] = None) -> None:
        self.state = state or {}
        super().__init__(f"{message}; state={self.state}")


class RegimeFlagError(NormalFormError):
    """A bound was requested for parameters whose smallness conditions fail."""

    def __init__(self, failed_flags: Sequence[str]) -> None:
        self.failed_flags = list(failed_flags)
        super().__init__(f"Smallness conditions not satisfied: {', '.join(self.failed_flags)}")


class ScenarioValidationError(NormalFormError):
    """A scenario file failed to parse or validate."""

    def __init__(self, message: str, line: Optional[int] = None,
                 field: Optional[str] = None) -> None:
        self.line = line
        self.field = field
        where = []
        if line is not None:
            where.append(f"line {line}")
        if field:
            where.append(f"field '{field}'")
        prefix = f"[{', '.join(where)}] " if where else ""
        super().__init__(f"{prefix}{message}")
