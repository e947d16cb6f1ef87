"""
Models package initialization.
Exports the value types of the engine.
"""

from models.errors import (
    DifferentiabilityError,
    DomainError,
    EnvelopeError,
    IntegrationError,
    LieSeriesDivergenceError,
    MetadataMismatchError,
    NormalFormError,
    RadiusError,
    RegimeFlagError,
    ScenarioValidationError,
    TailDivergenceError,
)
from models.timefn import Envelope, ExpPoly, PiecewisePoly, QuadFn, RationalDecay, TimeFn
from models.series import Coordinate, FourierTaylorSeries, GridBasis, TaylorBasis
from models.hamiltonian import ExtendedHamiltonian
from models.transform import CoordinateShift, NearIdentityMap
from models.base import StrictModel
from models.scenario import Scenario, load_scenario, parse_scenario

__all__ = [
    # Errors
    "NormalFormError",
    "TailDivergenceError",
    "EnvelopeError",
    "DifferentiabilityError",
    "MetadataMismatchError",
    "RadiusError",
    "DomainError",
    "LieSeriesDivergenceError",
    "IntegrationError",
    "RegimeFlagError",
    "ScenarioValidationError",

    # Time algebra
    "Envelope",
    "TimeFn",
    "ExpPoly",
    "RationalDecay",
    "PiecewisePoly",
    "QuadFn",

    # Series and maps
    "Coordinate",
    "TaylorBasis",
    "GridBasis",
    "FourierTaylorSeries",
    "ExtendedHamiltonian",
    "CoordinateShift",
    "NearIdentityMap",

    # Scenarios
    "StrictModel",
    "Scenario",
    "load_scenario",
    "parse_scenario",
]
