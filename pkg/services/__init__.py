"""
Services package initialization.
Exports the normal-form, constants and dynamics services.
"""

from services.base_service import BaseService
from services.lie_service import LieAlgebraService
from services.constants_service import ConstantsService
from services.birkhoff_service import BirkhoffService
from services.nekhoroshev_service import NekhoroshevService
from services.dynamics_service import DynamicsService
from services.scenario_service import ScenarioService

__all__ = [
    "BaseService",
    "LieAlgebraService",
    "ConstantsService",
    "BirkhoffService",
    "NekhoroshevService",
    "DynamicsService",
    "ScenarioService",
]
