"""
Shared fixtures: a fresh testing configuration per test and small reference systems.
"""

from typing import Dict, Tuple

import numpy as np
import pytest

from config.settings import SettingsManager, get_settings
from models.hamiltonian import ExtendedHamiltonian
from models.series import FourierTaylorSeries, GridBasis, TaylorBasis
from models.timefn import Envelope, ExpPoly
from services.birkhoff_service import BirkhoffService
from services.constants_service import ConstantsService
from services.dynamics_service import DynamicsService
from services.lie_service import LieAlgebraService
from services.nekhoroshev_service import NekhoroshevService


@pytest.fixture(autouse=True)
def testing_settings(monkeypatch):
    """Every test starts from default settings in the testing environment."""
    monkeypatch.setenv("APP_ENV", "testing")
    SettingsManager.reset_instance()
    get_settings.cache_clear()
    yield get_settings()
    SettingsManager.reset_instance()
    get_settings.cache_clear()


@pytest.fixture
def lie(testing_settings) -> LieAlgebraService:
    return LieAlgebraService(testing_settings)


@pytest.fixture
def constants(testing_settings) -> ConstantsService:
    return ConstantsService(testing_settings)


@pytest.fixture
def birkhoff(testing_settings, lie, constants) -> BirkhoffService:
    return BirkhoffService(testing_settings, lie, constants)


@pytest.fixture
def nekhoroshev(testing_settings, lie) -> NekhoroshevService:
    return NekhoroshevService(testing_settings, lie)


@pytest.fixture
def dynamics(testing_settings) -> DynamicsService:
    return DynamicsService(testing_settings)


def cosine_series(basis, harmonics: Dict[Tuple[int, ...], float], rate: float, k_max: int,
                  rho: float, sigma: float) -> FourierTaylorSeries:
    """sum amplitude * cos(k . phi) * e^{-rate t}, constant in the actions."""
    coeffs = {}
    for k, amplitude in harmonics.items():
        vec = np.zeros(basis.size, dtype=complex)
        if isinstance(basis, TaylorBasis):
            vec[0] = amplitude / 2
        else:
            vec[:] = amplitude / 2
        minus = tuple(-x for x in k)
        coeffs[k] = ExpPoly.exponential(vec, rate)
        coeffs[minus] = ExpPoly.exponential(vec, rate)
    return FourierTaylorSeries(basis, k_max, rho, sigma, coeffs)


@pytest.fixture
def pendulum_kick() -> ExtendedHamiltonian:
    """h = I, f = cos(phi) e^{-t}: actions-independent, solvable in one step."""
    basis = TaylorBasis([(0.0, 1.0)], 2)
    f = cosine_series(basis, {(1,): 1.0}, rate=1.0, k_max=2, rho=0.5, sigma=0.5)
    return ExtendedHamiltonian(
        h_terms={(1,): 1.0}, perturbation=f, hat_epsilon=1e-3, envelope=Envelope(1.0, 1.0, 0),
    )


@pytest.fixture
def desk_system() -> ExtendedHamiltonian:
    """h = I^2 / 2, f = (cos phi + cos 3 phi) e^{-a t} on a five-node grid."""
    basis = GridBasis([(0.5, 1.5)], [5])
    f = cosine_series(basis, {(1,): 1.0, (3,): 1.0}, rate=0.5, k_max=4, rho=0.1, sigma=1.0)
    return ExtendedHamiltonian(
        h_terms={(2,): 0.5}, perturbation=f, hat_epsilon=1e-3, envelope=Envelope(1.0, 0.5, 0),
    )


@pytest.fixture
def make_cosine_series():
    return cosine_series
