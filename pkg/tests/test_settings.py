"""
Tests for the settings layer.
"""

import pytest
from pydantic import ValidationError

from config.settings import Settings, SettingsManager, get_settings


class TestSettings:
    """Environment-driven engine settings."""

    def test_testing_environment(self, testing_settings):
        assert testing_settings.is_testing()

    def test_defaults(self, testing_settings):
        assert testing_settings.INTEGRATOR_METHOD == "DOP853"
        assert testing_settings.BIRKHOFF_INITIAL_CONDITION == "decaying"
        assert testing_settings.CHEB_INFLATION >= 1.0
        assert 0 < testing_settings.RATE_MARGIN <= 1

    def test_environment_override(self, monkeypatch):
        monkeypatch.setenv("QUAD_TOL", "1e-8")
        monkeypatch.setenv("LOG_LEVEL", "debug")
        SettingsManager.reset_instance()
        get_settings.cache_clear()
        settings = get_settings()
        assert settings.QUAD_TOL == pytest.approx(1e-8)
        assert settings.LOG_LEVEL == "DEBUG"

    def test_rejects_bad_log_level(self):
        with pytest.raises(ValidationError):
            Settings(LOG_LEVEL="LOUD")

    def test_rejects_non_positive_tolerance(self):
        with pytest.raises(ValidationError):
            Settings(INTEGRATOR_RTOL=0.0)

    def test_rejects_inflation_below_one(self):
        with pytest.raises(ValidationError):
            Settings(CHEB_INFLATION=0.5)

    def test_rejects_rate_margin_outside_unit_interval(self):
        with pytest.raises(ValidationError):
            Settings(RATE_MARGIN=1.5)

    def test_rejects_tiny_tables(self):
        with pytest.raises(ValidationError):
            Settings(ENVELOPE_SAMPLES=4)

    def test_manager_is_singleton(self):
        first = SettingsManager()
        second = SettingsManager()
        assert first is second
        SettingsManager.reset_instance()
        assert SettingsManager() is not first
