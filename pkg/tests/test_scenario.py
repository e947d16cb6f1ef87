"""
Tests for scenario files, the run pipeline and the command line.
"""

import json
import math
import sys
from pathlib import Path

import pandas as pd
import pytest
from loguru import logger

from app import main
from models.errors import ScenarioValidationError
from models.scenario import builtin_path, list_builtins, load_scenario, parse_scenario
from services.scenario_service import EXIT_OK, EXIT_VALIDATION, ScenarioService

KICKED = """\
schema_version: 1
name: kicked
system:
  n: 1
  h:
    - {monomial: [1], coeff: 1.0}
  box: [[0.0, 1.0]]
  rho_H: 0.5
  sigma_H: 1.0
perturbation:
  hat_epsilon: 1.0e-3
  time_class: {kind: exponential, a: 1.0}
  harmonics:
    - k: [1]
algorithm:
  k_max: 2
  degree: 2
"""


@pytest.fixture
def service(testing_settings):
    with ScenarioService(testing_settings) as svc:
        yield svc


@pytest.fixture
def restore_logger():
    yield
    logger.remove()
    logger.add(sys.stderr)


class TestParsing:
    """YAML schema, error locations and overrides."""

    def test_kicked_scenario(self):
        scenario = parse_scenario(KICKED)
        assert scenario.name == "kicked"
        assert scenario.system.h_terms == {(1,): 1.0}
        assert scenario.system.is_isochronous
        assert scenario.algorithm.mode == "birkhoff"
        assert scenario.verification.count == 3

    def test_builtins_all_validate(self):
        names = list_builtins()
        assert "empty" in names and "nekho_desk" in names
        for name in names:
            assert load_scenario(builtin_path(name)).name == name

    def test_unknown_builtin(self):
        with pytest.raises(ScenarioValidationError):
            builtin_path("no_such_scenario")

    def test_unknown_key_is_located(self):
        text = KICKED.replace("  sigma_H: 1.0\n", "  sigma_H: 1.0\n  colour: blue\n")
        with pytest.raises(ScenarioValidationError) as info:
            parse_scenario(text)
        assert info.value.field == "system.colour"
        assert info.value.line == 10

    def test_unknown_time_class(self):
        text = KICKED.replace("{kind: exponential, a: 1.0}", "{kind: gaussian, a: 1.0}")
        with pytest.raises(ScenarioValidationError) as info:
            parse_scenario(text)
        assert info.value.field == "perturbation.time_class"
        assert info.value.line == 12

    def test_malformed_yaml(self):
        with pytest.raises(ScenarioValidationError) as info:
            parse_scenario("schema_version: 1\nname: [unclosed\n")
        assert info.value.line is not None

    def test_top_level_must_be_a_mapping(self):
        with pytest.raises(ScenarioValidationError):
            parse_scenario("- 1\n- 2\n")

    def test_harmonic_beyond_truncation(self):
        with pytest.raises(ScenarioValidationError):
            parse_scenario(KICKED.replace("    - k: [1]", "    - k: [3]"))

    def test_birkhoff_needs_linear_h(self):
        with pytest.raises(ScenarioValidationError):
            load_scenario(builtin_path("nekho_desk"), overrides=["algorithm.mode=birkhoff"])

    def test_nekhoroshev_needs_nodes(self):
        with pytest.raises(ScenarioValidationError):
            parse_scenario(KICKED, overrides=["algorithm.mode=nekhoroshev"])

    def test_overrides(self):
        scenario = parse_scenario(KICKED, overrides=["perturbation.hat_epsilon=1.0e-4",
                                                     "algorithm.j_max=5"])
        assert scenario.perturbation.hat_epsilon == pytest.approx(1e-4)
        assert scenario.algorithm.j_max == 5

    def test_override_into_a_list(self):
        scenario = parse_scenario(KICKED, overrides=["perturbation.harmonics.0.amplitude=0.5"])
        assert scenario.perturbation.harmonics[0].amplitude == 0.5

    @pytest.mark.parametrize("override", ["algorithm", "=3", "name.sub=1"])
    def test_bad_overrides(self, override):
        with pytest.raises(ScenarioValidationError):
            parse_scenario(KICKED, overrides=[override])

    def test_missing_file(self, tmp_path):
        with pytest.raises(ScenarioValidationError):
            load_scenario(tmp_path / "missing.yaml")


class TestHamiltonian:
    """From a scenario to an extended Hamiltonian."""

    def test_envelope_defaults_to_measured_norm(self, service):
        H = service.build_hamiltonian(parse_scenario(KICKED))
        assert H.hat_epsilon == pytest.approx(1e-3)
        assert H.envelope.a == 1.0
        # two half-amplitude modes with weight e^{sigma_H}
        assert H.envelope.M == pytest.approx(math.e, rel=1e-6)
        assert sorted(H.perturbation.harmonics()) == [(-1,), (1,)]

    def test_declared_envelope_must_dominate(self, service):
        text = KICKED.replace("{kind: exponential, a: 1.0}", "{kind: exponential, a: 1.0, M_f: 0.1}")
        with pytest.raises(ScenarioValidationError) as info:
            service.build_hamiltonian(parse_scenario(text))
        assert info.value.field == "perturbation.time_class.M_f"

    def test_declared_envelope_is_kept(self, service):
        text = KICKED.replace("{kind: exponential, a: 1.0}", "{kind: exponential, a: 1.0, M_f: 5.0}")
        assert service.build_hamiltonian(parse_scenario(text)).envelope.M == 5.0

    def test_overlapping_bumps(self, service):
        text = KICKED.replace(
            "{kind: exponential, a: 1.0}",
            "{kind: bumps, centers: [2.0, 2.5], amplitudes: [1.0, 1.0], width: 1.0}",
        )
        with pytest.raises(ScenarioValidationError) as info:
            service.build_hamiltonian(parse_scenario(text))
        assert info.value.field == "perturbation.time_class"

    def test_sine_phase(self, service):
        text = KICKED.replace("    - k: [1]", "    - k: [1]\n      phase: sin")
        H = service.build_hamiltonian(parse_scenario(text))
        value = H.perturbation.evaluate([0.5], [0.4], 0.0)
        assert value.real == pytest.approx(math.sin(0.4))
        assert abs(value.imag) < 1e-14

    def test_c_omega(self, service):
        H = service.build_hamiltonian(parse_scenario(KICKED))
        assert service.c_omega(H) == pytest.approx(2.0)


class TestRuns:
    """Pipeline modes and the artifacts they leave behind."""

    def test_constants_mode(self, service, tmp_path):
        summary = service.run_scenario(builtin="nekho_desk", mode="constants", out=tmp_path)
        assert summary.exit_code == EXIT_OK
        assert not summary.flags["nekho.eps_ok"]
        directory = Path(summary.output_dir)
        assert {"scenario.json", "schedule_report.json", "schedule_sequences.csv",
                "summary.json"} <= set(summary.artifacts)
        sequences = pd.read_csv(directory / "schedule_sequences.csv")
        assert list(sequences.columns) == ["sequence", "index", "value", "provenance"]
        assert set(sequences["provenance"]) <= {"schedule", "theoretical"}
        written = json.loads((directory / "summary.json").read_text())
        assert written["exit_code"] == 0

    def test_empty_scenario_verifies(self, service, tmp_path):
        summary = service.run_scenario(builtin="empty", mode="verify", out=tmp_path)
        assert summary.exit_code == EXIT_OK
        assert summary.hard_failures == []
        assert summary.flags["birkhoff.converged"]
        assert not summary.flags["verify.horizon_ok"]
        assert summary.flags["verify.within_domain"]
        assert {"trajectories.csv", "drift.csv", "verify_report.json",
                "provenance.csv"} <= set(summary.artifacts)
        drift = pd.read_csv(Path(summary.output_dir) / "drift.csv")
        assert drift["euclidean"].max() == 0.0

    def test_sweep_over_rates(self, service, tmp_path):
        summary = service.run_scenario(builtin="nekho_desk", mode="sweep", out=tmp_path,
                                       sweep_param="a", sweep_values=[0.1, 0.2, 0.4])
        assert summary.exit_code == EXIT_OK
        assert summary.flags["sweep.monotone"]
        df = pd.read_csv(Path(summary.output_dir) / "sweep_a.csv")
        assert df["a"].tolist() == [0.1, 0.2, 0.4]

    def test_epsilon_sweep_on_an_isochronous_system(self, service, tmp_path):
        summary = service.run_scenario(builtin="empty", mode="sweep", out=tmp_path,
                                       sweep_values=[1e-20, 1e-2])
        df = pd.read_csv(Path(summary.output_dir) / "sweep_epsilon.csv")
        assert "iso_in_regime" in df.columns
        assert df["iso_in_regime"].tolist() == [True, False]

    def test_sweep_needs_values(self, service, tmp_path):
        summary = service.run_scenario(builtin="empty", mode="sweep", out=tmp_path)
        assert summary.exit_code == EXIT_VALIDATION

    def test_validation_errors_write_nothing(self, service, tmp_path):
        summary = service.run_scenario(builtin="nekho_desk", mode="constants", out=tmp_path,
                                       overrides=["algorithm.d=0.5"])
        assert summary.exit_code == EXIT_VALIDATION
        assert summary.output_dir is None
        assert list(tmp_path.iterdir()) == []

    def test_unknown_mode(self, service):
        with pytest.raises(ValueError):
            service.run(parse_scenario(KICKED), mode="plot")

    @pytest.mark.slow
    def test_resonant_normalization(self, service, tmp_path):
        summary = service.run_scenario(builtin="iso_resonant", mode="normalize", out=tmp_path)
        assert summary.exit_code != EXIT_VALIDATION
        report = json.loads((Path(summary.output_dir) / "birkhoff_report.json").read_text())
        norms = [row["M"] for row in report["norms"]]
        assert 2 <= len(norms) <= 5
        assert norms[-1] <= 1e-8 * norms[0]
        if report["in_regime"]:
            for step in report["steps"]:
                if step["scheduled_eps"] is not None:
                    assert step["measured_M"] <= step["scheduled_eps"]


class TestCommandLine:
    """app.main exit codes."""

    def test_constants_run(self, tmp_path, monkeypatch, restore_logger):
        monkeypatch.chdir(tmp_path)
        code = main(["--builtin", "empty", "--mode", "constants", "--out", str(tmp_path / "runs")])
        assert code == 0
        assert len(list((tmp_path / "runs").iterdir())) == 1

    def test_no_source(self, tmp_path, monkeypatch, restore_logger):
        monkeypatch.chdir(tmp_path)
        assert main([]) == 2

    def test_invalid_config(self, tmp_path, monkeypatch, restore_logger):
        monkeypatch.chdir(tmp_path)
        path = tmp_path / "bad.yaml"
        path.write_text(KICKED.replace("n: 1", "n: 0"))
        assert main(["--config", str(path), "--out", str(tmp_path / "runs")]) == 2

    def test_override_from_the_command_line(self, tmp_path, monkeypatch, restore_logger):
        monkeypatch.chdir(tmp_path)
        path = tmp_path / "kicked.yaml"
        path.write_text(KICKED)
        code = main(["--config", str(path), "--mode", "constants", "--out", str(tmp_path / "runs"),
                     "--override", "perturbation.hat_epsilon=0.0"])
        assert code == 0
        run = next((tmp_path / "runs").iterdir())
        scenario = json.loads((run / "scenario.json").read_text())
        assert scenario["perturbation"]["hat_epsilon"] == 0.0

    def test_bad_sweep_values(self, tmp_path, monkeypatch, restore_logger):
        monkeypatch.chdir(tmp_path)
        with pytest.raises(SystemExit):
            main(["--builtin", "empty", "--mode", "sweep", "--sweep-values", "1e-3,abc"])
