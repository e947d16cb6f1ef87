"""
Scenario files.
Versioned YAML schema for one run: the system, its perturbation, the algorithm
settings and the verification plan. Unknown keys are rejected.
"""

from pathlib import Path
from typing import Annotated, Any, Dict, List, Literal, Optional, Sequence, Tuple, Union

import yaml
from pydantic import Field, ValidationError, field_validator, model_validator

from models.base import StrictModel
from models.errors import ScenarioValidationError

SCHEMA_VERSION = 1
SCENARIO_DIR = Path(__file__).resolve().parent.parent / "scenarios"


class PolyTerm(StrictModel):
    """coeff * I^monomial."""

    monomial: List[int]
    coeff: float

    @field_validator("monomial")
    @classmethod
    def validate_monomial(cls, v: List[int]) -> List[int]:
        if any(e < 0 for e in v):
            raise ValueError(f"Monomial exponents must be non-negative, got {v}")
        return v


class SystemBlock(StrictModel):
    """Integrable part h(I) on the action box G."""

    n: int = Field(ge=1)
    h: List[PolyTerm]
    box: List[Tuple[float, float]]
    rho_H: float = Field(gt=0)
    sigma_H: float = Field(gt=0)
    C_h: Optional[float] = Field(default=None, ge=1)

    @model_validator(mode="after")
    def validate_dimensions(self) -> "SystemBlock":
        if len(self.box) != self.n:
            raise ValueError(f"box needs {self.n} intervals, got {len(self.box)}")
        for lo, hi in self.box:
            if hi < lo:
                raise ValueError(f"box interval [{lo}, {hi}] is reversed")
        for term in self.h:
            if len(term.monomial) != self.n:
                raise ValueError(f"h monomial {term.monomial} does not match n={self.n}")
        return self

    @property
    def h_terms(self) -> Dict[Tuple[int, ...], float]:
        terms: Dict[Tuple[int, ...], float] = {}
        for term in self.h:
            key = tuple(term.monomial)
            terms[key] = terms.get(key, 0.0) + term.coeff
        return terms

    @property
    def is_isochronous(self) -> bool:
        return all(sum(m) <= 1 for m, c in self.h_terms.items() if c != 0)


class ExponentialClass(StrictModel):
    kind: Literal["exponential"]
    a: float = Field(gt=0)
    M_f: Optional[float] = Field(default=None, ge=0)


class QuadraticClass(StrictModel):
    """(t + 1)^(-2) decay."""

    kind: Literal["quadratic"]
    M_f: Optional[float] = Field(default=None, ge=0)


class BumpsClass(StrictModel):
    """Disjoint quartic bumps a_l / h^4 ((t - t_l)^2 - h^2)^2."""

    kind: Literal["bumps"]
    centers: List[float] = Field(min_length=1)
    amplitudes: List[float] = Field(min_length=1)
    width: float = Field(gt=0)
    M_f: Optional[float] = Field(default=None, ge=0)

    @model_validator(mode="after")
    def validate_lengths(self) -> "BumpsClass":
        if len(self.centers) != len(self.amplitudes):
            raise ValueError(
                f"{len(self.centers)} centers but {len(self.amplitudes)} amplitudes"
            )
        return self


TimeClass = Annotated[Union[ExponentialClass, QuadraticClass, BumpsClass], Field(discriminator="kind")]


class HarmonicSpec(StrictModel):
    """amplitude * P(I) * cos(k . phi) (or sin)."""

    k: List[int]
    amplitude: float = 1.0
    phase: Literal["cos", "sin"] = "cos"
    polynomial: Optional[List[PolyTerm]] = None


class PerturbationBlock(StrictModel):
    hat_epsilon: float = 0.0
    time_class: TimeClass
    harmonics: List[HarmonicSpec] = Field(default_factory=list)


class AlgorithmBlock(StrictModel):
    """Normalization settings; N and r default to the constants service's choice."""

    mode: Literal["birkhoff", "nekhoroshev"] = "birkhoff"
    backend: Literal["taylor", "grid"] = "taylor"
    k_max: int = Field(default=4, ge=0)
    degree: int = Field(default=4, ge=0)
    nodes: Optional[List[int]] = None
    j_max: int = Field(default=6, ge=0)
    stop_tol: float = Field(default=1e-14, gt=0)
    lie_tol: Optional[float] = Field(default=None, gt=0)
    N: Optional[int] = Field(default=None, ge=1)
    r: Optional[int] = Field(default=None, ge=1)
    d: float = Field(default=0.25, gt=0, le=0.25)
    s_total: Optional[int] = Field(default=None, ge=1)

    @field_validator("nodes")
    @classmethod
    def validate_nodes(cls, v: Optional[List[int]]) -> Optional[List[int]]:
        if v is not None and any(x < 2 for x in v):
            raise ValueError(f"Each axis needs at least 2 nodes, got {v}")
        return v


class InitialCondition(StrictModel):
    action: List[float]
    angle: List[float]


class VerificationBlock(StrictModel):
    """Trajectories integrated in the verify mode."""

    initial_conditions: List[InitialCondition] = Field(default_factory=list)
    count: int = Field(default=3, ge=1)
    horizon: Optional[float] = Field(default=None, gt=0)
    rtol: Optional[float] = Field(default=None, gt=0)
    atol: Optional[float] = Field(default=None, gt=0)
    samples: Optional[int] = Field(default=None, ge=2)
    check_conservation: bool = False


class Scenario(StrictModel):
    """One complete run definition."""

    schema_version: Literal[1]
    name: str
    description: str = ""
    system: SystemBlock
    perturbation: PerturbationBlock
    algorithm: AlgorithmBlock = Field(default_factory=AlgorithmBlock)
    verification: VerificationBlock = Field(default_factory=VerificationBlock)

    @model_validator(mode="after")
    def validate_consistency(self) -> "Scenario":
        n = self.system.n
        for harmonic in self.perturbation.harmonics:
            if len(harmonic.k) != n:
                raise ValueError(f"harmonic {harmonic.k} does not match n={n}")
            if sum(abs(x) for x in harmonic.k) > self.algorithm.k_max:
                raise ValueError(f"harmonic {harmonic.k} exceeds algorithm.k_max={self.algorithm.k_max}")
            for term in harmonic.polynomial or []:
                if len(term.monomial) != n:
                    raise ValueError(f"monomial {term.monomial} does not match n={n}")
        if self.algorithm.nodes is not None and len(self.algorithm.nodes) != n:
            raise ValueError(f"algorithm.nodes needs {n} entries")
        if self.algorithm.mode == "birkhoff" and not self.system.is_isochronous:
            raise ValueError("mode 'birkhoff' needs an integrable part linear in the actions")
        if self.algorithm.mode == "nekhoroshev":
            if self.perturbation.time_class.kind != "exponential":
                raise ValueError("mode 'nekhoroshev' needs an exponential time class")
            if self.algorithm.nodes is None:
                raise ValueError("mode 'nekhoroshev' runs on a Chebyshev grid and needs algorithm.nodes")
        if self.algorithm.backend == "grid" and self.algorithm.nodes is None:
            raise ValueError("the grid backend needs algorithm.nodes")
        for ic in self.verification.initial_conditions:
            if len(ic.action) != n or len(ic.angle) != n:
                raise ValueError(f"initial condition does not match n={n}")
        return self


# ==================== Loading ====================

def builtin_path(name: str) -> Path:
    """Path of a built-in scenario shipped in scenarios/."""
    path = SCENARIO_DIR / f"{name}.yaml"
    if not path.exists():
        available = ", ".join(list_builtins()) or "none"
        raise ScenarioValidationError(f"Unknown built-in scenario '{name}' (available: {available})")
    return path


def list_builtins() -> List[str]:
    return sorted(p.stem for p in SCENARIO_DIR.glob("*.yaml"))


def _parse_value(raw: str) -> Any:
    try:
        return yaml.safe_load(raw)
    except yaml.YAMLError:
        return raw


def apply_overrides(data: Dict[str, Any], overrides: Sequence[str]) -> Dict[str, Any]:
    """
    Patch a parsed scenario with dotted assignments such as ``algorithm.r=3``.

    Raises:
        ScenarioValidationError: If an override is malformed or walks through a scalar
    """
    for item in overrides:
        if "=" not in item:
            raise ScenarioValidationError(f"Override '{item}' is not of the form key.path=value")
        key, raw = item.split("=", 1)
        parts = [p for p in key.strip().split(".") if p]
        if not parts:
            raise ScenarioValidationError(f"Override '{item}' has an empty key")
        node: Any = data
        for i, part in enumerate(parts[:-1]):
            if isinstance(node, list) and part.isdigit() and int(part) < len(node):
                node = node[int(part)]
                continue
            if not isinstance(node, dict):
                raise ScenarioValidationError(f"Override '{item}' walks into a scalar", field=".".join(parts[:i]))
            node = node.setdefault(part, {})
        last = parts[-1]
        if isinstance(node, list) and last.isdigit() and int(last) < len(node):
            node[int(last)] = _parse_value(raw)
        elif isinstance(node, dict):
            node[last] = _parse_value(raw)
        else:
            raise ScenarioValidationError(f"Override '{item}' walks into a scalar", field=key)
    return data


def _line_of(node: Optional[yaml.Node], loc: Sequence[Union[str, int]]) -> Optional[int]:
    """1-based line of the deepest YAML node along a pydantic error location."""
    line = node.start_mark.line + 1 if node is not None else None
    for part in loc:
        if isinstance(node, yaml.MappingNode):
            match = next((v for k, v in node.value if k.value == str(part)), None)
            if match is None:
                # discriminator tags and missing keys
                continue
            node = match
        elif isinstance(node, yaml.SequenceNode) and isinstance(part, int) and part < len(node.value):
            node = node.value[part]
        else:
            continue
        line = node.start_mark.line + 1
    return line


def parse_scenario(text: str, overrides: Sequence[str] = (), source: str = "<string>") -> Scenario:
    """
    Parse and validate a scenario document.

    Args:
        text: YAML document
        overrides: Dotted key=value patches applied before validation
        source: Name used in error messages

    Returns:
        Validated Scenario

    Raises:
        ScenarioValidationError: With the offending line and field
    """
    try:
        data = yaml.safe_load(text)
        root = yaml.compose(text)
    except yaml.YAMLError as e:
        mark = getattr(e, "problem_mark", None)
        line = mark.line + 1 if mark is not None else None
        raise ScenarioValidationError(f"{source}: malformed YAML: {e}", line=line) from e
    if not isinstance(data, dict):
        raise ScenarioValidationError(f"{source}: expected a mapping at the top level", line=1)
    data = apply_overrides(data, overrides)
    try:
        return Scenario.model_validate(data)
    except ValidationError as e:
        first = e.errors()[0]
        loc = first.get("loc", ())
        field = ".".join(str(p) for p in loc) or None
        line = _line_of(root, loc)
        where = f"{source}:{line}" if line is not None else source
        raise ScenarioValidationError(f"{where}: {field or 'scenario'}: {first['msg']}",
                                      line=line, field=field) from e


def load_scenario(path: Union[str, Path], overrides: Sequence[str] = ()) -> Scenario:
    """Read and validate a scenario file."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as e:
        raise ScenarioValidationError(f"Cannot read scenario {path}: {e}") from e
    return parse_scenario(text, overrides, source=str(path))
