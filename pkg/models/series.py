"""
Sparse Fourier-Taylor series with time-dependent coefficients.

A series maps integer harmonics k to a coefficient field over the action box G.
Two coefficient backends exist:

* TaylorBasis: polynomials in delta I = I - I_center up to a fixed total degree.
* GridBasis: values on a Chebyshev-Gauss-Lobatto tensor grid over G.

Either way a coefficient field is a single TimeFn whose leading axis enumerates the basis.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Any, Dict, Iterable, List, Literal, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from config.settings import get_settings
from models.errors import DomainError, MetadataMismatchError
from models.timefn import (
    ExpPoly,
    TimeFn,
    add,
    from_record as timefn_from_record,
    multiply,
    prune,
    stack,
    time_derivative,
)
from utils.chebyshev import (
    apply_along_axis,
    barycentric_weights,
    derivative_matrix,
    lobatto_nodes,
    tensor_interpolation_vector,
)

MultiIndex = Tuple[int, ...]
Box = Tuple[Tuple[float, float], ...]


def harmonic_order(k: MultiIndex) -> int:
    """|k|_1."""
    return int(sum(abs(x) for x in k))


def _compositions(n: int, total: int) -> List[MultiIndex]:
    """All n-tuples of non-negative integers summing to total, lexicographically descending."""
    if n == 1:
        return [(total,)]
    out: List[MultiIndex] = []
    for first in range(total, -1, -1):
        for rest in _compositions(n - 1, total - first):
            out.append((first,) + rest)
    return out


# ==================== Coordinates ====================

@dataclass(frozen=True)
class Coordinate:
    """A canonical coordinate (action, angle or the extended-time conjugate eta)."""

    kind: Literal["action", "angle", "eta"]
    index: int = 0

    @classmethod
    def action(cls, index: int) -> "Coordinate":
        return cls("action", index)

    @classmethod
    def angle(cls, index: int) -> "Coordinate":
        return cls("angle", index)

    @classmethod
    def eta(cls) -> "Coordinate":
        return cls("eta", 0)

    def __repr__(self) -> str:
        if self.kind == "eta":
            return "<Coordinate(eta)>"
        return f"<Coordinate({self.kind}[{self.index}])>"


# ==================== Coefficient bases ====================

class TaylorBasis:
    """Monomials delta I^m with |m| <= degree around the center of the box."""

    backend = "taylor"

    def __init__(self, box: Sequence[Sequence[float]], degree: int) -> None:
        self.box: Box = tuple((float(lo), float(hi)) for lo, hi in box)
        if any(hi < lo for lo, hi in self.box):
            raise ValueError(f"Invalid action box {self.box}")
        self.n = len(self.box)
        self.degree = int(degree)
        self.center = np.array([(lo + hi) / 2.0 for lo, hi in self.box])
        self.half_widths = np.array([(hi - lo) / 2.0 for lo, hi in self.box])
        self.monomials: List[MultiIndex] = [
            m for d in range(self.degree + 1) for m in _compositions(self.n, d)
        ]
        self.index: Dict[MultiIndex, int] = {m: i for i, m in enumerate(self.monomials)}
        self.exponents = np.array(self.monomials, dtype=int).reshape(-1, self.n)
        self.degrees = self.exponents.sum(axis=1)
        self.size = len(self.monomials)
        self._build_tables()

    def _build_tables(self) -> None:
        m = self.size
        self._scatter = np.zeros((m, m * m))
        self._dropped = np.zeros(m * m, dtype=bool)
        self._pair_exponents = np.zeros((m * m, self.n), dtype=int)
        for i, mi in enumerate(self.monomials):
            for j, mj in enumerate(self.monomials):
                target = tuple(a + b for a, b in zip(mi, mj))
                flat = i * m + j
                self._pair_exponents[flat] = target
                if target in self.index:
                    self._scatter[self.index[target], flat] = 1.0
                else:
                    self._dropped[flat] = True
        self._derivatives: List[np.ndarray] = []
        for axis in range(self.n):
            d = np.zeros((m, m))
            for j, mj in enumerate(self.monomials):
                if mj[axis] > 0:
                    lower = list(mj)
                    lower[axis] -= 1
                    d[self.index[tuple(lower)], j] = mj[axis]
            self._derivatives.append(d)

    @property
    def key(self) -> Tuple[Any, ...]:
        return (self.backend, self.degree, self.box)

    def __eq__(self, other: object) -> bool:
        return isinstance(other, TaylorBasis) and self.key == other.key

    def __hash__(self) -> int:
        return hash(self.key)

    def radii(self, rho: float) -> np.ndarray:
        return self.half_widths + rho

    def product(self, f: TimeFn, g: TimeFn, rho: float) -> Tuple[TimeFn, float]:
        """
        Truncated product of two coefficient fields.

        Returns:
            Tuple of (product, majorant of the monomials dropped beyond the degree)
        """
        m = self.size
        outer = multiply(f.reshape((m, 1)), g.reshape((1, m)))
        if outer.is_zero():
            return ExpPoly.zeros((m,)), 0.0
        flat = outer.reshape((m * m,))
        kept = flat.map_coefficients(lambda c: np.tensordot(self._scatter, c, axes=([1], [0])))
        dropped = 0.0
        if np.any(self._dropped):
            weights = np.prod(self.radii(rho)[None, :] ** self._pair_exponents[self._dropped], axis=1)
            dropped = float(np.sum(flat.sup_bound()[self._dropped] * weights))
        return kept, dropped

    def derivative(self, f: TimeFn, axis: int) -> TimeFn:
        d = self._derivatives[axis]
        return f.map_coefficients(lambda c: np.tensordot(d, c, axes=([1], [0])))

    def monomial_values(self, point: Sequence[float]) -> np.ndarray:
        shift = np.asarray(point, dtype=float) - self.center
        return np.prod(shift[None, :] ** self.exponents, axis=1)

    def weights(self, point: Sequence[float]) -> np.ndarray:
        return self.monomial_values(point)

    def weight_gradients(self, point: Sequence[float]) -> np.ndarray:
        shift = np.asarray(point, dtype=float) - self.center
        grads = np.zeros((self.n, self.size))
        for axis in range(self.n):
            lowered = self.exponents.copy()
            active = lowered[:, axis] > 0
            lowered[active, axis] -= 1
            vals = np.prod(shift[None, :] ** lowered, axis=1)
            grads[axis] = np.where(active, self.exponents[:, axis] * vals, 0.0)
        return grads

    def vandermonde(self, points: np.ndarray) -> np.ndarray:
        shift = np.asarray(points, dtype=float) - self.center[None, :]
        return np.prod(shift[:, None, :] ** self.exponents[None, :, :], axis=2)

    def sup_majorant(self, amplitudes: np.ndarray, rho: float) -> float:
        weights = np.prod(self.radii(rho)[None, :] ** self.exponents, axis=1)
        return float(np.sum(np.asarray(amplitudes) * weights))

    def coordinate(self, axis: int) -> np.ndarray:
        vec = np.zeros(self.size)
        vec[0] = self.center[axis]
        unit = [0] * self.n
        unit[axis] = 1
        if self.degree >= 1:
            vec[self.index[tuple(unit)]] = 1.0
        return vec

    def from_polynomial(self, terms: Mapping[MultiIndex, complex]) -> np.ndarray:
        """
        Coefficient vector of a polynomial given in absolute actions.

        Args:
            terms: Mapping monomial exponent -> coefficient of I^m

        Returns:
            Vector over the delta I monomials of this basis

        Raises:
            ValueError: If the polynomial exceeds the basis degree
        """
        vec = np.zeros(self.size, dtype=complex)
        for mono, coeff in terms.items():
            mono = tuple(int(x) for x in mono)
            if len(mono) != self.n:
                raise ValueError(f"Monomial {mono} does not match dimension {self.n}")
            if sum(mono) > self.degree:
                raise ValueError(f"Monomial {mono} exceeds Taylor degree {self.degree}")
            ranges = [range(e + 1) for e in mono]
            for js in itertools.product(*ranges):
                factor = complex(coeff)
                for axis, (e, j) in enumerate(zip(mono, js)):
                    factor *= math.comb(e, j) * self.center[axis] ** (e - j)
                vec[self.index[tuple(js)]] += factor
        return vec

    def describe(self) -> Dict[str, Any]:
        return {"backend": self.backend, "box": [list(b) for b in self.box], "degree": self.degree}


class GridBasis:
    """Values on a Chebyshev-Gauss-Lobatto tensor grid over the action box."""

    backend = "grid"

    def __init__(self, box: Sequence[Sequence[float]], nodes: Sequence[int],
                 inflation: Optional[float] = None) -> None:
        self.box: Box = tuple((float(lo), float(hi)) for lo, hi in box)
        self.n = len(self.box)
        self.nodes: Tuple[int, ...] = tuple(int(x) for x in nodes)
        if len(self.nodes) != self.n:
            raise ValueError(f"Need one node count per axis, got {self.nodes} for n={self.n}")
        if any(hi <= lo for lo, hi in self.box):
            raise ValueError(f"Grid box must have positive width, got {self.box}")
        self.inflation = float(inflation if inflation is not None else get_settings().CHEB_INFLATION)
        self.axes = [lobatto_nodes(nn, lo, hi) for nn, (lo, hi) in zip(self.nodes, self.box)]
        self.bary = [barycentric_weights(nn) for nn in self.nodes]
        self._derivatives = [derivative_matrix(nn, lo, hi) for nn, (lo, hi) in zip(self.nodes, self.box)]
        mesh = np.meshgrid(*self.axes, indexing="ij")
        self.points = np.stack([axis.ravel() for axis in mesh], axis=1)
        self.size = self.points.shape[0]
        self.center = np.array([(lo + hi) / 2.0 for lo, hi in self.box])

    @property
    def key(self) -> Tuple[Any, ...]:
        return (self.backend, self.nodes, self.box)

    def __eq__(self, other: object) -> bool:
        return isinstance(other, GridBasis) and self.key == other.key

    def __hash__(self) -> int:
        return hash(self.key)

    def product(self, f: TimeFn, g: TimeFn, rho: float) -> Tuple[TimeFn, float]:
        return multiply(f, g), 0.0

    def derivative(self, f: TimeFn, axis: int) -> TimeFn:
        d = self._derivatives[axis]
        return f.map_coefficients(lambda c: apply_along_axis(d, c, self.nodes, axis))

    def weights(self, point: Sequence[float]) -> np.ndarray:
        return tensor_interpolation_vector(self.axes, self.bary, point)

    def weight_gradients(self, point: Sequence[float]) -> np.ndarray:
        w = self.weights(point)
        return np.stack([apply_along_axis(d.T, w, self.nodes, axis)
                         for axis, d in enumerate(self._derivatives)])

    def sup_majorant(self, amplitudes: np.ndarray, rho: float) -> float:
        amps = np.asarray(amplitudes, dtype=float)
        if amps.size == 0:
            return 0.0
        return self.inflation * float(amps.max())

    def coordinate(self, axis: int) -> np.ndarray:
        return self.points[:, axis].copy()

    def describe(self) -> Dict[str, Any]:
        return {"backend": self.backend, "box": [list(b) for b in self.box], "nodes": list(self.nodes)}


CoeffBasis = Union[TaylorBasis, GridBasis]


def basis_from_record(record: Mapping[str, Any]) -> CoeffBasis:
    if record["backend"] == TaylorBasis.backend:
        return TaylorBasis(record["box"], record["degree"])
    return GridBasis(record["box"], record["nodes"])


@dataclass(frozen=True)
class SeriesMeta:
    """Truncation and analyticity metadata shared by compatible series."""

    n: int
    k_max: int
    backend: str
    rho: float
    sigma: float
    box: Box

    def to_dict(self) -> Dict[str, Any]:
        return {
            "n": self.n,
            "k_max": self.k_max,
            "backend": self.backend,
            "rho": self.rho,
            "sigma": self.sigma,
            "box": [list(b) for b in self.box],
        }


# ==================== Series ====================

class FourierTaylorSeries:
    """
    sum_k c_k(I, t) exp(i k . phi) + eta_coeff * eta, with |k|_1 <= k_max.

    The eta slot is only used by the extended integrable part h(I) + eta.
    The ledger accumulates majorants of everything dropped by truncation.
    """

    def __init__(self, basis: CoeffBasis, k_max: int, rho: float, sigma: float,
                 coeffs: Optional[Mapping[MultiIndex, TimeFn]] = None,
                 eta: float = 0.0, ledger: float = 0.0) -> None:
        self.basis = basis
        self.k_max = int(k_max)
        self.rho = float(rho)
        self.sigma = float(sigma)
        self.eta = float(eta)
        self.ledger = float(ledger)
        self._coeffs: Dict[MultiIndex, TimeFn] = {}
        for k, c in (coeffs or {}).items():
            k = tuple(int(x) for x in k)
            if len(k) != self.n:
                raise ValueError(f"Harmonic {k} does not match dimension {self.n}")
            if harmonic_order(k) > self.k_max:
                raise ValueError(f"Harmonic {k} exceeds k_max={self.k_max}")
            if c.shape != (basis.size,):
                raise ValueError(f"Coefficient shape {c.shape} does not match basis size {basis.size}")
            if not c.is_zero():
                self._coeffs[k] = c

    # ---- constructors ----

    @classmethod
    def zero_like(cls, other: "FourierTaylorSeries") -> "FourierTaylorSeries":
        return cls(other.basis, other.k_max, other.rho, other.sigma)

    def _like(self, coeffs: Mapping[MultiIndex, TimeFn], eta: float = 0.0,
              ledger: Optional[float] = None) -> "FourierTaylorSeries":
        return FourierTaylorSeries(self.basis, self.k_max, self.rho, self.sigma, coeffs, eta,
                                   self.ledger if ledger is None else ledger)

    @classmethod
    def from_coordinate(cls, coord: Coordinate, basis: CoeffBasis, k_max: int, rho: float,
                        sigma: float) -> "FourierTaylorSeries":
        """Actions and eta are series; angles are not single-valued and are rejected."""
        if coord.kind == "angle":
            raise DomainError("Angles have no Fourier-Taylor representation")
        if coord.kind == "eta":
            return cls(basis, k_max, rho, sigma, eta=1.0)
        zero = (0,) * basis.n
        return cls(basis, k_max, rho, sigma, {zero: ExpPoly.constant(basis.coordinate(coord.index))})

    # ---- metadata ----

    @property
    def n(self) -> int:
        return self.basis.n

    @property
    def meta(self) -> SeriesMeta:
        return SeriesMeta(self.n, self.k_max, self.basis.backend, self.rho, self.sigma, self.basis.box)

    def check_compatible(self, other: "FourierTaylorSeries") -> None:
        if self.basis != other.basis or self.k_max != other.k_max:
            raise MetadataMismatchError(
                f"Incompatible series: {self.basis.key}/k_max={self.k_max} vs "
                f"{other.basis.key}/k_max={other.k_max}"
            )

    # ---- container protocol ----

    def harmonics(self) -> List[MultiIndex]:
        return sorted(self._coeffs)

    def items(self) -> Iterable[Tuple[MultiIndex, TimeFn]]:
        return ((k, self._coeffs[k]) for k in self.harmonics())

    def __getitem__(self, k: MultiIndex) -> TimeFn:
        return self._coeffs.get(tuple(k), ExpPoly.zeros((self.basis.size,)))

    def __contains__(self, k: MultiIndex) -> bool:
        return tuple(k) in self._coeffs

    def __len__(self) -> int:
        return len(self._coeffs)

    def is_zero(self) -> bool:
        return not self._coeffs and self.eta == 0.0

    # ---- linear algebra ----

    def __add__(self, other: "FourierTaylorSeries") -> "FourierTaylorSeries":
        self.check_compatible(other)
        out = dict(self._coeffs)
        for k, c in other._coeffs.items():
            out[k] = add(out[k], c) if k in out else c
        return FourierTaylorSeries(self.basis, self.k_max, min(self.rho, other.rho),
                                   min(self.sigma, other.sigma), out, self.eta + other.eta,
                                   self.ledger + other.ledger)

    def __neg__(self) -> "FourierTaylorSeries":
        return self.scale(-1.0)

    def __sub__(self, other: "FourierTaylorSeries") -> "FourierTaylorSeries":
        return self + (-other)

    def scale(self, factor: complex) -> "FourierTaylorSeries":
        return self._like({k: c.scale(factor) for k, c in self._coeffs.items()},
                          float(np.real(factor)) * self.eta, abs(factor) * self.ledger)

    def map_coefficients(self, fn: Any) -> "FourierTaylorSeries":
        """Apply fn(k, coefficient) -> coefficient to every harmonic."""
        return self._like({k: fn(k, c) for k, c in self._coeffs.items()}, self.eta)

    # ---- calculus ----

    def d_phi(self, axis: int) -> "FourierTaylorSeries":
        return self._like({k: c.scale(1j * k[axis]) for k, c in self._coeffs.items() if k[axis] != 0},
                          ledger=0.0)

    def d_action(self, axis: int) -> "FourierTaylorSeries":
        return self._like({k: self.basis.derivative(c, axis) for k, c in self._coeffs.items()},
                          ledger=0.0)

    def d_time(self) -> "FourierTaylorSeries":
        return self._like({k: time_derivative(c) for k, c in self._coeffs.items()}, ledger=0.0)

    def truncated(self, k_max: int) -> "FourierTaylorSeries":
        kept = {k: c for k, c in self._coeffs.items() if harmonic_order(k) <= k_max}
        return FourierTaylorSeries(self.basis, k_max, self.rho, self.sigma, kept, self.eta, self.ledger)

    def pruned(self, rel_tol: Optional[float] = None) -> "FourierTaylorSeries":
        """Drop coefficient terms below rel_tol times the largest coefficient bound."""
        if not self._coeffs:
            return self
        rel_tol = get_settings().PRUNE_TOL if rel_tol is None else rel_tol
        scale = max(float(np.max(c.sup_bound())) for c in self._coeffs.values())
        threshold = rel_tol * scale
        return self._like({k: prune(c, threshold) for k, c in self._coeffs.items()}, self.eta)

    def restricted(self, harmonics: Iterable[MultiIndex]) -> "FourierTaylorSeries":
        wanted = {tuple(k) for k in harmonics}
        return self._like({k: c for k, c in self._coeffs.items() if k in wanted}, ledger=0.0)

    def with_radii(self, rho: float, sigma: float) -> "FourierTaylorSeries":
        return FourierTaylorSeries(self.basis, self.k_max, rho, sigma, self._coeffs, self.eta, self.ledger)

    def with_ledger(self, ledger: float) -> "FourierTaylorSeries":
        return self._like(self._coeffs, self.eta, ledger)

    def to_basis(self, basis: GridBasis) -> "FourierTaylorSeries":
        """Sample a Taylor-backed series on a Chebyshev grid."""
        if isinstance(self.basis, GridBasis):
            if self.basis == basis:
                return self
            raise MetadataMismatchError("Grid-to-grid resampling is not supported")
        vander = self.basis.vandermonde(basis.points)
        coeffs = {k: c.map_coefficients(lambda a: np.tensordot(vander, a, axes=([1], [0])))
                  for k, c in self._coeffs.items()}
        return FourierTaylorSeries(basis, self.k_max, self.rho, self.sigma, coeffs, self.eta, self.ledger)

    # ---- evaluation ----

    def evaluate(self, action: Sequence[float], angle: Sequence[float], t: float) -> complex:
        """Value at a single phase-space point and time."""
        w = self.basis.weights(action)
        phi = np.asarray(angle, dtype=float)
        total = 0j
        for k, c in self._coeffs.items():
            total += complex(np.dot(w, c.value(t))) * np.exp(1j * np.dot(k, phi))
        return total

    def stacked(self) -> Tuple[np.ndarray, TimeFn]:
        """Harmonic matrix (H, n) and all coefficients stacked into one (H, size) TimeFn."""
        if not hasattr(self, "_stack_cache"):
            ks = self.harmonics()
            harmonics = np.array(ks, dtype=float).reshape(-1, self.n)
            self._stack_cache = (harmonics, stack([self._coeffs[k] for k in ks]))
        return self._stack_cache

    def evaluate_with_gradient(self, action: Sequence[float], angle: Sequence[float],
                               t: float) -> Tuple[float, np.ndarray, np.ndarray]:
        """
        Real value with its action and angle gradients.

        Returns:
            Tuple of (value, d/dI, d/dphi)
        """
        if not self._coeffs:
            return 0.0, np.zeros(self.n), np.zeros(self.n)
        harmonics, coeffs = self.stacked()
        vals = coeffs.value(t)
        phase = np.exp(1j * harmonics @ np.asarray(angle, dtype=float))
        w = self.basis.weights(action)
        grads = self.basis.weight_gradients(action)
        base = vals @ w
        value = float(np.real(np.sum(base * phase)))
        d_angle = np.real((1j * harmonics * (base * phase)[:, None]).sum(axis=0))
        d_action = np.real(((vals @ grads.T) * phase[:, None]).sum(axis=0))
        return value, d_action, d_angle

    def sampled_norm(self, times: np.ndarray) -> np.ndarray:
        """sum_k max_basis |c_k(t)| at each time."""
        times = np.atleast_1d(np.asarray(times, dtype=float))
        total = np.zeros(times.shape)
        for c in self._coeffs.values():
            total += np.max(np.abs(c.value(times)), axis=0)
        return total

    def reality_defect(self) -> float:
        """Largest sup bound of c_k - conj(c_{-k}); zero for real-valued series."""
        worst = 0.0
        for k, c in self._coeffs.items():
            mirror = self[tuple(-x for x in k)]
            diff = add(c, mirror.conj().scale(-1.0))
            worst = max(worst, float(np.max(diff.sup_bound())) if not diff.is_zero() else 0.0)
        return worst

    # ---- serialization ----

    def to_record(self) -> Dict[str, Any]:
        return {
            "basis": self.basis.describe(),
            "k_max": self.k_max,
            "rho": self.rho,
            "sigma": self.sigma,
            "eta": self.eta,
            "ledger": self.ledger,
            "coefficients": [{"k": list(k), "c": c.to_record()} for k, c in self.items()],
        }

    @classmethod
    def from_record(cls, record: Mapping[str, Any]) -> "FourierTaylorSeries":
        basis = basis_from_record(record["basis"])
        coeffs = {tuple(entry["k"]): timefn_from_record(entry["c"]) for entry in record["coefficients"]}
        return cls(basis, record["k_max"], record["rho"], record["sigma"], coeffs,
                   record.get("eta", 0.0), record.get("ledger", 0.0))

    def __repr__(self) -> str:
        return (
            f"<FourierTaylorSeries(backend={self.basis.backend}, n={self.n}, "
            f"harmonics={len(self._coeffs)}, k_max={self.k_max}, eta={self.eta})>"
        )


def shell_split(series: FourierTaylorSeries, width: int) -> List[FourierTaylorSeries]:
    """
    Split a series into harmonic shells (m-1) * width <= |k| < m * width, m = 1, 2, ...

    Returns:
        List whose entry m-1 is shell m; the shells sum back to the input exactly
    """
    if width < 1:
        raise ValueError(f"Shell width must be >= 1, got {width}")
    count = series.k_max // width + 1
    shells: List[Dict[MultiIndex, TimeFn]] = [dict() for _ in range(count)]
    for k, c in series.items():
        shells[harmonic_order(k) // width][k] = c
    return [series._like(s, ledger=0.0) for s in shells]
