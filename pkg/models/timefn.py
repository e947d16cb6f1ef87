"""
Algebra of time-dependent coefficients on [0, inf).

Every coefficient of a Fourier-Taylor series is a TimeFn. Four representations are supported:

* ExpPoly: finite sums c * t^p * exp(mu t) with Re mu <= 0. Closed under products,
  derivatives and oscillatory tails.
* RationalDecay: sums c * (t + 1)^(-m). Closed under products, derivatives and
  non-oscillating tails.
* PiecewisePoly: compactly supported piecewise exp-polynomials (smooth bumps).
* QuadFn: Chebyshev interpolant in the variable u = t / (t + L) backed by a callable
  evaluated with adaptive quadrature. Used when no closed form exists.

All representations carry a leading array shape, so one TimeFn can hold the coefficients
of every monomial or every grid node at once. Coefficient tables are (*shape, terms).
"""

from __future__ import annotations

import math
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from loguru import logger
from numpy.polynomial import Polynomial
from numpy.polynomial import chebyshev as cheb
from scipy import integrate

from config.settings import get_settings
from models.errors import (
    DifferentiabilityError,
    DomainError,
    EnvelopeError,
    TailDivergenceError,
)

Scalar = Union[int, float, complex]
RATE_TOL = 1e-12
REFINE_POINTS = 33
REFINE_BATCH = 2048
REFINE_ROUNDS = 200


# ==================== Envelope ====================

@dataclass(frozen=True)
class Envelope:
    """
    Certified bound |f(t)| <= M * exp(-a t) * (t + 1)^(-power) for all t >= 0.
    """

    M: float
    a: float
    power: int = 0

    def bound(self, t: Union[float, np.ndarray]) -> Union[float, np.ndarray]:
        t = np.asarray(t, dtype=float)
        return self.M * np.exp(-self.a * t) * (t + 1.0) ** (-self.power)

    def scaled(self, factor: float) -> "Envelope":
        return Envelope(self.M * abs(factor), self.a, self.power)

    def to_dict(self) -> Dict[str, Any]:
        return {"M": float(self.M), "a": float(self.a), "power": int(self.power)}

    def __repr__(self) -> str:
        return f"<Envelope(M={self.M:.6e}, a={self.a}, power={self.power})>"


# ==================== Certified suprema ====================

def _term_bounds(p: np.ndarray, nu: np.ndarray, power: int,
                 lo: np.ndarray, hi: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    Per-term bounds on [lo, hi] (0 <= lo <= hi) of |t^p e^{nu t}| (t + 1)^power and of its derivative.

    Returns:
        Two (terms, intervals) tables: the magnitude bound and the slope bound
    """
    pp = np.asarray(p, float)[:, None]
    b = -np.asarray(nu).real[:, None]
    with np.errstate(over="ignore", under="ignore"):
        growth = np.where(b >= 0, np.exp(-b * lo), np.exp(-b * hi))
        t_p = hi ** pp
        t_dp = np.where(pp > 0, pp * hi ** np.maximum(pp - 1.0, 0.0), 0.0)
        w = (hi + 1.0) ** power
        dw = power * (hi + 1.0) ** (power - 1.0)
        magnitude = t_p * w * growth
        slope = (t_dp * w + t_p * dw + np.abs(nu)[:, None] * t_p * w) * growth
    return magnitude, slope


def _certified_sup(coeffs: np.ndarray, p: np.ndarray, nu: np.ndarray, power: int,
                   samples: np.ndarray, floor: Union[float, np.ndarray] = 0.0) -> np.ndarray:
    """
    Upper bound of sup |sum_i c_i t^p_i e^{nu_i t}| (t + 1)^power over [samples[0], samples[-1]].

    The samples give a lower bound. Each sample interval is bracketed by the smaller of a triangle
    bound and a slope bound, and the intervals with the largest brackets are bisected until every
    bracket is within ENVELOPE_RTOL of the best value seen (or of ``floor``, which callers use for
    a bound they already hold). The result is never below the true supremum.

    Args:
        coeffs: (*shape, terms) coefficient table
        p: Polynomial powers per term
        nu: Exponents per term
        power: Weight exponent of (t + 1)
        samples: Increasing grid with t >= 0
        floor: Per-element value below which no refinement is needed

    Returns:
        (*shape) array of bounds
    """
    coeffs = np.asarray(coeffs, complex)
    shape = coeffs.shape[:-1]
    C = coeffs.reshape(-1, coeffs.shape[-1])
    A = np.abs(C)
    p = np.asarray(p, float)
    nu = np.asarray(nu, complex)
    samples = np.asarray(samples, float)
    rtol = get_settings().ENVELOPE_RTOL

    def basis(t: np.ndarray) -> np.ndarray:
        with np.errstate(over="ignore", under="ignore"):
            return t[None, :] ** p[:, None] * np.exp(np.outer(nu, t)) * (t + 1.0) ** power

    g = np.abs(C @ basis(samples))
    best = np.maximum(g.max(axis=-1), np.broadcast_to(np.asarray(floor, float), shape).reshape(-1))
    magnitude, slope = _term_bounds(p, nu, power, samples[:-1], samples[1:])
    upper = np.minimum(A @ magnitude,
                       np.maximum(g[:, :-1], g[:, 1:]) + 0.5 * np.diff(samples) * (A @ slope))
    is_open = upper > best[:, None] * (1.0 + rtol)
    settled = np.where(is_open, 0.0, upper).max(axis=-1)
    rows, cols = np.nonzero(is_open)
    lo, hi = samples[cols], samples[cols + 1]
    g_lo, g_hi, bound = g[rows, cols], g[rows, cols + 1], upper[rows, cols]

    for _ in range(REFINE_ROUNDS):
        if rows.size == 0:
            break
        pick = np.ones(rows.size, bool)
        if rows.size > REFINE_BATCH:
            ratio = bound / np.maximum(best[rows], np.finfo(float).tiny)
            pick[:] = False
            pick[np.argpartition(-ratio, REFINE_BATCH)[:REFINE_BATCH]] = True
        r, a, b, ga, gb = rows[pick], lo[pick], hi[pick], g_lo[pick], g_hi[pick]
        mid = 0.5 * (a + b)
        g_mid = np.abs(np.einsum("mi,im->m", C[r], basis(mid)))
        np.maximum.at(best, r, g_mid)

        r2 = np.concatenate([r, r])
        a2, b2 = np.concatenate([a, mid]), np.concatenate([mid, b])
        ga2, gb2 = np.concatenate([ga, g_mid]), np.concatenate([g_mid, gb])
        magnitude, slope = _term_bounds(p, nu, power, a2, b2)
        bound2 = np.minimum(np.einsum("mi,im->m", A[r2], magnitude),
                            np.maximum(ga2, gb2) + 0.5 * (b2 - a2) * np.einsum("mi,im->m", A[r2], slope))
        bound2 = np.minimum(bound2, np.concatenate([bound[pick], bound[pick]]))

        rows = np.concatenate([rows[~pick], r2])
        lo, hi = np.concatenate([lo[~pick], a2]), np.concatenate([hi[~pick], b2])
        g_lo, g_hi = np.concatenate([g_lo[~pick], ga2]), np.concatenate([g_hi[~pick], gb2])
        bound = np.concatenate([bound[~pick], bound2])

        is_open = bound > best[rows] * (1.0 + rtol)
        np.maximum.at(settled, rows[~is_open], bound[~is_open])
        rows, lo, hi = rows[is_open], lo[is_open], hi[is_open]
        g_lo, g_hi, bound = g_lo[is_open], g_hi[is_open], bound[is_open]

    if rows.size:
        logger.debug(f"Envelope refinement stopped with {rows.size} open intervals")
        np.maximum.at(settled, rows, bound)
    return np.maximum(best, settled).reshape(shape)


# ==================== Base class ====================

class TimeFn(ABC):
    """Abstract time-dependent coefficient with a leading array shape."""

    kind: str = "abstract"

    @property
    @abstractmethod
    def shape(self) -> Tuple[int, ...]:
        """Leading array shape (() for a scalar coefficient)."""

    @abstractmethod
    def _values_at(self, t: np.ndarray) -> np.ndarray:
        """Values at t given either as (m,) or per element as (*shape, m)."""

    @abstractmethod
    def derivative(self) -> "TimeFn":
        """Exact (or certified) time derivative."""

    @abstractmethod
    def tail(self, lam: Union[float, np.ndarray]) -> "TimeFn":
        """Decaying solution c of c' + i lam c = f, namely -int_t^inf e^{i lam (s-t)} f(s) ds."""

    @abstractmethod
    def map_coefficients(self, fn: Callable[[np.ndarray], np.ndarray]) -> "TimeFn":
        """Apply a linear map acting on the leading axes of every coefficient table."""

    @abstractmethod
    def conj(self) -> "TimeFn":
        """Complex conjugate function."""

    @abstractmethod
    def is_zero(self) -> bool:
        """True when the function is identically zero."""

    @abstractmethod
    def sup_bound(self) -> np.ndarray:
        """Cheap elementwise upper bound on sup_t |f(t)|."""

    @abstractmethod
    def amplitudes(self, a_target: float, power: int = 0) -> np.ndarray:
        """Elementwise certified M with |f| <= M e^{-a_target t} (t+1)^{-power}."""

    @abstractmethod
    def natural_envelope(self) -> Envelope:
        """Envelope at the fastest rate this function certifies on its own."""

    @abstractmethod
    def to_record(self) -> Dict[str, Any]:
        """Serialize to a JSON-friendly dictionary."""

    # ---- shared helpers ----

    def value(self, t: Union[float, np.ndarray]) -> np.ndarray:
        """
        Evaluate at times t.

        Args:
            t: Scalar or array of times (t >= 0)

        Returns:
            Array of shape (*self.shape, *t.shape)
        """
        t_arr = np.asarray(t, dtype=float)
        flat = np.atleast_1d(t_arr).ravel()
        if np.any(flat < 0):
            raise DomainError(f"TimeFn evaluated at negative time {flat.min()}")
        out = self._values_at(flat)
        return out.reshape(self.shape + t_arr.shape)

    def __call__(self, t: Union[float, np.ndarray]) -> np.ndarray:
        return self.value(t)

    @property
    def size(self) -> int:
        return int(np.prod(self.shape)) if self.shape else 1

    def scale(self, factor: Union[Scalar, np.ndarray]) -> "TimeFn":
        """Multiply by a constant (scalar or array broadcastable to the leading shape)."""
        factor = np.asarray(factor, dtype=complex)
        return self.map_coefficients(lambda c: c * factor[..., None])

    def reshape(self, shape: Tuple[int, ...]) -> "TimeFn":
        shape = tuple(shape)
        return self.map_coefficients(lambda c: c.reshape(shape + c.shape[-1:]))

    def broadcast_to(self, shape: Tuple[int, ...]) -> "TimeFn":
        shape = tuple(shape)
        if shape == self.shape:
            return self
        return self.map_coefficients(lambda c: np.broadcast_to(c, shape + c.shape[-1:]).copy())

    def element(self, index: Union[int, Tuple[int, ...]]) -> "TimeFn":
        """Scalar (or sub-array) coefficient at a leading index."""
        return self.map_coefficients(lambda c: c[index])

    def certify(self, a_target: float, power: int = 0) -> Envelope:
        amps = self.amplitudes(a_target, power)
        m = float(np.max(amps)) if np.size(amps) else 0.0
        return Envelope(m, float(a_target), int(power))

    def decay_rate(self) -> float:
        return self.natural_envelope().a

    def _sup_weighted(self, weighted: Callable[[np.ndarray], np.ndarray],
                      samples: np.ndarray) -> np.ndarray:
        """Sampled supremum with a local resampling around the sampled maximum."""
        g = weighted(samples)
        if g.shape[-1] == 0:
            return np.zeros(self.shape)
        k = np.argmax(g, axis=-1)
        lo = samples[np.maximum(k - 1, 0)]
        hi = samples[np.minimum(k + 1, samples.size - 1)]
        frac = np.linspace(0.0, 1.0, REFINE_POINTS)
        refined = np.asarray(lo)[..., None] + np.asarray(hi - lo)[..., None] * frac
        gr = weighted(refined)
        return np.maximum(g.max(axis=-1), gr.max(axis=-1))

    # ---- operators ----

    def __add__(self, other: Any) -> "TimeFn":
        if isinstance(other, TimeFn):
            return add(self, other)
        if np.isscalar(other) or isinstance(other, np.ndarray):
            return add(self, ExpPoly.constant(np.broadcast_to(np.asarray(other, complex), self.shape)))
        return NotImplemented

    __radd__ = __add__

    def __neg__(self) -> "TimeFn":
        return self.scale(-1.0)

    def __sub__(self, other: Any) -> "TimeFn":
        return self + (-other)

    def __rsub__(self, other: Any) -> "TimeFn":
        return (-self) + other

    def __mul__(self, other: Any) -> "TimeFn":
        if isinstance(other, TimeFn):
            return multiply(self, other)
        if np.isscalar(other) or isinstance(other, np.ndarray):
            return self.scale(other)
        return NotImplemented

    __rmul__ = __mul__


# ==================== Exponential polynomials ====================

def _merge_terms(c: np.ndarray, p: np.ndarray, mu: np.ndarray,
                 tol: float) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Merge terms with equal power and numerically equal exponent; drop zero terms."""
    if p.size == 0:
        return c, p, mu
    order = np.lexsort((mu.imag, mu.real, p))
    p_s, mu_s = p[order], mu[order]
    new_group = np.ones(order.size, dtype=bool)
    new_group[1:] = (p_s[1:] != p_s[:-1]) | (
        np.abs(mu_s[1:] - mu_s[:-1]) > tol * np.maximum(1.0, np.abs(mu_s[1:]))
    )
    starts = np.flatnonzero(new_group)
    c_new = np.add.reduceat(c[..., order], starts, axis=-1)
    p_new, mu_new = p_s[starts], mu_s[starts]
    lead_axes = tuple(range(c_new.ndim - 1))
    keep = np.any(c_new != 0, axis=lead_axes) if lead_axes else (c_new != 0)
    return c_new[..., keep], p_new[keep], mu_new[keep]


def _primitive_terms(c: np.ndarray, p: np.ndarray, mu: np.ndarray,
                     lam: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Terms of H(t) = e^{-i lam t} G(t), where G is the antiderivative of e^{i lam s} f(s)
    and f = sum c s^p e^{mu s}. Exponents of H coincide with those of f.
    """
    lam = np.asarray(lam, dtype=float)
    shape = np.broadcast_shapes(c.shape[:-1], lam.shape)
    c = np.broadcast_to(c, shape + c.shape[-1:])
    nu = mu + 1j * lam[..., None]
    nu = np.broadcast_to(nu, shape + mu.shape)
    degenerate = np.abs(nu) <= 1e-13 * np.maximum(1.0, np.abs(mu))
    safe_nu = np.where(degenerate, 1.0, nu)

    out_c: List[np.ndarray] = []
    out_p: List[int] = []
    out_mu: List[complex] = []
    for i in range(p.size):
        p_i = int(p[i])
        for j in range(p_i + 1):
            coef = (-1) ** j * math.perm(p_i, j) / safe_nu[..., i] ** (j + 1)
            out_c.append(np.where(degenerate[..., i], 0.0, coef) * c[..., i])
            out_p.append(p_i - j)
            out_mu.append(mu[i])
        if np.any(degenerate[..., i]):
            out_c.append(np.where(degenerate[..., i], c[..., i] / (p_i + 1), 0.0))
            out_p.append(p_i + 1)
            out_mu.append(mu[i])
    if not out_c:
        return np.zeros(shape + (0,), complex), np.zeros(0, int), np.zeros(0, complex)
    return np.stack(out_c, axis=-1), np.asarray(out_p, int), np.asarray(out_mu, complex)


class ExpPoly(TimeFn):
    """Finite sum of c * t^p * exp(mu t) with Re mu <= 0."""

    kind = "exppoly"

    def __init__(self, coeffs: Any, powers: Sequence[int], exponents: Sequence[complex],
                 merge: bool = True) -> None:
        p = np.asarray(powers, dtype=int).ravel()
        mu = np.asarray(exponents, dtype=complex).ravel()
        c = np.asarray(coeffs, dtype=complex)
        if c.ndim == 0:
            c = c.reshape(1)
        if c.shape[-1] != p.size or mu.size != p.size:
            raise ValueError(
                f"Term table mismatch: coeffs {c.shape}, powers {p.size}, exponents {mu.size}"
            )
        if np.any(p < 0):
            raise ValueError("Powers must be non-negative")
        if np.any(mu.real > RATE_TOL):
            raise ValueError(f"Exponents must have non-positive real part, got {mu.real.max()}")
        if merge:
            c, p, mu = _merge_terms(c, p, mu, get_settings().EXPONENT_MERGE_TOL)
        self._c = c
        self._p = p
        self._mu = mu

    @classmethod
    def _raw(cls, c: np.ndarray, p: np.ndarray, mu: np.ndarray) -> "ExpPoly":
        obj = cls.__new__(cls)
        obj._c, obj._p, obj._mu = c, p, mu
        return obj

    # ---- constructors ----

    @classmethod
    def zeros(cls, shape: Tuple[int, ...] = ()) -> "ExpPoly":
        return cls._raw(np.zeros(tuple(shape) + (0,), complex), np.zeros(0, int), np.zeros(0, complex))

    @classmethod
    def constant(cls, values: Any) -> "ExpPoly":
        values = np.asarray(values, dtype=complex)
        return cls(values[..., None], [0], [0.0])

    @classmethod
    def exponential(cls, coeff: Any, rate: float, power: int = 0) -> "ExpPoly":
        """coeff * t^power * exp(-rate t)."""
        coeff = np.asarray(coeff, dtype=complex)
        return cls(coeff[..., None], [power], [-rate])

    # ---- properties ----

    @property
    def shape(self) -> Tuple[int, ...]:
        return self._c.shape[:-1]

    @property
    def coeffs(self) -> np.ndarray:
        return self._c

    @property
    def powers(self) -> np.ndarray:
        return self._p

    @property
    def exponents(self) -> np.ndarray:
        return self._mu

    @property
    def num_terms(self) -> int:
        return int(self._p.size)

    def is_zero(self) -> bool:
        return self.num_terms == 0 or not np.any(self._c)

    def is_constant(self) -> bool:
        return bool(np.all(self._p == 0) and np.all(self._mu == 0))

    def constant_value(self) -> np.ndarray:
        return self._c.sum(axis=-1)

    # ---- evaluation ----

    def _values_at(self, t: np.ndarray) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        if self.num_terms == 0:
            return np.zeros(np.broadcast_shapes(self.shape, t.shape[:-1]) + t.shape[-1:], complex)
        if t.ndim == 1:
            basis = t[None, :] ** self._p[:, None] * np.exp(np.outer(self._mu, t))
            return self._c @ basis
        tt = t[..., None, :]
        basis = tt ** self._p[:, None] * np.exp(self._mu[:, None] * tt)
        return np.einsum("...i,...im->...m", self._c, basis)

    # ---- algebra ----

    def _mul(self, other: "ExpPoly") -> "ExpPoly":
        c = self._c[..., :, None] * other._c[..., None, :]
        c = c.reshape(c.shape[:-2] + (-1,))
        p = (self._p[:, None] + other._p[None, :]).ravel()
        mu = (self._mu[:, None] + other._mu[None, :]).ravel()
        return ExpPoly(c, p, mu)

    def _add(self, other: "ExpPoly") -> "ExpPoly":
        shape = np.broadcast_shapes(self.shape, other.shape)
        c1 = np.broadcast_to(self._c, shape + self._c.shape[-1:])
        c2 = np.broadcast_to(other._c, shape + other._c.shape[-1:])
        return ExpPoly(
            np.concatenate([c1, c2], axis=-1),
            np.concatenate([self._p, other._p]),
            np.concatenate([self._mu, other._mu]),
        )

    def derivative(self) -> "ExpPoly":
        pos = self._p > 0
        c = np.concatenate([self._c[..., pos] * self._p[pos], self._c * self._mu], axis=-1)
        p = np.concatenate([self._p[pos] - 1, self._p])
        mu = np.concatenate([self._mu[pos], self._mu])
        return ExpPoly(c, p, mu)

    def tail(self, lam: Union[float, np.ndarray]) -> "ExpPoly":
        lam = np.asarray(lam, dtype=float)
        shape = np.broadcast_shapes(self.shape, lam.shape)
        if self.is_zero():
            return ExpPoly.zeros(shape)
        nonzero = self._term_mask()
        if np.any(self._mu.real[nonzero] > -RATE_TOL):
            raise TailDivergenceError("Oscillatory tail diverges for a non-decaying exp-polynomial term")
        c, p, mu = _primitive_terms(self._c, self._p, self._mu, lam)
        return ExpPoly(c, p, mu)

    def divisors(self, lam: Union[float, np.ndarray]) -> np.ndarray:
        """|mu + i lam| for every term (the denominators of the closed-form tail)."""
        lam = np.asarray(lam, dtype=float)
        return np.abs(self._mu + 1j * lam[..., None])

    def map_coefficients(self, fn: Callable[[np.ndarray], np.ndarray]) -> "ExpPoly":
        return ExpPoly(np.asarray(fn(self._c), dtype=complex), self._p, self._mu)

    def conj(self) -> "ExpPoly":
        return ExpPoly._raw(np.conj(self._c), self._p.copy(), np.conj(self._mu))

    def _term_mask(self) -> np.ndarray:
        lead = tuple(range(self._c.ndim - 1))
        return np.any(self._c != 0, axis=lead) if lead else (self._c != 0)

    def pruned(self, threshold: float) -> "ExpPoly":
        """Drop terms whose largest coefficient magnitude is below threshold."""
        if self.num_terms == 0:
            return self
        lead = tuple(range(self._c.ndim - 1))
        peak = np.max(np.abs(self._c), axis=lead) if lead else np.abs(self._c)
        keep = peak >= threshold
        if np.all(keep):
            return self
        return ExpPoly._raw(self._c[..., keep], self._p[keep], self._mu[keep])

    # ---- bounds ----

    def sup_bound(self) -> np.ndarray:
        b = -self._mu.real
        p = self._p.astype(float)
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            peak = np.where(
                p == 0, 1.0,
                np.where(b > RATE_TOL, (p / np.where(b > RATE_TOL, b, 1.0)) ** p * np.exp(-p), np.inf),
            )
            terms = np.where(np.abs(self._c) > 0, np.abs(self._c) * peak, 0.0)
        return terms.sum(axis=-1)

    def amplitudes(self, a_target: float, power: int = 0) -> np.ndarray:
        if self.is_zero():
            return np.zeros(self.shape)
        if a_target < 0:
            raise EnvelopeError(f"Decay rate must be non-negative, got {a_target}")
        settings = get_settings()
        nz = self._term_mask()
        b = -self._mu.real - a_target
        tol = RATE_TOL * max(1.0, a_target)
        if np.any(b[nz] < -tol):
            raise EnvelopeError(
                f"Rate {a_target} exceeds the slowest decay {float(np.min(-self._mu.real[nz]))}"
            )
        flat = nz & (np.abs(b) <= tol)
        if np.any(self._p[flat] + power > 0):
            raise EnvelopeError(f"Polynomial growth prevents certifying rate {a_target} with power {power}")
        decaying = nz & (b > tol)

        if np.any(decaying):
            bd = b[decaying]
            t_end = float(np.max((self._p[decaying] + power) / bd) + 50.0 / np.min(bd))
        else:
            t_end = 1.0
        abs_c = np.abs(self._c)
        with np.errstate(over="ignore", under="ignore"):
            tail_terms = np.where(
                decaying,
                t_end ** self._p * (t_end + 1.0) ** power * np.exp(-np.where(decaying, b, 0.0) * t_end),
                np.where(flat, 1.0, 0.0),
            )
        tail_bound = abs_c @ tail_terms

        samples = np.linspace(0.0, t_end, settings.ENVELOPE_SAMPLES)
        head = _certified_sup(self._c, self._p, self._mu + a_target, power, samples, floor=tail_bound)
        return np.maximum(head, tail_bound) * (1.0 + 1e-9)

    def natural_envelope(self) -> Envelope:
        if self.is_zero():
            return Envelope(0.0, 0.0, 0)
        nz = self._term_mask()
        rates = -self._mu.real[nz]
        slowest = float(np.min(rates))
        at_slowest = np.abs(rates - slowest) <= RATE_TOL * max(1.0, slowest)
        rate = slowest
        if slowest > 0 and np.any(self._p[nz][at_slowest] > 0):
            rate = get_settings().RATE_MARGIN * slowest
        return self.certify(max(rate, 0.0), 0)

    def to_record(self) -> Dict[str, Any]:
        return {
            "kind": self.kind,
            "shape": list(self.shape),
            "coeffs_re": self._c.real.tolist(),
            "coeffs_im": self._c.imag.tolist(),
            "powers": self._p.tolist(),
            "exponents_re": self._mu.real.tolist(),
            "exponents_im": self._mu.imag.tolist(),
        }

    def __repr__(self) -> str:
        return f"<ExpPoly(shape={self.shape}, terms={self.num_terms})>"


# ==================== Rational decay ====================

class RationalDecay(TimeFn):
    """Finite sum of c * (t + 1)^(-m) with m >= 1."""

    kind = "rational"

    def __init__(self, coeffs: Any, orders: Sequence[int]) -> None:
        m = np.asarray(orders, dtype=int).ravel()
        c = np.asarray(coeffs, dtype=complex)
        if c.ndim == 0:
            c = c.reshape(1)
        if c.shape[-1] != m.size:
            raise ValueError(f"Term table mismatch: coeffs {c.shape}, orders {m.size}")
        if np.any(m < 1):
            raise ValueError("Decay orders must be >= 1")
        if m.size:
            order = np.argsort(m, kind="stable")
            m_s = m[order]
            starts = np.flatnonzero(np.r_[True, m_s[1:] != m_s[:-1]])
            c = np.add.reduceat(c[..., order], starts, axis=-1)
            m = m_s[starts]
            lead = tuple(range(c.ndim - 1))
            keep = np.any(c != 0, axis=lead) if lead else (c != 0)
            c, m = c[..., keep], m[keep]
        self._c = c
        self._m = m

    @property
    def shape(self) -> Tuple[int, ...]:
        return self._c.shape[:-1]

    @property
    def coeffs(self) -> np.ndarray:
        return self._c

    @property
    def orders(self) -> np.ndarray:
        return self._m

    def is_zero(self) -> bool:
        return self._m.size == 0 or not np.any(self._c)

    def _values_at(self, t: np.ndarray) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        if self._m.size == 0:
            return np.zeros(np.broadcast_shapes(self.shape, t.shape[:-1]) + t.shape[-1:], complex)
        if t.ndim == 1:
            return self._c @ ((t[None, :] + 1.0) ** (-self._m[:, None].astype(float)))
        basis = (t[..., None, :] + 1.0) ** (-self._m[:, None].astype(float))
        return np.einsum("...i,...im->...m", self._c, basis)

    def _mul(self, other: "RationalDecay") -> "RationalDecay":
        c = self._c[..., :, None] * other._c[..., None, :]
        c = c.reshape(c.shape[:-2] + (-1,))
        m = (self._m[:, None] + other._m[None, :]).ravel()
        return RationalDecay(c, m)

    def _add(self, other: "RationalDecay") -> "RationalDecay":
        shape = np.broadcast_shapes(self.shape, other.shape)
        c1 = np.broadcast_to(self._c, shape + self._c.shape[-1:])
        c2 = np.broadcast_to(other._c, shape + other._c.shape[-1:])
        return RationalDecay(np.concatenate([c1, c2], axis=-1), np.concatenate([self._m, other._m]))

    def derivative(self) -> "RationalDecay":
        return RationalDecay(-self._c * self._m, self._m + 1)

    def tail(self, lam: Union[float, np.ndarray]) -> TimeFn:
        lam = np.asarray(lam, dtype=float)
        shape = np.broadcast_shapes(self.shape, lam.shape)
        if self.is_zero():
            return ExpPoly.zeros(shape)
        if np.all(lam == 0):
            lead = tuple(range(self._c.ndim - 1))
            nz = np.any(self._c != 0, axis=lead) if lead else (self._c != 0)
            if np.any(nz & (self._m == 1)):
                raise TailDivergenceError("Tail of (t+1)^-1 diverges at zero frequency")
            c = -self._c / (self._m - 1).clip(min=1)
            return RationalDecay(np.broadcast_to(c, shape + c.shape[-1:]), self._m - 1)
        return QuadFn.oscillatory_tail_of(self, lam)

    def map_coefficients(self, fn: Callable[[np.ndarray], np.ndarray]) -> "RationalDecay":
        return RationalDecay(np.asarray(fn(self._c), dtype=complex), self._m)

    def conj(self) -> "RationalDecay":
        return RationalDecay(np.conj(self._c), self._m)

    def sup_bound(self) -> np.ndarray:
        return np.abs(self._c).sum(axis=-1)

    def amplitudes(self, a_target: float, power: int = 0) -> np.ndarray:
        if self.is_zero():
            return np.zeros(self.shape)
        if a_target > 0:
            raise EnvelopeError(f"Rational decay cannot certify exponential rate {a_target}")
        lead = tuple(range(self._c.ndim - 1))
        nz = np.any(self._c != 0, axis=lead) if lead else (self._c != 0)
        if np.any(self._m[nz] < power):
            raise EnvelopeError(f"Rational decay of order {int(self._m[nz].min())} cannot certify power {power}")
        # u = 1/(t+1) turns the weighted function into a polynomial in u on [0, 1]
        shift = (self._m - power).astype(float)
        samples = np.linspace(0.0, 1.0, get_settings().ENVELOPE_SAMPLES)
        return _certified_sup(self._c, shift, np.zeros(shift.size), 0, samples) * (1.0 + 1e-9)

    def natural_envelope(self) -> Envelope:
        if self.is_zero():
            return Envelope(0.0, 0.0, 0)
        lead = tuple(range(self._c.ndim - 1))
        nz = np.any(self._c != 0, axis=lead) if lead else (self._c != 0)
        return self.certify(0.0, int(self._m[nz].min()))

    def to_record(self) -> Dict[str, Any]:
        return {
            "kind": self.kind,
            "shape": list(self.shape),
            "coeffs_re": self._c.real.tolist(),
            "coeffs_im": self._c.imag.tolist(),
            "orders": self._m.tolist(),
        }

    def __repr__(self) -> str:
        return f"<RationalDecay(shape={self.shape}, orders={self._m.tolist()})>"


# ==================== Piecewise polynomials ====================

class PiecewisePoly(TimeFn):
    """
    Compactly supported piecewise exp-polynomial, zero outside [b_0, b_K].
    Piece i is an ExpPoly valid on [b_i, b_{i+1}).
    """

    kind = "piecewise"

    def __init__(self, breakpoints: Sequence[float], pieces: Sequence[ExpPoly]) -> None:
        b = np.asarray(breakpoints, dtype=float).ravel()
        if b.size < 2 or len(pieces) != b.size - 1:
            raise ValueError("PiecewisePoly needs K+1 breakpoints for K pieces")
        if np.any(np.diff(b) <= 0) or b[0] < 0:
            raise ValueError("Breakpoints must be non-negative and strictly increasing")
        shape: Tuple[int, ...] = ()
        for piece in pieces:
            shape = np.broadcast_shapes(shape, piece.shape)
        self._b = b
        self._pieces: List[ExpPoly] = [piece.broadcast_to(shape) for piece in pieces]
        self._shape = shape

    # ---- constructors ----

    @classmethod
    def bump(cls, center: float, amplitude: float, width: float) -> "PiecewisePoly":
        """a/h^4 ((t - t_l)^2 - h^2)^2 on [t_l - h, t_l + h]."""
        return cls.bumps([center], [amplitude], width)

    @classmethod
    def bumps(cls, centers: Sequence[float], amplitudes: Sequence[float],
              width: float) -> "PiecewisePoly":
        """Sum of disjoint quartic bumps sharing one half-width."""
        if width <= 0:
            raise ValueError(f"Bump half-width must be positive, got {width}")
        order = np.argsort(centers)
        centers = np.asarray(centers, dtype=float)[order]
        amplitudes = np.asarray(amplitudes, dtype=float)[order]
        if centers.size == 0:
            raise ValueError("At least one bump is required")
        if centers[0] - width < 0 or np.any(np.diff(centers) <= 2 * width):
            raise DomainError(
                f"Overlapping bumps: centers {centers.tolist()} must lie in [h, inf) "
                f"and be more than 2h = {2 * width} apart"
            )

        breaks: List[float] = []
        pieces: List[ExpPoly] = []
        h = float(width)
        for idx, (t_l, a_l) in enumerate(zip(centers, amplitudes)):
            lo, hi = t_l - h, t_l + h
            if breaks and lo > breaks[-1]:
                pieces.append(ExpPoly.zeros())
                breaks.append(lo)
            elif not breaks:
                breaks.append(lo)
            local = Polynomial([h ** 4, 0.0, -2 * h ** 2, 0.0, 1.0]) * (a_l / h ** 4)
            poly = local(Polynomial([-t_l, 1.0]))
            coef = poly.coef
            pieces.append(ExpPoly(coef, np.arange(coef.size), np.zeros(coef.size)))
            breaks.append(hi)
        return cls(breaks, pieces)

    # ---- properties ----

    @property
    def shape(self) -> Tuple[int, ...]:
        return self._shape

    @property
    def breakpoints(self) -> np.ndarray:
        return self._b

    @property
    def pieces(self) -> List[ExpPoly]:
        return list(self._pieces)

    def is_zero(self) -> bool:
        return all(piece.is_zero() for piece in self._pieces)

    def _values_at(self, t: np.ndarray) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        out_shape = np.broadcast_shapes(self._shape, t.shape[:-1]) + t.shape[-1:]
        out = np.zeros(out_shape, complex)
        last = len(self._pieces) - 1
        for i, piece in enumerate(self._pieces):
            lo, hi = self._b[i], self._b[i + 1]
            mask = (t >= lo) & ((t < hi) if i < last else (t <= hi))
            if not np.any(mask) or piece.is_zero():
                continue
            if t.ndim == 1:
                out[..., mask] = piece._values_at(t[mask])
            else:
                out = np.where(mask, piece._values_at(np.where(mask, t, lo)), out)
        return out

    # ---- algebra ----

    def _refine(self, breaks: np.ndarray) -> List[ExpPoly]:
        """Pieces of this function on a refined breakpoint set (zero outside the support)."""
        pieces: List[ExpPoly] = []
        for lo, hi in zip(breaks[:-1], breaks[1:]):
            mid = 0.5 * (lo + hi)
            idx = np.searchsorted(self._b, mid, side="right") - 1
            if 0 <= idx < len(self._pieces):
                pieces.append(self._pieces[idx])
            else:
                pieces.append(ExpPoly.zeros(self._shape))
        return pieces

    def _combine(self, other: "PiecewisePoly",
                 op: Callable[[ExpPoly, ExpPoly], ExpPoly]) -> "PiecewisePoly":
        breaks = np.union1d(self._b, other._b)
        left = self._refine(breaks)
        right = other._refine(breaks)
        return PiecewisePoly(breaks, [op(x, y) for x, y in zip(left, right)])

    def _mul(self, other: Union["PiecewisePoly", ExpPoly]) -> "PiecewisePoly":
        if isinstance(other, ExpPoly):
            return PiecewisePoly(self._b, [piece._mul(other) for piece in self._pieces])
        return self._combine(other, lambda x, y: x._mul(y))

    def _add(self, other: "PiecewisePoly") -> "PiecewisePoly":
        return self._combine(other, lambda x, y: x._add(y))

    def derivative(self) -> "PiecewisePoly":
        self._check_differentiable()
        return PiecewisePoly(self._b, [piece.derivative() for piece in self._pieces])

    def _check_differentiable(self) -> None:
        scale = max(1.0, float(np.max(self.sup_bound())))
        zero = ExpPoly.zeros(self._shape)
        pieces = [zero] + self._pieces + [zero]
        for i, t_b in enumerate(self._b):
            if i == 0 and t_b == 0.0:
                continue
            left, right = pieces[i], pieces[i + 1]
            for order in range(2):
                lv = left._values_at(np.array([t_b]))
                rv = right._values_at(np.array([t_b]))
                if np.max(np.abs(lv - rv)) > 1e-9 * scale * max(1.0, t_b) ** 4:
                    what = "value" if order == 0 else "derivative"
                    raise DifferentiabilityError(
                        f"PiecewisePoly {what} jumps at breakpoint t={t_b:.6g}"
                    )
                left, right = left.derivative(), right.derivative()

    def tail(self, lam: Union[float, np.ndarray]) -> "PiecewisePoly":
        lam = np.asarray(lam, dtype=float)
        shape = np.broadcast_shapes(self._shape, lam.shape)
        lam_b = np.broadcast_to(lam, shape)
        distinct = np.unique(lam_b)

        primitives: List[ExpPoly] = []
        for piece in self._pieces:
            if piece.is_zero():
                primitives.append(ExpPoly.zeros(shape))
            else:
                primitives.append(ExpPoly(*_primitive_terms(piece.coeffs, piece.powers, piece.exponents, lam)))

        def g_at(k: int, t_b: float) -> np.ndarray:
            return np.exp(1j * lam_b * t_b) * primitives[k]._values_at(np.array([t_b]))[..., 0]

        integrals = [g_at(k, self._b[k + 1]) - g_at(k, self._b[k]) for k in range(len(primitives))]
        suffix = np.zeros(shape, complex)
        anchors: List[np.ndarray] = [np.zeros(shape, complex)] * len(primitives)
        for k in range(len(primitives) - 1, -1, -1):
            anchors[k] = g_at(k, self._b[k + 1]) + suffix
            suffix = suffix + integrals[k]

        def oscillation(weight: np.ndarray) -> ExpPoly:
            # -weight * exp(-i lam t), one exponent per distinct frequency
            c = np.stack([np.where(lam_b == v, -weight, 0.0) for v in distinct], axis=-1)
            return ExpPoly(c, np.zeros(distinct.size, int), -1j * distinct)

        pieces = [primitives[k]._add(oscillation(anchors[k])) for k in range(len(primitives))]
        breaks = list(self._b)
        if self._b[0] > 0:
            pieces.insert(0, oscillation(suffix))
            breaks.insert(0, 0.0)
        return PiecewisePoly(breaks, pieces)

    def map_coefficients(self, fn: Callable[[np.ndarray], np.ndarray]) -> "PiecewisePoly":
        return PiecewisePoly(self._b, [piece.map_coefficients(fn) for piece in self._pieces])

    def conj(self) -> "PiecewisePoly":
        return PiecewisePoly(self._b, [piece.conj() for piece in self._pieces])

    # ---- bounds ----

    def sup_bound(self) -> np.ndarray:
        bound = np.zeros(self._shape)
        for i, piece in enumerate(self._pieces):
            if piece.is_zero():
                continue
            hi = max(self._b[i + 1], 1.0)
            bound = np.maximum(bound, np.abs(piece.coeffs) @ (hi ** piece.powers.astype(float)))
        return bound

    def amplitudes(self, a_target: float, power: int = 0) -> np.ndarray:
        if self.is_zero():
            return np.zeros(self._shape)
        per_piece = max(5, get_settings().ENVELOPE_SAMPLES // len(self._pieces)) | 1
        amps = np.zeros(self._shape)
        for i, piece in enumerate(self._pieces):
            if piece.is_zero():
                continue
            coeffs = np.broadcast_to(piece.coeffs, self._shape + piece.coeffs.shape[-1:])
            samples = np.linspace(self._b[i], self._b[i + 1], per_piece)
            amps = np.maximum(amps, _certified_sup(coeffs, piece.powers, piece.exponents + a_target,
                                                   power, samples))
        return amps * (1.0 + 1e-9)

    def natural_envelope(self) -> Envelope:
        return self.certify(0.0, 0)

    def to_record(self) -> Dict[str, Any]:
        return {
            "kind": self.kind,
            "shape": list(self._shape),
            "breakpoints": self._b.tolist(),
            "pieces": [piece.to_record() for piece in self._pieces],
        }

    def __repr__(self) -> str:
        return f"<PiecewisePoly(shape={self._shape}, pieces={len(self._pieces)})>"


# ==================== Quadrature-backed functions ====================

def _oscillatory_integral(f: TimeFn, lam: np.ndarray, t: np.ndarray) -> np.ndarray:
    """-int_0^inf e^{i lam u} f(t + u) du, elementwise, by adaptive quadrature."""
    settings = get_settings()
    shape = np.broadcast_shapes(f.shape, lam.shape)
    f_b = f.broadcast_to(shape)
    lam_b = np.broadcast_to(lam, shape)
    out = np.zeros(shape + t.shape, complex)
    for idx in np.ndindex(*shape) if shape else [()]:
        elem = f_b.element(idx) if shape else f_b
        freq = float(lam_b[idx])
        for j, t0 in enumerate(t):
            def re(u: float) -> float:
                return float(np.real(elem.value(t0 + u)))

            def im(u: float) -> float:
                return float(np.imag(elem.value(t0 + u)))

            opts = {"epsabs": settings.QUAD_TOL, "limit": 200}
            if freq == 0.0:
                val = integrate.quad(re, 0.0, np.inf, **opts)[0] + 1j * integrate.quad(im, 0.0, np.inf, **opts)[0]
            else:
                w = abs(freq)
                sgn = math.copysign(1.0, freq)
                cos_re = integrate.quad(re, 0.0, np.inf, weight="cos", wvar=w, epsabs=settings.QUAD_TOL)[0]
                cos_im = integrate.quad(im, 0.0, np.inf, weight="cos", wvar=w, epsabs=settings.QUAD_TOL)[0]
                sin_re = sgn * integrate.quad(re, 0.0, np.inf, weight="sin", wvar=w, epsabs=settings.QUAD_TOL)[0]
                sin_im = sgn * integrate.quad(im, 0.0, np.inf, weight="sin", wvar=w, epsabs=settings.QUAD_TOL)[0]
                val = (cos_re - sin_im) + 1j * (cos_im + sin_re)
            out[idx + (j,)] = -val
    return out


class QuadFn(TimeFn):
    """
    Chebyshev interpolant in u = t / (t + L) on [0, t_max], with the exact source used beyond t_max.
    The stored envelope is certified from the closed forms the source was built from.
    """

    kind = "quad"

    def __init__(self, coeffs: np.ndarray, t_max: float, time_scale: float, envelope: Envelope,
                 source: Optional[Callable[[np.ndarray], np.ndarray]] = None,
                 error: float = 0.0) -> None:
        self._coeffs = np.asarray(coeffs, dtype=complex)
        self._t_max = float(t_max)
        self._scale = float(time_scale)
        self._envelope = envelope
        self._source = source
        self._error = float(error)

    # ---- constructors ----

    @classmethod
    def from_callable(cls, source: Callable[[np.ndarray], np.ndarray], shape: Tuple[int, ...],
                      envelope: Envelope) -> "QuadFn":
        """
        Adaptive Chebyshev interpolation of a callable returning (*shape, m) arrays.

        Args:
            source: Exact (possibly slow) evaluator on 1-D time arrays
            shape: Leading shape of the values
            envelope: Certified envelope of the source

        Returns:
            QuadFn approximating the source
        """
        settings = get_settings()
        scale = 1.0 / envelope.a if envelope.a > 0 else 1.0
        t_max = settings.QUAD_T_MAX_FACTOR * scale
        u_max = t_max / (t_max + scale)
        degree = 16
        coeffs = np.zeros(tuple(shape) + (1,), complex)
        tail_mag = np.inf
        while degree + 1 <= settings.QUAD_MAX_NODES:
            x = cheb.chebpts1(degree + 1)
            u = (x + 1.0) * u_max / 2.0
            t = scale * u / (1.0 - u)
            y = np.asarray(source(t), dtype=complex).reshape(tuple(shape) + (degree + 1,))
            vander = cheb.chebvander(x, degree)
            coeffs = y @ vander
            coeffs[..., 0] /= degree + 1
            coeffs[..., 1:] /= (degree + 1) / 2.0
            magnitude = max(float(np.max(np.abs(coeffs))), 1e-300)
            tail_mag = float(np.max(np.abs(coeffs[..., -3:])))
            if tail_mag <= settings.QUAD_TOL * magnitude:
                break
            degree *= 2
        else:
            logger.warning(
                f"QuadFn interpolation did not converge (tail coefficient {tail_mag:.3e}); keeping degree {degree // 2}"
            )
        return cls(coeffs, t_max, scale, envelope, source, tail_mag)

    @classmethod
    def from_timefn(cls, f: TimeFn) -> "QuadFn":
        if isinstance(f, QuadFn):
            return f
        return cls.from_callable(f._values_at, f.shape, f.natural_envelope())

    @classmethod
    def oscillatory_tail_of(cls, f: TimeFn, lam: np.ndarray) -> "QuadFn":
        env = f.natural_envelope()
        if env.a > 0:
            tail_env = Envelope(env.M / env.a, env.a, env.power)
        elif env.power >= 2:
            tail_env = Envelope(env.M / (env.power - 1), 0.0, env.power - 1)
        elif env.power == 1 and isinstance(f, RationalDecay) and np.all(np.asarray(lam) != 0):
            # by parts: |c(t)| <= (|f(t)| + int_t^inf |f'|) / |lam|, and int_t^inf |f'| <= sum|c_m| (t+1)^-1
            slope = float(np.max(f.sup_bound()))
            tail_env = Envelope((env.M + slope) / float(np.min(np.abs(lam))), 0.0, 1)
        else:
            raise TailDivergenceError(f"No convergent tail for envelope {env}")
        shape = np.broadcast_shapes(f.shape, np.shape(lam))
        logger.debug(f"Oscillatory tail by quadrature for {f!r}")
        return cls.from_callable(lambda t: _oscillatory_integral(f, np.asarray(lam, float), t), shape, tail_env)

    # ---- properties ----

    @property
    def shape(self) -> Tuple[int, ...]:
        return self._coeffs.shape[:-1]

    @property
    def envelope(self) -> Envelope:
        return self._envelope

    @property
    def t_max(self) -> float:
        return self._t_max

    @property
    def error(self) -> float:
        return self._error

    def is_zero(self) -> bool:
        return not np.any(self._coeffs) and self._envelope.M == 0

    def _x_of(self, t: np.ndarray) -> np.ndarray:
        u = t / (t + self._scale)
        u_max = self._t_max / (self._t_max + self._scale)
        return 2.0 * u / u_max - 1.0

    def _interp(self, t: np.ndarray, coeffs: np.ndarray) -> np.ndarray:
        x = self._x_of(t)
        c = np.moveaxis(coeffs, -1, 0)
        if t.ndim == 1:
            return cheb.chebval(x, c)
        # per-element times: evaluate the Clenshaw recursion with broadcasting
        c = coeffs[..., None, :]
        x2 = 2.0 * x
        b1 = np.zeros(np.broadcast_shapes(coeffs.shape[:-1], x.shape[:-1]) + x.shape[-1:], complex)
        b2 = np.zeros_like(b1)
        for k in range(coeffs.shape[-1] - 1, 0, -1):
            b1, b2 = c[..., k] + x2 * b1 - b2, b1
        return c[..., 0] + x * b1 - b2

    def _values_at(self, t: np.ndarray) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        inside = t <= self._t_max
        if np.all(inside):
            return self._interp(t, self._coeffs)
        if self._source is None:
            raise DomainError(f"QuadFn without a source evaluated beyond t_max={self._t_max}")
        if t.ndim == 1:
            out = np.empty(self.shape + t.shape, complex)
            out[..., inside] = self._interp(t[inside], self._coeffs)
            out[..., ~inside] = np.asarray(self._source(t[~inside]))
            return out
        flat = t.reshape(-1)
        vals = np.asarray(self._source(flat)).reshape(self.shape + (flat.size,))
        idx = np.arange(flat.size).reshape(t.shape)
        outside = np.take_along_axis(vals, np.broadcast_to(idx, self.shape + t.shape[-1:]).copy(), axis=-1)
        return np.where(inside, self._interp(np.where(inside, t, 0.0), self._coeffs), outside)

    # ---- algebra ----

    @classmethod
    def product(cls, f: TimeFn, g: TimeFn) -> "QuadFn":
        ef, eg = f.natural_envelope(), g.natural_envelope()
        env = Envelope(ef.M * eg.M, ef.a + eg.a, ef.power + eg.power)
        shape = np.broadcast_shapes(f.shape, g.shape)
        return cls.from_callable(lambda t: f._values_at(t) * g._values_at(t), shape, env)

    @classmethod
    def total(cls, f: TimeFn, g: TimeFn) -> "QuadFn":
        ef, eg = f.natural_envelope(), g.natural_envelope()
        env = Envelope(ef.M + eg.M, min(ef.a, eg.a), min(ef.power, eg.power))
        shape = np.broadcast_shapes(f.shape, g.shape)
        return cls.from_callable(lambda t: f._values_at(t) + g._values_at(t), shape, env)

    def derivative(self) -> "QuadFn":
        u_max = self._t_max / (self._t_max + self._scale)
        dcoeffs = np.moveaxis(cheb.chebder(np.moveaxis(self._coeffs, -1, 0)), 0, -1)

        def source(t: np.ndarray) -> np.ndarray:
            t = np.asarray(t, dtype=float)
            out = np.empty(self.shape + t.shape, complex)
            inside = t <= self._t_max
            du_dt = self._scale / (t + self._scale) ** 2
            out[..., inside] = self._interp(t[inside], dcoeffs) * (2.0 / u_max) * du_dt[inside]
            if np.any(~inside):
                step = 1e-5 * (1.0 + t[~inside])
                plus = self._values_at(t[~inside] + step)
                minus = self._values_at(t[~inside] - step)
                out[..., ~inside] = (plus - minus) / (2.0 * step)
            return out

        far = np.linspace(self._t_max, 2.0 * self._t_max, 17)
        weight = np.exp(self._envelope.a * far) * (far + 1.0) ** self._envelope.power
        m_far = float(np.max(np.abs(source(far)) * weight)) if far.size else 0.0
        env = Envelope(max(2.0 * m_far, 1e-300), self._envelope.a, self._envelope.power)
        return QuadFn.from_callable(source, self.shape, env)

    def tail(self, lam: Union[float, np.ndarray]) -> "QuadFn":
        return QuadFn.oscillatory_tail_of(self, np.asarray(lam, dtype=float))

    def map_coefficients(self, fn: Callable[[np.ndarray], np.ndarray]) -> "QuadFn":
        size = self.size
        unit = np.eye(size).reshape(self.shape + (size,))
        gain = float(np.max(np.abs(np.asarray(fn(unit))).sum(axis=-1))) if size else 0.0
        source = None
        if self._source is not None:
            old = self._source

            def source(t: np.ndarray) -> np.ndarray:
                return np.asarray(fn(np.asarray(old(t))))

        return QuadFn(np.asarray(fn(self._coeffs), complex), self._t_max, self._scale,
                      self._envelope.scaled(gain), source, self._error * gain)

    def conj(self) -> "QuadFn":
        source = None
        if self._source is not None:
            old = self._source

            def source(t: np.ndarray) -> np.ndarray:
                return np.conj(old(t))

        return QuadFn(np.conj(self._coeffs), self._t_max, self._scale, self._envelope, source, self._error)

    # ---- bounds ----

    def sup_bound(self) -> np.ndarray:
        samples = np.linspace(0.0, self._t_max, 257)
        sampled = np.max(np.abs(self._interp(samples, self._coeffs)), axis=-1)
        return np.maximum(sampled * (1.0 + 1e-6) + self._error, self._envelope.M)

    def amplitudes(self, a_target: float, power: int = 0) -> np.ndarray:
        env = self._envelope
        if a_target > env.a + RATE_TOL or (abs(a_target - env.a) <= RATE_TOL and power > env.power):
            raise EnvelopeError(f"QuadFn certifies {env}, cannot certify rate {a_target} with power {power}")
        b = env.a - a_target
        q = power - env.power
        t_star = max(self._t_max, q / b - 1.0) if (b > RATE_TOL and q > 0) else self._t_max
        tail_bound = env.M * math.exp(-b * t_star) * (t_star + 1.0) ** q

        def weighted(t: np.ndarray) -> np.ndarray:
            vals = self._interp(t, self._coeffs)
            return (np.abs(vals) + self._error) * np.exp(a_target * t) * (t + 1.0) ** power

        samples = np.linspace(0.0, self._t_max, get_settings().ENVELOPE_SAMPLES)
        return np.maximum(self._sup_weighted(weighted, samples), tail_bound)

    def natural_envelope(self) -> Envelope:
        return self._envelope

    def to_record(self) -> Dict[str, Any]:
        return {
            "kind": self.kind,
            "shape": list(self.shape),
            "coeffs_re": self._coeffs.real.tolist(),
            "coeffs_im": self._coeffs.imag.tolist(),
            "t_max": self._t_max,
            "time_scale": self._scale,
            "envelope": self._envelope.to_dict(),
            "error": self._error,
        }

    def __repr__(self) -> str:
        return f"<QuadFn(shape={self.shape}, degree={self._coeffs.shape[-1] - 1}, t_max={self._t_max:.3g})>"


# ==================== Dispatch ====================

def _capped(f: ExpPoly) -> TimeFn:
    cap = get_settings().EXPPOLY_TERM_CAP
    if f.num_terms > cap:
        logger.warning(f"ExpPoly term count {f.num_terms} exceeds cap {cap}; promoting to QuadFn")
        return QuadFn.from_timefn(f)
    return f


def zeros(shape: Tuple[int, ...] = ()) -> ExpPoly:
    return ExpPoly.zeros(shape)


def prune(f: TimeFn, threshold: float) -> TimeFn:
    """Drop negligible exp-polynomial terms; other classes are returned unchanged."""
    if isinstance(f, ExpPoly):
        return f.pruned(threshold)
    if isinstance(f, PiecewisePoly):
        return PiecewisePoly(f.breakpoints, [piece.pruned(threshold) for piece in f.pieces])
    return f


def multiply(f: TimeFn, g: TimeFn) -> TimeFn:
    """
    Product of two time functions.

    Same-class products stay exact; compactly supported pieces absorb exp-polynomials;
    every other mix is promoted to a QuadFn.
    """
    shape = np.broadcast_shapes(f.shape, g.shape)
    if f.is_zero() or g.is_zero():
        return ExpPoly.zeros(shape)
    if isinstance(f, ExpPoly) and f.is_constant():
        return g.scale(f.constant_value()).broadcast_to(shape)
    if isinstance(g, ExpPoly) and g.is_constant():
        return f.scale(g.constant_value()).broadcast_to(shape)
    if isinstance(f, ExpPoly) and isinstance(g, ExpPoly):
        return _capped(f._mul(g))
    if isinstance(f, RationalDecay) and isinstance(g, RationalDecay):
        return f._mul(g)
    if isinstance(f, PiecewisePoly) and isinstance(g, (PiecewisePoly, ExpPoly)):
        return f._mul(g)
    if isinstance(g, PiecewisePoly) and isinstance(f, ExpPoly):
        return g._mul(f)
    return QuadFn.product(f, g)


def add(f: TimeFn, g: TimeFn) -> TimeFn:
    """Sum of two time functions with the same promotion rules as multiply."""
    shape = np.broadcast_shapes(f.shape, g.shape)
    if f.is_zero():
        return g.broadcast_to(shape)
    if g.is_zero():
        return f.broadcast_to(shape)
    if isinstance(f, ExpPoly) and isinstance(g, ExpPoly):
        return _capped(f._add(g))
    if isinstance(f, RationalDecay) and isinstance(g, RationalDecay):
        return f._add(g)
    if isinstance(f, PiecewisePoly) and isinstance(g, PiecewisePoly):
        return f._add(g)
    return QuadFn.total(f, g)


def time_derivative(f: TimeFn) -> TimeFn:
    return f.derivative()


def oscillatory_tail(f: TimeFn, lam: Union[float, np.ndarray]) -> TimeFn:
    """
    Decaying solution of c' + i lam c = f.

    Args:
        f: Source time function
        lam: Frequency (scalar or array broadcastable to f.shape)

    Returns:
        c(t) = -int_t^inf exp(i lam (s - t)) f(s) ds

    Raises:
        TailDivergenceError: If the integral does not converge
    """
    return f.tail(lam)


def certify_envelope(f: TimeFn, a_target: float, power: int = 0) -> Envelope:
    """
    Certified envelope of f at the requested rate.

    Raises:
        EnvelopeError: If f does not decay at least that fast
    """
    return f.certify(a_target, power)


def stack(functions: Sequence[TimeFn]) -> TimeFn:
    """Stack same-shape time functions along a new leading axis."""
    count = len(functions)
    if count == 0:
        return ExpPoly.zeros((0,))
    shape = functions[0].shape
    total: TimeFn = ExpPoly.zeros((count,) + shape)
    for i, fn in enumerate(functions):
        def place(c: np.ndarray, i: int = i) -> np.ndarray:
            out = np.zeros((count,) + c.shape, complex)
            out[i] = c
            return out

        total = add(total, fn.broadcast_to(shape).map_coefficients(place))
    return total


def from_record(record: Dict[str, Any]) -> TimeFn:
    """Rebuild a time function from its to_record dictionary."""
    kind = record["kind"]
    shape = tuple(record.get("shape", ()))
    if kind == ExpPoly.kind:
        c = np.asarray(record["coeffs_re"]) + 1j * np.asarray(record["coeffs_im"])
        mu = np.asarray(record["exponents_re"]) + 1j * np.asarray(record["exponents_im"])
        return ExpPoly(c.reshape(shape + (len(record["powers"]),)), record["powers"], mu, merge=False)
    if kind == RationalDecay.kind:
        c = np.asarray(record["coeffs_re"]) + 1j * np.asarray(record["coeffs_im"])
        return RationalDecay(c.reshape(shape + (len(record["orders"]),)), record["orders"])
    if kind == PiecewisePoly.kind:
        pieces = [from_record(piece) for piece in record["pieces"]]
        return PiecewisePoly(record["breakpoints"], pieces)  # type: ignore[arg-type]
    if kind == QuadFn.kind:
        c = np.asarray(record["coeffs_re"]) + 1j * np.asarray(record["coeffs_im"])
        env = record["envelope"]
        return QuadFn(c, record["t_max"], record["time_scale"],
                      Envelope(env["M"], env["a"], env["power"]), None, record.get("error", 0.0))
    raise ValueError(f"Unknown TimeFn kind: {kind}")
