"""
Near-identity canonical transformations built from Lie series or Lie transforms.

A map sends new coordinates to old ones: x_old = x_new + displacement(x_new, t).
Time is untouched; only (I, phi) are moved.
"""

from dataclasses import dataclass, field
from typing import Any, Dict, Literal, Optional, Sequence, Tuple

import numpy as np

from models.errors import DomainError
from models.series import Box, FourierTaylorSeries


@dataclass(frozen=True)
class CoordinateShift:
    """Displacement series of every action and angle produced by one generator."""

    action: Tuple[FourierTaylorSeries, ...]
    angle: Tuple[FourierTaylorSeries, ...]
    eta: Optional[FourierTaylorSeries] = None

    def displacement(self, action: Sequence[float], angle: Sequence[float],
                     t: float) -> Tuple[np.ndarray, np.ndarray]:
        d_action = np.array([s.evaluate(action, angle, t).real for s in self.action])
        d_angle = np.array([s.evaluate(action, angle, t).real for s in self.angle])
        return d_action, d_angle

    def eta_displacement(self, action: Sequence[float], angle: Sequence[float], t: float) -> float:
        if self.eta is None:
            return 0.0
        return float(self.eta.evaluate(action, angle, t).real)

    def size(self) -> float:
        """Largest ledger-free coefficient bound, used for logging only."""
        values = [float(np.max(c.sup_bound())) for s in self.action + self.angle for _, c in s.items()]
        return max(values) if values else 0.0


@dataclass(frozen=True)
class NearIdentityMap:
    """
    Composition of near-identity stages.

    Attributes:
        stages: Shifts in application order (the first stage acts on the input point first)
        kind: "lie_series" for Birkhoff products of exponentials, "lie_transform" for one Lie transform
        direction: "forward" (new -> old) or "inverse" (old -> new)
        box: Real action box the map is valid on
        margin: Complex-strip half-width around the box also accepted
        inverse_stages: Exact inverse stages (Lie series only)
        iterations: Fixed-point iterations for inverting a Lie transform
    """

    stages: Tuple[CoordinateShift, ...]
    kind: Literal["lie_series", "lie_transform"]
    direction: Literal["forward", "inverse"]
    box: Box
    margin: float
    inverse_stages: Tuple[CoordinateShift, ...] = field(default=())
    iterations: int = 8

    @property
    def is_identity(self) -> bool:
        return not self.stages

    def _check_domain(self, action: Sequence[float], t: float) -> None:
        if t < 0:
            raise DomainError(f"Near-identity map evaluated at negative time {t}")
        for value, (lo, hi) in zip(action, self.box):
            if value < lo - self.margin or value > hi + self.margin:
                raise DomainError(
                    f"Action {tuple(action)} leaves the box {self.box} enlarged by {self.margin}"
                )

    def displacement(self, action: Sequence[float], angle: Sequence[float],
                     t: float) -> Tuple[np.ndarray, np.ndarray]:
        """
        Total displacement of the image point from the input point.

        Accumulating displacements separately keeps tiny shifts exact when the
        actions themselves are of order one.
        """
        action = np.asarray(action, dtype=float)
        angle = np.asarray(angle, dtype=float)
        self._check_domain(action, t)
        total_a = np.zeros_like(action)
        total_p = np.zeros_like(angle)
        if self.direction == "inverse" and self.kind == "lie_transform":
            return self._fixed_point(action, angle, t)
        for stage in self.stages:
            d_a, d_p = stage.displacement(action + total_a, angle + total_p, t)
            total_a = total_a + d_a
            total_p = total_p + d_p
        return total_a, total_p

    def _fixed_point(self, action: np.ndarray, angle: np.ndarray,
                     t: float) -> Tuple[np.ndarray, np.ndarray]:
        # solve y + delta(y) = x for y, returning y - x = -delta(y)
        d_a = np.zeros_like(action)
        d_p = np.zeros_like(angle)
        for _ in range(self.iterations):
            shift_a = np.zeros_like(action)
            shift_p = np.zeros_like(angle)
            for stage in self.stages:
                s_a, s_p = stage.displacement(action + d_a, angle + d_p, t)
                shift_a, shift_p = shift_a + s_a, shift_p + s_p
            d_a, d_p = -shift_a, -shift_p
        return d_a, d_p

    def map_point(self, action: Sequence[float], angle: Sequence[float],
                  t: float) -> Tuple[np.ndarray, np.ndarray]:
        """
        Image of a point.

        Args:
            action: Actions of the input point
            angle: Angles of the input point
            t: Time (>= 0)

        Returns:
            Tuple of (actions, angles) of the image

        Raises:
            DomainError: If the point lies outside the validity domain
        """
        d_a, d_p = self.displacement(action, angle, t)
        return np.asarray(action, dtype=float) + d_a, np.asarray(angle, dtype=float) + d_p

    def map_extended(self, action: Sequence[float], angle: Sequence[float], eta: float,
                     t: float) -> Tuple[np.ndarray, np.ndarray, float]:
        """
        Image of an extended point (I, phi, eta) at time t.

        Eta shifts are accumulated along the same intermediate points as the
        actions and angles; for an inverted Lie transform they are evaluated
        at the fixed-point preimage.
        """
        action = np.asarray(action, dtype=float)
        angle = np.asarray(angle, dtype=float)
        d_a, d_p = self.displacement(action, angle, t)
        d_eta = 0.0
        if self.direction == "inverse" and self.kind == "lie_transform":
            for stage in self.stages:
                d_eta -= stage.eta_displacement(action + d_a, angle + d_p, t)
        else:
            cur_a, cur_p = action.copy(), angle.copy()
            for stage in self.stages:
                d_eta += stage.eta_displacement(cur_a, cur_p, t)
                s_a, s_p = stage.displacement(cur_a, cur_p, t)
                cur_a, cur_p = cur_a + s_a, cur_p + s_p
        return action + d_a, angle + d_p, float(eta) + d_eta

    def inverse(self) -> "NearIdentityMap":
        flipped = "inverse" if self.direction == "forward" else "forward"
        if self.kind == "lie_series":
            return NearIdentityMap(self.inverse_stages, self.kind, flipped, self.box, self.margin,
                                   self.stages, self.iterations)
        return NearIdentityMap(self.stages, self.kind, flipped, self.box, self.margin,
                               self.inverse_stages, self.iterations)

    def describe(self) -> Dict[str, Any]:
        return {
            "kind": self.kind,
            "direction": self.direction,
            "stages": len(self.stages),
            "box": [list(b) for b in self.box],
            "margin": self.margin,
            "stage_sizes": [stage.size() for stage in self.stages],
        }

    def __repr__(self) -> str:
        return f"<NearIdentityMap(kind={self.kind}, direction={self.direction}, stages={len(self.stages)})>"


def identity_map(box: Box, margin: float) -> NearIdentityMap:
    return NearIdentityMap((), "lie_series", "forward", box, margin)
