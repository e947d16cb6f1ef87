"""
Dynamics Service.
Integrates the equations of motion of h(I) + hat_epsilon f(I, phi, t) and measures
action drift and normal-form conservation against the theoretical bounds.
"""

import math
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy.integrate import solve_ivp

from models.errors import DomainError, IntegrationError
from models.hamiltonian import ExtendedHamiltonian
from models.parameters import StabilityBound
from models.reports import DriftReport, NormalFormCheck
from models.transform import NearIdentityMap
from services.base_service import BaseService


@dataclass(frozen=True)
class Trajectory:
    """
    Sampled solution of the equations of motion.

    Angles are stored unwrapped. scipy does not expose rejected steps, so
    rejected_steps stays None; the local error per step is controlled by (rtol, atol).
    approx_steps is nfev / 12 for DOP853 (nfev for other methods). It also counts rejected
    attempts and the initial step selection, so it overestimates the accepted steps.
    """

    t: np.ndarray
    action: np.ndarray
    angle: np.ndarray
    energy: np.ndarray
    nfev: int
    approx_steps: int
    rtol: float
    atol: float
    method: str
    rejected_steps: Optional[int] = None

    @property
    def n(self) -> int:
        return self.action.shape[1]

    @property
    def horizon(self) -> float:
        return float(abs(self.t[-1] - self.t[0]))

    def to_frame(self) -> pd.DataFrame:
        """Trajectory table (t, I_1..I_n, phi_1..phi_n, energy)."""
        data = {"t": self.t}
        for i in range(self.n):
            data[f"I_{i + 1}"] = self.action[:, i]
        for i in range(self.n):
            data[f"phi_{i + 1}"] = self.angle[:, i]
        data["energy"] = self.energy
        return pd.DataFrame(data)

    def __repr__(self) -> str:
        return f"<Trajectory(n={self.n}, samples={self.t.size}, T={self.horizon:.3g}, nfev={self.nfev})>"


class DynamicsService(BaseService):
    """
    Service for trajectories and stability measurements.
    """

    def _initialize(self) -> None:
        """Initialize dynamics service resources."""
        self._method = self.settings.INTEGRATOR_METHOD
        self._rtol = self.settings.INTEGRATOR_RTOL
        self._atol = self.settings.INTEGRATOR_ATOL
        self._samples = self.settings.TRAJECTORY_SAMPLES
        self.logger.info("DynamicsService initialized")

    # ==================== Integration ====================

    @staticmethod
    def vector_field(H: ExtendedHamiltonian, t: float, y: np.ndarray) -> np.ndarray:
        """dI/dt = -hat_eps f_phi, dphi/dt = omega(I) + hat_eps f_I."""
        n = H.n
        action, angle = y[:n], y[n:]
        _, d_action, d_angle = H.perturbation.evaluate_with_gradient(action, angle, max(t, 0.0))
        eps = H.hat_epsilon
        return np.concatenate([-eps * d_angle, H.frequency(action) + eps * d_action])

    def integrate(self, H: ExtendedHamiltonian, action0: Sequence[float], angle0: Sequence[float],
                  T: float, rtol: Optional[float] = None, atol: Optional[float] = None,
                  t_start: float = 0.0, samples: Optional[int] = None) -> Trajectory:
        """
        Integrate from t_start to T (backwards when T < t_start).

        Args:
            H: Hamiltonian
            action0: Initial actions
            angle0: Initial angles
            T: Final time (>= 0)
            rtol: Relative tolerance (defaults to INTEGRATOR_RTOL)
            atol: Absolute tolerance (defaults to INTEGRATOR_ATOL)
            t_start: Initial time (>= 0)
            samples: Number of output samples (defaults to TRAJECTORY_SAMPLES)

        Returns:
            Trajectory sampled on an even grid

        Raises:
            IntegrationError: If the integrator aborts (step-size underflow)
        """
        if T < 0 or t_start < 0 or T == t_start:
            raise ValueError(f"Need distinct non-negative times, got t_start={t_start}, T={T}")
        action0 = np.asarray(action0, dtype=float)
        angle0 = np.asarray(angle0, dtype=float)
        if action0.shape != (H.n,) or angle0.shape != (H.n,):
            raise ValueError(f"Initial condition does not match n={H.n}")
        rtol = self._rtol if rtol is None else rtol
        atol = self._atol if atol is None else atol
        count = self._samples if samples is None else int(samples)
        t_eval = np.linspace(t_start, T, count)

        sol = solve_ivp(
            lambda t, y: self.vector_field(H, t, y),
            (t_start, T),
            np.concatenate([action0, angle0]),
            method=self._method,
            t_eval=t_eval,
            rtol=rtol,
            atol=atol,
        )
        if sol.status < 0:
            last = sol.y[:, -1] if sol.y.size else np.concatenate([action0, angle0])
            state = {
                "t": float(sol.t[-1]) if sol.t.size else t_start,
                "action": last[:H.n].tolist(),
                "angle": last[H.n:].tolist(),
                "nfev": int(sol.nfev),
            }
            self.logger.error(f"Integration aborted: {sol.message}")
            raise IntegrationError(f"Integrator failed: {sol.message}", state)

        action = sol.y[:H.n].T
        angle = sol.y[H.n:].T
        energy = np.array([H.total_energy(a, p, t) for a, p, t in zip(action, angle, sol.t)])
        # 12 field evaluations per DOP853 step attempt
        approx_steps = int(sol.nfev // 12) if self._method == "DOP853" else int(sol.nfev)
        self.logger.info(f"Integration finished: T={T:.4g}, nfev={sol.nfev}")
        return Trajectory(t=sol.t, action=action, angle=angle, energy=energy, nfev=int(sol.nfev),
                          approx_steps=approx_steps, rtol=rtol, atol=atol, method=self._method)

    def initial_conditions(self, box: Sequence[Tuple[float, float]], count: int,
                           seed: int = 0) -> List[Tuple[np.ndarray, np.ndarray]]:
        """Deterministic spread of (I, phi) across the interior of the box."""
        rng = np.random.default_rng(seed)
        lo = np.array([b[0] for b in box])
        hi = np.array([b[1] for b in box])
        out = []
        for i in range(count):
            frac = (i + 0.5) / count
            action = lo + (hi - lo) * (0.1 + 0.8 * frac)
            out.append((action, rng.uniform(0.0, 2 * np.pi, lo.size)))
        return out

    # ==================== Drift ====================

    def measure_drift(self, traj: Trajectory, bound: Optional[StabilityBound] = None,
                      required_horizon: Optional[float] = None,
                      bound_value: Optional[float] = None) -> DriftReport:
        """
        sup_t |I(t) - I(0)| against the predicted stability bound.

        Args:
            traj: Trajectory starting at the initial condition
            bound: Stability bound from the constants service (uses its total)
            required_horizon: Horizon needed for the drift to saturate
            bound_value: Explicit bound used when no StabilityBound is given

        Returns:
            DriftReport; a short horizon is flagged, not fatal
        """
        deviation = np.abs(traj.action - traj.action[0])
        per_component = deviation.max(axis=0)
        euclidean = float(np.max(np.linalg.norm(traj.action - traj.action[0], axis=1)))
        source = "none"
        value = None
        if bound is not None:
            value, source = bound.total, "stability_bound"
        elif bound_value is not None:
            value, source = float(bound_value), "explicit"
        margin = None
        if value is not None:
            margin = euclidean / value if value > 0 else (0.0 if euclidean == 0 else math.inf)
        violation = margin is not None and margin > 1.0
        short = required_horizon is not None and traj.horizon < required_horizon * (1 - 1e-12)
        if short:
            self.logger.warning(
                f"Horizon {traj.horizon:.4g} is shorter than the saturation time {required_horizon:.4g}"
            )
        if violation:
            self.logger.warning(f"Measured drift {euclidean:.3e} exceeds the bound {value:.3e}")
        return DriftReport(
            per_component=per_component.tolist(), euclidean=euclidean, bound=value, margin=margin,
            violation=violation, horizon=traj.horizon, required_horizon=required_horizon,
            horizon_short=short, bound_source=source, initial_action=traj.action[0].tolist(),
        )

    @staticmethod
    def required_horizon(a: float, a_last: Optional[float] = None) -> float:
        """max(40 / a, 20 / a_{r+1})."""
        if a <= 0:
            return 40.0
        horizon = 40.0 / a
        if a_last is not None and a_last > 0:
            horizon = max(horizon, 20.0 / a_last)
        return horizon

    # ==================== Normal-Form Check ====================

    def verify_normal_form(self, near_identity: NearIdentityMap, traj: Trajectory,
                           rate: Optional[float] = None, displacement_bound: Optional[float] = None,
                           max_points: int = 200) -> NormalFormCheck:
        """
        Push a trajectory through the inverse of a normalizing map.

        Args:
            near_identity: Forward map (new -> old) from a normal-form run
            traj: Trajectory in the original coordinates
            rate: Decay rate expected for the map displacement
            displacement_bound: Theoretical bound on the displacement at t = 0
            max_points: Largest number of trajectory samples pushed through the map

        Returns:
            NormalFormCheck with raw and transformed action variation

        Raises:
            DomainError: If the trajectory leaves the map's domain
        """
        inverse = near_identity.inverse()
        stride = max(1, int(math.ceil(traj.t.size / max_points)))
        index = np.arange(0, traj.t.size, stride)
        if index[-1] != traj.t.size - 1:
            index = np.append(index, traj.t.size - 1)

        new_actions = []
        displacement = []
        try:
            for i in index:
                d_a, d_p = inverse.displacement(traj.action[i], traj.angle[i], float(traj.t[i]))
                new_actions.append(traj.action[i] + d_a)
                displacement.append(float(np.max(np.abs(np.concatenate([d_a, d_p])))))
        except DomainError as e:
            self.logger.error(f"Trajectory left the domain of the normalizing map: {e}")
            raise
        new_actions = np.array(new_actions)
        raw = float(np.max(np.abs(traj.action[index] - traj.action[index[0]])))
        transformed = float(np.max(np.abs(new_actions - new_actions[0])))
        improvement = raw / transformed if transformed > 0 else None

        times = traj.t[index]
        late = int(np.argmin(np.abs(times - 20.0 / rate))) if rate else len(index) - 1
        start, late_value = displacement[0], displacement[late]
        late_time = float(times[late])
        if rate:
            consistent = late_value <= 3.0 * start * math.exp(-rate * (late_time - times[0])) + 1e-300
        else:
            consistent = late_value <= start * (1 + 1e-9) + 1e-300
        within = None if displacement_bound is None else start <= displacement_bound * (1 + 1e-9)
        return NormalFormCheck(
            map_kind=near_identity.kind, raw_variation=raw, transformed_variation=transformed,
            improvement=improvement, displacement_start=start, displacement_late=late_value,
            late_time=late_time, decay_consistent=consistent,
            displacement_bound_start=displacement_bound, within_displacement_bound=within,
        )
