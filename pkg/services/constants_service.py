"""
Constants Service.
Evaluates every explicit constant, schedule and smallness condition of the two
normal-form schemes, with closed-form versus recursion oracles.

All sequence arithmetic runs in mpmath at CONSTANTS_DPS digits; results are
returned as floats inside frozen pydantic models.
"""

import math
from typing import Dict, List, Optional, Sequence

import numpy as np
import pandas as pd
from mpmath import mp, mpf

from models.errors import DomainError, RegimeFlagError
from models.parameters import (
    BetaThetaResult,
    HomologicalBounds,
    IsoScheduleParams,
    KappaGammaResult,
    NekhoParams,
    RemainderSeries,
    StabilityBound,
    TransformBound,
)
from services.base_service import BaseService

TIME_CLASSES = ("exponential", "quadratic", "bumps")


def _rel_error(x, y) -> float:
    scale = max(abs(x), abs(y))
    return 0.0 if scale == 0 else float(abs(x - y) / scale)


class ConstantsService(BaseService):
    """
    Service for the constants calculator.
    Every operation is a pure function of its arguments; regime failures are flags.
    """

    def _initialize(self) -> None:
        """Initialize constants service resources."""
        self._dps = self.settings.CONSTANTS_DPS
        self._sum_terms = self.settings.SCHEDULE_SUM_TERMS
        self._report_steps = self.settings.SCHEDULE_REPORT_STEPS
        self._rel_tol = self.settings.SEQUENCE_REL_TOL
        self.logger.info("ConstantsService initialized")

    # ==================== Isochronous Schedule ====================

    @staticmethod
    def check_bump_spacing(centers: Sequence[float], width: float) -> None:
        """
        Validate a bump train: positive half-width, support in [0, inf), gaps above 2h.

        Raises:
            DomainError: If two bumps overlap or a bump starts before t = 0
        """
        if width <= 0:
            raise ValueError(f"Bump half-width must be positive, got {width}")
        ordered = np.sort(np.asarray(centers, dtype=float))
        if ordered.size == 0:
            raise ValueError("At least one bump is required")
        if ordered[0] - width < 0 or np.any(np.diff(ordered) <= 2 * width):
            raise DomainError(
                f"Overlapping bumps: centers {ordered.tolist()} must be more than "
                f"2h = {2 * width} apart and start after t = 0"
            )

    def iso_variant_constants(self, time_class: str, n: int, rho0: float, sigma0: float,
                              c_omega: float, bump_centers: Optional[Sequence[float]] = None,
                              bump_amplitudes: Optional[Sequence[float]] = None,
                              bump_width: Optional[float] = None) -> float:
        """
        Class-appropriate constant K of the isochronous iterative scheme.

        Exponential and quadratic classes use n C_omega (e / sigma*)^tau / rho*,
        which equals 2^(tau+1) n C_omega (e / sigma0)^tau / rho0. Bumps multiply
        it by 2 h A with A the absolute sum of the bump amplitudes.

        Raises:
            DomainError: If bumps overlap
        """
        if time_class not in TIME_CLASSES:
            raise ValueError(f"Unknown time class '{time_class}', expected one of {TIME_CLASSES}")
        tau = 2 * n + 3
        with mp.workdps(self._dps):
            rho_star = mpf(rho0) / 2
            sigma_star = mpf(sigma0) / 2
            base = n * mpf(c_omega) * (mp.e / sigma_star) ** tau / rho_star
            if time_class != "bumps":
                return float(base)
            if bump_amplitudes is None or bump_width is None or bump_centers is None:
                raise ValueError("Bump class needs centers, amplitudes and a half-width")
            self.check_bump_spacing(bump_centers, bump_width)
            total = sum(abs(mpf(x)) for x in bump_amplitudes)
            return float(2 * base * mpf(bump_width) * total)

    def iso_schedule(self, n: int, a: float, rho0: float, sigma0: float, c_omega: float,
                     epsilon: float, time_class: str = "exponential",
                     bump_centers: Optional[Sequence[float]] = None,
                     bump_amplitudes: Optional[Sequence[float]] = None,
                     bump_width: Optional[float] = None,
                     j_report: Optional[int] = None) -> IsoScheduleParams:
        """
        Evaluate the schedule of the isochronous scheme.

        Args:
            n: Number of degrees of freedom
            a: Decay rate of the perturbation
            rho0: Initial action radius
            sigma0: Initial angle strip width
            c_omega: 1 + |omega|
            epsilon: Perturbation size
            time_class: "exponential", "quadratic" or "bumps"
            bump_centers: Bump centers (bumps only)
            bump_amplitudes: Bump amplitudes (bumps only)
            bump_width: Bump half-width (bumps only)
            j_report: Number of reported steps (defaults to SCHEDULE_REPORT_STEPS)

        Returns:
            IsoScheduleParams with every sequence and the regime flag
        """
        exponential = time_class == "exponential"
        checked = [("n", n), ("rho0", rho0), ("sigma0", sigma0), ("c_omega", c_omega)]
        if exponential:
            checked.append(("a", a))
        for name, value in checked:
            if value <= 0:
                raise ValueError(f"{name} must be positive, got {value}")
        if epsilon < 0:
            raise ValueError(f"epsilon must be non-negative, got {epsilon}")
        for name, value in checked[1:3] + checked[4:]:
            if value >= 1:
                self.logger.warning(f"{name} = {value} lies outside (0, 1)")

        steps = self._report_steps if j_report is None else int(j_report)
        tau = 2 * n + 3
        K = self.iso_variant_constants(time_class, n, rho0, sigma0, c_omega,
                                       bump_centers, bump_amplitudes, bump_width)
        rate_factor = a if time_class == "exponential" else 1.0

        with mp.workdps(self._dps):
            eps = mpf(epsilon)
            kappa = mpf(K) / mpf(rate_factor)
            eps_a = (2 * mp.pi) ** (-2 * tau) / kappa
            in_regime = eps <= eps_a
            scale = (eps * kappa) ** (mpf(1) / tau)

            def d_of(j: int):
                if in_regime:
                    return scale * mpf(j + 2) ** 2 / mpf(j + 1) ** 4
                return 1 / (mp.pi ** 2 * mpf(j + 1) ** 2)

            d_all = [d_of(j) for j in range(self._sum_terms)]
            d_sum = mp.fsum(d_all)
            d_tail = (4 * scale if in_regime else 1 / mp.pi ** 2) / self._sum_terms
            d_max = max(d_all)
            d_sum_ok = bool(d_sum + d_tail <= mpf(1) / 6 * (1 + mpf(self._rel_tol))
                            and d_max <= mpf(1) / 6)
            product = mp.fprod(1 - 3 * d for d in d_all)

            eps_seq = [eps / mpf(j + 1) ** (2 * tau) for j in range(steps + 1)]
            d_seq = d_all[:steps + 1]
            rho_seq = [mpf(rho0)]
            sigma_seq = [mpf(sigma0)]
            for j in range(steps):
                rho_seq.append(rho_seq[-1] * (1 - 3 * d_seq[j]))
                sigma_seq.append(sigma_seq[-1] * (1 - 3 * d_seq[j]))

            theta_seq = []
            rec_error = 0.0
            for j in range(steps + 1):
                if eps_seq[j] == 0 or d_seq[j] == 0:
                    theta_seq.append(mpf(0))
                    continue
                theta_seq.append(2 * eps_seq[j] * kappa * d_seq[j] ** (-(2 * n + 2)))
                if j < steps and in_regime:
                    recursed = kappa * d_seq[j] ** (-tau) * eps_seq[j] ** 2
                    rec_error = max(rec_error, _rel_error(recursed, eps_seq[j + 1]))

            ladder = [float(mpf(a) * 2 ** j) for j in range(steps + 1)] if time_class == "exponential" else []

        if not in_regime:
            self.logger.warning(
                f"epsilon = {epsilon:.3e} exceeds eps_a = {float(eps_a):.3e}; "
                "using the fallback step sizes (outside proven regime)"
            )
        return IsoScheduleParams(
            n=n, a=a, rho0=rho0, sigma0=sigma0, c_omega=c_omega, epsilon=epsilon,
            time_class=time_class, tau=tau, K=K, rate_factor=rate_factor,
            eps_a=float(eps_a), in_regime=bool(in_regime),
            rho_star=rho0 / 2, sigma_star=sigma0 / 2,
            eps_seq=[float(x) for x in eps_seq], d_seq=[float(x) for x in d_seq],
            d_fallback=not in_regime,
            rho_seq=[float(x) for x in rho_seq], sigma_seq=[float(x) for x in sigma_seq],
            theta_seq=[float(x) for x in theta_seq],
            d_sum=float(d_sum), d_sum_tail=float(d_tail), d_sum_ok=d_sum_ok,
            radius_product=float(product), recursion_max_rel_error=rec_error,
            decay_ladder=ladder,
        )

    def variant_homological_bounds(self, time_class: str, M: float, n: int, c_omega: float,
                                   delta: float, sigma_hat: float, a: Optional[float] = None,
                                   bump_width: Optional[float] = None,
                                   bump_amplitudes: Optional[Sequence[float]] = None) -> HomologicalBounds:
        """
        Bounds on chi and chi_t for a source of size M, per time class.

        With E = (e / (delta sigma_hat))^(2n):
            exponential: chi <= (M/a) E e^{-at}, chi_t <= C_omega (M/a) E e^{-at}
            quadratic:   chi <= M E (t+1)^{-1}, chi_t <= M C_omega E (t+1)^{-1}
            bumps:       chi <= 2 A M h E,      chi_t <= M C_omega E
        """
        if time_class not in TIME_CLASSES:
            raise ValueError(f"Unknown time class '{time_class}', expected one of {TIME_CLASSES}")
        if delta <= 0 or sigma_hat <= 0:
            raise ValueError("delta and sigma_hat must be positive")
        with mp.workdps(self._dps):
            E = (mp.e / (mpf(delta) * mpf(sigma_hat))) ** (2 * n)
            M_ = mpf(M)
            if time_class == "exponential":
                if a is None or a <= 0:
                    raise ValueError("Exponential class needs a positive decay rate")
                chi = M_ / mpf(a) * E
                return HomologicalBounds(time_class=time_class, chi=float(chi),
                                         chi_t=float(mpf(c_omega) * chi), rate=a, power=0)
            if time_class == "quadratic":
                return HomologicalBounds(time_class=time_class, chi=float(M_ * E),
                                         chi_t=float(M_ * mpf(c_omega) * E), rate=0.0, power=1)
            if bump_width is None or bump_amplitudes is None:
                raise ValueError("Bump class needs amplitudes and a half-width")
            total = sum(abs(mpf(x)) for x in bump_amplitudes)
            return HomologicalBounds(time_class=time_class,
                                     chi=float(2 * total * M_ * mpf(bump_width) * E),
                                     chi_t=float(M_ * mpf(c_omega) * E), rate=0.0, power=0)

    # ==================== Finite-Order Parameters ====================

    def nekho_params(self, n: int, a: float, rho_H: float, sigma_H: float, C_h: float,
                     d: float, epsilon: float, r_override: Optional[int] = None) -> NekhoParams:
        """
        Evaluate the parameters of the finite-order scheme and every smallness flag.

        Args:
            n: Number of degrees of freedom
            a: Decay rate
            rho_H: Action analyticity radius of H
            sigma_H: Angle analyticity width of H
            C_h: Hessian constant of h (>= 1)
            d: Domain restriction in (0, 1/4]
            epsilon: Perturbation size
            r_override: Use this order instead of the threshold formula

        Returns:
            NekhoParams; flags report finone, fintwo, smallnessone, choice,
            smallnessrho, eps_ok and d_range
        """
        for name, value in (("n", n), ("a", a), ("rho_H", rho_H), ("sigma_H", sigma_H), ("C_h", C_h)):
            if value <= 0:
                raise ValueError(f"{name} must be positive, got {value}")
        if epsilon < 0:
            raise ValueError(f"epsilon must be non-negative, got {epsilon}")

        with mp.workdps(self._dps):
            sigma = mpf(sigma_H) / 2
            N = int(mp.ceil(2 / sigma * (1 + 3 * mp.log(2))))
            h = mp.exp(-N * sigma / 2)
            tau = mp.e * h
            q = mp.exp(-sigma / 2)
            F_tilde = ((1 + q) / (1 - q)) ** n
            eps = mpf(epsilon)
            F_cal = eps * F_tilde
            d_ = mpf(d)
            sqrt_star = (mpf(a) ** 2 * d_ ** (n + 2) * mpf(rho_H) * sigma ** 2
                         / (mpf(2) ** (2 * n + 19) * mp.e * n * mpf(C_h) * F_tilde))
            eps_star = sqrt_star ** 2
            gamma = 5 + n

            r_forced = False
            if r_override is not None:
                r = int(r_override)
                if r < 1:
                    raise ValueError(f"Normalization order must be >= 1, got {r}")
            elif eps == 0:
                r = 1
            else:
                r = int(mp.floor((eps_star / eps) ** (mpf(1) / (2 * gamma))))
                if r < 1:
                    r, r_forced = 1, True

            rho = min(mpf(rho_H), mpf(a) / (4 * r * N * mpf(C_h)))
            C_r = mpf(2) ** (2 * n + 4) * (mpf(r) / d_) ** n
            Gamma = 16 * n * mpf(r) ** 2 * C_r * F_cal / (mpf(a) * d_ ** 2 * rho * sigma)
            Delta = tau + Gamma
            A = 10 * F_tilde
            ladder = [mpf(a)]
            for s in range(1, r + 1):
                ladder.append(ladder[-1] * (2 * r - s) / (2 * r))

            flags: Dict[str, bool] = {
                "finone": bool(8 * mp.e * h <= 1),
                "fintwo": bool(2 * r ** 2 * Gamma <= mp.sqrt(eps) * h),
                "smallnessone": bool(4 * Delta <= 1),
                "choice": bool(Gamma <= h / (2 * r ** 2)),
                "smallnessrho": bool(4 * r * N * mpf(C_h) * rho <= mpf(a) * (1 + mpf(self._rel_tol))),
                "eps_ok": bool(eps <= eps_star),
                "d_range": bool(0 < d <= 0.25),
            }

        params = NekhoParams(
            n=n, a=a, rho_H=rho_H, sigma_H=sigma_H, C_h=C_h, d=d, epsilon=epsilon,
            sigma=float(sigma), N=N, h=float(h), tau=float(tau), F_tilde=float(F_tilde),
            F_cal=float(F_cal), sqrt_eps_a_star=float(sqrt_star), eps_a_star=float(eps_star),
            gamma=gamma, r=r, r_forced=r_forced, rho=float(rho), C_r=float(C_r),
            Gamma=float(Gamma), Delta=float(Delta), A=float(A),
            a_ladder=[float(x) for x in ladder], flags=flags,
        )
        if not params.flags_ok:
            self.logger.warning(f"Finite-order regime flags failing: {params.failed_flags()}")
        return params

    # ==================== Sequence Oracles ====================

    def kappa_gamma(self, A: float, Gamma: float, tau: float, kappa1: float, gamma0: float,
                    s_max: int = 50) -> KappaGammaResult:
        """
        Recurse kappa_s = A tau^(s-1) + Gamma sum_{j<s} tau^(j-1) kappa_{s-j} and
        gamma_l = Gamma sum_{j<=l} tau^(j-1) gamma_{l-j}, next to their closed forms
        (Gamma kappa_1 + tau A) Delta^(s-2) and gamma_0 Gamma Delta^(l-1).
        """
        with mp.workdps(self._dps):
            A_, G_, t_ = mpf(A), mpf(Gamma), mpf(tau)
            Delta = t_ + G_
            kappa = [mpf(kappa1)]
            closed_k = [mpf(kappa1)]
            for s in range(2, s_max + 1):
                conv = mp.fsum(t_ ** (j - 1) * kappa[s - j - 1] for j in range(1, s))
                kappa.append(A_ * t_ ** (s - 1) + G_ * conv)
                closed_k.append((G_ * kappa[0] + t_ * A_) * Delta ** (s - 2))

            gamma = [mpf(gamma0)]
            closed_g = [mpf(gamma0)]
            for l in range(1, s_max + 1):
                gamma.append(G_ * mp.fsum(t_ ** (j - 1) * gamma[l - j] for j in range(1, l + 1)))
                closed_g.append(mpf(gamma0) * G_ * Delta ** (l - 1))

            error = max(
                max((_rel_error(x, y) for x, y in zip(kappa, closed_k)), default=0.0),
                max((_rel_error(x, y) for x, y in zip(gamma, closed_g)), default=0.0),
            )
        return KappaGammaResult(
            kappa=[float(x) for x in kappa], kappa_closed=[float(x) for x in closed_k],
            gamma=[float(x) for x in gamma], gamma_closed=[float(x) for x in closed_g],
            max_rel_error=error, agree=error <= self._rel_tol,
        )

    def beta_theta(self, h: float, Gamma: float, r: int) -> BetaThetaResult:
        """
        Coupled recursion for the generator and level coefficients.

        beta_1 = theta_0 = 1, theta_l = (Gamma / l) sum_{j=1}^{l} j beta_j theta_{l-j},
        beta_s = h^(s-1) + (Gamma / s) sum_{j=1}^{s-1} j theta_{s-j}, computed in the
        order theta_1, beta_2, theta_2, ... The bound beta_s <= (e h)^(s-1) / s is
        audited for s <= r together with y(s) <= e^(s-1).
        """
        if r < 1:
            raise ValueError(f"r must be >= 1, got {r}")
        with mp.workdps(self._dps):
            h_, G_ = mpf(h), mpf(Gamma)
            beta = [mpf(0), mpf(1)]
            theta = [mpf(1)]

            def next_theta(l: int):
                return G_ / l * mp.fsum(j * beta[j] * theta[l - j] for j in range(1, l + 1))

            theta.append(next_theta(1))
            for s in range(2, r + 1):
                beta.append(h_ ** (s - 1) + G_ / s * mp.fsum(j * theta[s - j] for j in range(1, s)))
                theta.append(next_theta(s))

            bound = [(mp.e * h_) ** (s - 1) / s for s in range(1, r + 1)]
            within = all(beta[s] <= bound[s - 1] * (1 + mpf(self._rel_tol)) for s in range(1, r + 1))
            choice = G_ <= h_ / (2 * r ** 2)
            c = 1 / mpf(2 * r ** 2)
            y = [s + (s - 1) * c * (mp.e + c) ** (s - 1) for s in range(1, r + 1)]
            ineq = all(y[s - 1] <= mp.e ** (s - 1) * (1 + mpf(self._rel_tol)) for s in range(1, r + 1))

        if choice and not within:
            self.logger.warning(f"beta bound fails for h={h}, Gamma={Gamma}, r={r}")
        return BetaThetaResult(
            beta=[float(x) for x in beta[1:]], theta=[float(x) for x in theta[:r]],
            beta_bound=[float(x) for x in bound], within_bound=bool(within),
            choice_holds=bool(choice), y=[float(x) for x in y], ineq_holds=bool(ineq),
        )

    def lie_bracket_bound(self, norm_F: float, norm_G: float, d1: float, d2: float,
                          d_tilde: float, rho: float, sigma: float, s: int) -> float:
        """
        Majorant of ||L_G^s F|| on the domain restricted by d_hat + d_tilde.

        (s! / e^2) (2e ||G|| / (d_tilde (d_tilde + delta) rho sigma))^s ||F||,
        with delta = |d1 - d2| when s = 1 and 0 otherwise.

        Raises:
            ValueError: If d_tilde is outside (0, 1 - max(d1, d2))
        """
        if not 0 <= d1 < 1 or not 0 <= d2 < 1:
            raise ValueError(f"Restrictions must lie in [0, 1), got {d1}, {d2}")
        if not 0 < d_tilde < 1 - max(d1, d2):
            raise ValueError(f"d_tilde = {d_tilde} outside (0, {1 - max(d1, d2)})")
        if s < 1:
            raise ValueError(f"Bracket order must be >= 1, got {s}")
        with mp.workdps(self._dps):
            delta = abs(mpf(d1) - mpf(d2)) if s == 1 else mpf(0)
            dt = mpf(d_tilde)
            factor = 2 * mp.e * mpf(norm_G) / (dt * (dt + delta) * mpf(rho) * mpf(sigma))
            return float(mp.factorial(s) / mp.e ** 2 * factor ** s * mpf(norm_F))

    # ==================== Stability ====================

    def stability_bound(self, params: NekhoParams) -> StabilityBound:
        """
        Predicted action drift sqrt(eps) d rho / 2 and its components.

        Raises:
            RegimeFlagError: If any smallness flag fails
        """
        if not params.flags_ok:
            self.logger.error(f"Stability bound requested with failing flags {params.failed_flags()}")
            raise RegimeFlagError(params.failed_flags())
        with mp.workdps(self._dps):
            eps = mpf(params.epsilon)
            piece = mp.sqrt(eps) * params.d * mpf(params.rho) / 8
            drift = (eps * mpf(params.A) / (mpf(params.a) * params.d * mp.e * mpf(params.sigma))
                     * (2 / mp.e) ** params.r)
            total = mp.sqrt(eps) * params.d * mpf(params.rho) / 2
            consistent = 2 * piece + drift <= total * (1 + mpf(self._rel_tol))
        return StabilityBound(transform_piece=float(piece), drift_piece=float(drift),
                              total=float(total), consistent=bool(consistent),
                              epsilon=params.epsilon)

    def transform_bound(self, params: NekhoParams, extra_levels: int = 40) -> TransformBound:
        """
        Displacement bound for the coordinates moved by the Lie transform.

        D_sigma = n r C_r / (2 d sigma a), u_1 = D_sigma,
        u_l = beta_l D_sigma + (Gamma / l) sum_{j<l} j beta_j u_{l-j} (beta_l = 0 for l > r),
        audited against u_l <= (D_sigma / l) Delta^(l-1); the bound is F sum_l u_l.
        """
        beta = self.beta_theta(params.h, params.Gamma, params.r).beta
        total_levels = params.r + extra_levels
        with mp.workdps(self._dps):
            D = (params.n * params.r * mpf(params.C_r)
                 / (2 * params.d * mpf(params.sigma) * mpf(params.a)))
            G_ = mpf(params.Gamma)
            b = [mpf(0)] + [mpf(x) for x in beta] + [mpf(0)] * extra_levels
            u = [mpf(0), D]
            for l in range(2, total_levels + 1):
                conv = mp.fsum(j * b[j] * u[l - j] for j in range(1, l))
                u.append(b[l] * D + G_ / l * conv)
            u_bound = [D / l * mpf(params.Delta) ** (l - 1) for l in range(1, total_levels + 1)]
            within = all(u[l] <= u_bound[l - 1] * (1 + mpf(self._rel_tol)) for l in range(1, total_levels + 1))
            displacement = mpf(params.F_cal) * mp.fsum(u[1:])
            piece = mp.sqrt(mpf(params.epsilon)) * params.d * mpf(params.rho) / 8
            admissible = 2 * mpf(params.F_cal) * D <= G_ * params.d * mpf(params.rho) * (1 + mpf(self._rel_tol))
        return TransformBound(
            D_sigma=float(D), u=[float(x) for x in u[1:]], u_bound=[float(x) for x in u_bound],
            within_bound=bool(within), displacement_bound=float(displacement),
            piece=float(piece), admissible=bool(admissible),
        )

    def remainder_series(self, params: NekhoParams, s_extra: int = 200) -> RemainderSeries:
        """
        Audit sum_{s>r} (2 + s) Delta^(s-1).

        The exact sum is Delta^r ((r+3)/(1-Delta) + Delta/(1-Delta)^2); it is
        dominated by Delta^r ((r+3)/(1-Delta) + 1/(1-Delta^2)) for Delta <= sqrt(2) - 1,
        and by 2 (r+4) Delta^r when 4 Delta <= 1. The scaled remainder bound is
        eps A e^{-r} with A = 10 F_tilde.
        """
        r = params.r
        with mp.workdps(self._dps):
            D = mpf(params.Delta)
            terms = [(2 + s) * D ** (s - 1) for s in range(r + 1, r + 1 + s_extra)]
            total = mp.fsum(terms)
            note = None
            if D < 1:
                closed = D ** r * ((r + 3) / (1 - D) + D / (1 - D) ** 2)
                majorant = D ** r * ((r + 3) / (1 - D) + 1 / (1 - D ** 2))
            else:
                closed = majorant = mpf("inf")
                note = f"Delta = {params.Delta:.3e} >= 1: the series diverges"
            bound = 2 * (r + 4) * D ** r
            within = bool(total <= closed * (1 + mpf(self._rel_tol))
                          and closed <= majorant * (1 + mpf(self._rel_tol))
                          and majorant <= bound * (1 + mpf(self._rel_tol)))
            power_check = bool((r + 4) * mp.e ** r <= 5 * mpf(4) ** r)
            final = mpf(params.epsilon) * mpf(params.A) * mp.exp(-r)
        if not within and note is None:
            note = "smallness condition 4 Delta <= 1 fails; closed-form majorants do not apply"
        return RemainderSeries(
            terms=[float(x) for x in terms], total=float(total), closed_form=float(closed),
            majorant=float(majorant), bound=float(bound), final_bound=float(final),
            within_bound=within, power_check=power_check, note=note,
        )

    # ==================== Sweeps ====================

    def threshold_sweep(self, a_values: Sequence[float], n: int, rho0: float, sigma0: float,
                        c_omega: float, rho_H: float, sigma_H: float, C_h: float,
                        d: float) -> pd.DataFrame:
        """
        eps_a and eps_a* over a grid of decay rates, with a monotonicity flag.

        Returns:
            DataFrame with columns a, eps_a, eps_a_star, monotone (same value on every row)
        """
        rows: List[Dict[str, float]] = []
        for a in sorted(float(x) for x in a_values):
            iso = self.iso_schedule(n, a, rho0, sigma0, c_omega, 0.0, j_report=0)
            nek = self.nekho_params(n, a, rho_H, sigma_H, C_h, d, 0.0)
            rows.append({"a": a, "eps_a": iso.eps_a, "eps_a_star": nek.eps_a_star})
        df = pd.DataFrame(rows, columns=["a", "eps_a", "eps_a_star"])
        monotone = bool(
            len(df) < 2
            or (np.all(np.diff(df["eps_a"].to_numpy()) > 0)
                and np.all(np.diff(df["eps_a_star"].to_numpy()) > 0))
        )
        df["monotone"] = monotone
        self.logger.info(f"Threshold sweep over {len(df)} rates (monotone={monotone})")
        return df

    def epsilon_sweep(self, eps_values: Sequence[float], n: int, a: float, rho_H: float,
                      sigma_H: float, C_h: float, d: float) -> pd.DataFrame:
        """Order r, regime flags and predicted drift over a grid of perturbation sizes."""
        rows: List[Dict[str, object]] = []
        for eps in sorted(float(x) for x in eps_values):
            params = self.nekho_params(n, a, rho_H, sigma_H, C_h, d, eps)
            drift = math.sqrt(eps) * d * params.rho / 2
            rows.append({
                "epsilon": eps, "r": params.r, "r_forced": params.r_forced,
                "eps_a_star": params.eps_a_star, "flags_ok": params.flags_ok,
                "drift_bound": drift,
            })
        return pd.DataFrame(rows, columns=["epsilon", "r", "r_forced", "eps_a_star", "flags_ok", "drift_bound"])
