"""
Nekhoroshev Service.
Finite-order normalization for a general integrable part h(I): harmonic shells,
time-dependent homological equations at action-dependent frequencies on a
Chebyshev grid, Lie-transform levels and the exponentially small remainder.
"""

import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from config.settings import Settings
from models.errors import DomainError, EnvelopeError, RadiusError, TailDivergenceError
from models.hamiltonian import ExtendedHamiltonian
from models.reports import (
    EnvelopeRecord,
    NekhoroshevLevelRecord,
    NekhoroshevReport,
    RemainderRecord,
)
from models.series import FourierTaylorSeries, GridBasis
from models.timefn import Envelope, oscillatory_tail
from models.transform import NearIdentityMap
from services.base_service import BaseService
from services.lie_service import LieAlgebraService


def rate_ladder(a: float, r: int) -> List[float]:
    """a_1 = a, a_{s+1} = a_s (2r - s) / (2r), for s = 1..r."""
    ladder = [float(a)]
    for s in range(1, r + 1):
        ladder.append(ladder[-1] * (2 * r - s) / (2 * r))
    return ladder


def f_tilde(n: int, sigma: float) -> float:
    """[(1 + e^{-sigma/2}) / (1 - e^{-sigma/2})]^n."""
    q = math.exp(-sigma / 2.0)
    return ((1.0 + q) / (1.0 - q)) ** n


@dataclass(frozen=True)
class ShellHamiltonian:
    """
    H = H0 + H_1 + H_2 + ... with H_m supported on (m-1) N <= |k| < m N.

    Attributes:
        hamiltonian: Source Hamiltonian
        H0: h(I) + eta on the grid
        shells: H_1, H_2, ... (scaled by hat_epsilon)
        N: Shell width
        r: Normalization order
        d: Domain restriction in (0, 1/4]
        rho: Action radius of the scheme
        sigma: Angle width of the scheme (half the analyticity width of H)
        F_cal: epsilon * F_tilde
        h: e^{-N sigma / 2}
        shell_envelopes: Measured envelopes of the shells at (rho, sigma)
    """

    hamiltonian: ExtendedHamiltonian
    H0: FourierTaylorSeries
    shells: Tuple[FourierTaylorSeries, ...]
    N: int
    r: int
    d: float
    rho: float
    sigma: float
    F_cal: float
    h: float
    shell_envelopes: Tuple[Envelope, ...]

    @property
    def n(self) -> int:
        return self.H0.n

    @property
    def a(self) -> float:
        return self.hamiltonian.decay_rate

    @property
    def epsilon(self) -> float:
        return self.hamiltonian.epsilon

    @property
    def basis(self) -> GridBasis:
        return self.H0.basis  # type: ignore[return-value]

    def shell(self, m: int) -> Optional[FourierTaylorSeries]:
        """H_m for m >= 1, or None beyond the last shell."""
        if 1 <= m <= len(self.shells):
            return self.shells[m - 1]
        return None

    def shell_bound(self, m: int) -> float:
        return self.F_cal * self.h ** (m - 1)

    def perturbation(self) -> FourierTaylorSeries:
        total = FourierTaylorSeries.zero_like(self.H0)
        for shell in self.shells:
            total = total + shell
        return total


@dataclass
class NormalFormResult:
    """Generators, levels and remainder of a finite-order normalization."""

    shells: ShellHamiltonian
    chi_seq: List[FourierTaylorSeries]
    psi_seq: List[FourierTaylorSeries]
    levels: List[FourierTaylorSeries]
    remainder: FourierTaylorSeries
    s_total: int
    a_ladder: List[float]
    level_records: List[NekhoroshevLevelRecord] = field(default_factory=list)
    tail_ledger: float = 0.0
    ledger_total: float = 0.0

    @property
    def r(self) -> int:
        return self.shells.r

    def transformed(self) -> FourierTaylorSeries:
        """H0 + sum of every computed level."""
        total = self.shells.H0
        for level in self.levels:
            total = total + level
        return total


class _LevelTable:
    """Memoized E_l X = sum_{j=1}^{min(l, r)} (j / l) L_{chi_j} E_{l-j} X."""

    def __init__(self, lie: LieAlgebraService, chi_seq: List[FourierTaylorSeries]) -> None:
        self._lie = lie
        self._chi = chi_seq
        self._cache: Dict[Tuple[int, int], Optional[FourierTaylorSeries]] = {}

    def level(self, key: int, source: FourierTaylorSeries, l: int) -> Optional[FourierTaylorSeries]:
        if l == 0:
            return source
        if (key, l) in self._cache:
            return self._cache[(key, l)]
        acc: Optional[FourierTaylorSeries] = None
        for j in range(1, min(l, len(self._chi)) + 1):
            chi = self._chi[j - 1]
            prev = self.level(key, source, l - j)
            if chi.is_zero() or prev is None or prev.is_zero():
                continue
            term = self._lie.poisson_bracket(prev, chi).scale(j / l)
            acc = term if acc is None else acc + term
        if acc is not None:
            acc = acc.pruned()
        self._cache[(key, l)] = acc
        return acc


class NekhoroshevService(BaseService):
    """
    Service for the finite-order normal form.
    """

    def __init__(self, settings: Optional[Settings] = None,
                 lie: Optional[LieAlgebraService] = None):
        """
        Initialize Nekhoroshev service.

        Args:
            settings: Engine settings (optional)
            lie: Lie algebra service (optional, created if not provided)
        """
        self._lie = lie
        super().__init__(settings)

    def _initialize(self) -> None:
        """Initialize Nekhoroshev service resources."""
        if self._lie is None:
            self._lie = LieAlgebraService(self.settings)
        self._extra_levels = self.settings.NEKHO_EXTRA_LEVELS
        self._residual_tol = self.settings.HOMOLOGICAL_RESIDUAL_TOL
        self._level_tol = self.settings.LEVEL_RESIDUAL_TOL
        self.logger.info("NekhoroshevService initialized")

    @property
    def lie(self) -> LieAlgebraService:
        return self._lie  # type: ignore[return-value]

    # ==================== Shells ====================

    def build_shells(self, H: ExtendedHamiltonian, N: int, r: int, d: float = 0.25,
                     grid: Optional[GridBasis] = None, rho: Optional[float] = None) -> ShellHamiltonian:
        """
        Split the perturbation into harmonic shells of width N.

        Args:
            H: Hamiltonian with exponentially decaying perturbation
            N: Shell width (>= 1)
            r: Normalization order (>= 1)
            d: Domain restriction in (0, 1/4]
            grid: Chebyshev grid to resample a Taylor-backed perturbation on
            rho: Action radius of the scheme (defaults to the series radius)

        Returns:
            ShellHamiltonian with measured shell envelopes

        Raises:
            DomainError: If K_max < r N
        """
        if N < 1 or r < 1:
            raise ValueError(f"Need N >= 1 and r >= 1, got N={N}, r={r}")
        if H.decay_rate <= 0:
            raise ValueError("The finite-order scheme needs an exponentially decaying perturbation")
        F = H.scaled_perturbation
        if not isinstance(F.basis, GridBasis):
            if grid is None:
                raise ValueError("The finite-order scheme runs on a Chebyshev grid; pass one")
            F = F.to_basis(grid)
        if F.k_max < r * N:
            self.logger.error(f"K_max={F.k_max} cannot hold {r} shells of width {N}")
            raise DomainError(f"K_max={F.k_max} is below r N = {r * N}: remainder shells not representable")

        sigma = F.sigma / 2.0
        rho = F.rho if rho is None else float(rho)
        F = F.with_radii(rho, sigma)
        H0 = H.integrable_series(F.basis, F.k_max, rho, sigma)
        shells = self.lie.shell_split(F, N)
        while shells and shells[-1].is_zero() and len(shells) > r + 1:
            shells.pop()
        envelopes = tuple(
            Envelope(0.0, H.decay_rate, 0) if s.is_zero() else self.lie.fourier_norm(s, rate=H.decay_rate)
            for s in shells
        )
        h = math.exp(-N * sigma / 2.0)
        result = ShellHamiltonian(
            hamiltonian=H, H0=H0, shells=tuple(shells), N=N, r=r, d=d, rho=rho, sigma=sigma,
            F_cal=H.epsilon * f_tilde(H.n, sigma), h=h, shell_envelopes=envelopes,
        )
        for m, env in enumerate(envelopes, start=1):
            if env.M > result.shell_bound(m) * (1 + 1e-9):
                self.logger.warning(
                    f"Shell {m} norm {env.M:.3e} exceeds F h^(m-1) = {result.shell_bound(m):.3e}"
                )
        self.logger.info(f"Built {len(shells)} shells of width {N} for order r={r}")
        return result

    # ==================== Homological Equation ====================

    def solve_homological_general(self, psi: FourierTaylorSeries, H: ExtendedHamiltonian,
                                  s: Optional[int] = None) -> FourierTaylorSeries:
        """
        Solve chi_t + omega(I) . chi_phi = psi node by node on the grid.

        Args:
            psi: Source series on a GridBasis
            H: Hamiltonian providing omega(I) = grad h
            s: Level index, used in messages only

        Returns:
            Generator on the same grid and radii

        Raises:
            TailDivergenceError: If a mode diverges at some node (names k and the node)
        """
        if not isinstance(psi.basis, GridBasis):
            raise ValueError("solve_homological_general needs a grid-backed series")
        nodes = psi.basis.points
        omega = H.frequencies_at(nodes)
        coeffs = {}
        for k, f in psi.items():
            lam = omega @ np.asarray(k, dtype=float)
            try:
                coeffs[k] = oscillatory_tail(f, lam)
            except TailDivergenceError as e:
                node = self._divergent_node(f, lam, nodes)
                level = f" at level s={s}" if s is not None else ""
                self.logger.error(f"Homological equation diverges{level} for k={k}")
                raise TailDivergenceError(f"Divergent homological mode{level}: {e}",
                                          harmonic=k, node=node) from e
        return FourierTaylorSeries(psi.basis, psi.k_max, psi.rho, psi.sigma, coeffs)

    @staticmethod
    def _divergent_node(f, lam: np.ndarray, nodes: np.ndarray) -> Optional[np.ndarray]:
        for g in range(nodes.shape[0]):
            try:
                oscillatory_tail(f.element(g), float(lam[g]))
            except TailDivergenceError:
                return nodes[g]
        return None

    def homological_residual(self, chi: FourierTaylorSeries, psi: FourierTaylorSeries,
                             H0: FourierTaylorSeries, horizon: float) -> float:
        """Relative residual of L_{H0} chi - psi, with L_{H0} chi = {chi, H0}."""
        residual = self.lie.poisson_bracket(chi, H0) - psi
        return self.lie.relative_residual(residual, psi, horizon)

    # ==================== Normalization ====================

    def normalize_order_r(self, sh: ShellHamiltonian, s_total: Optional[int] = None) -> NormalFormResult:
        """
        Compute chi^(1)..chi^(r), the levels E_1..E_S and the remainder.

        Level s of the transformed Hamiltonian is sum_{m=0}^{s} E_{s-m} H_m with H_0 = h + eta;
        its chi^(s) part is {H0, chi^(s)}, so chi^(s) solves L_{H0} chi^(s) = Psi_s with
        Psi_s the remaining terms.

        Args:
            sh: Shell Hamiltonian
            s_total: Last assembled level (defaults to 2 r + NEKHO_EXTRA_LEVELS)

        Returns:
            NormalFormResult with the generators, the levels and the truncated remainder
        """
        r = sh.r
        s_total = 2 * r + self._extra_levels if s_total is None else int(s_total)
        if s_total < r + 1:
            raise ValueError(f"S_total={s_total} must exceed r={r}")
        H = sh.hamiltonian
        ladder = rate_ladder(sh.a, r)
        horizon = 20.0 / sh.a
        chi_seq: List[FourierTaylorSeries] = []
        psi_seq: List[FourierTaylorSeries] = []
        table = _LevelTable(self.lie, chi_seq)
        zero = FourierTaylorSeries.zero_like(sh.H0)

        def rest_of_level(s: int) -> FourierTaylorSeries:
            # level s without its {H0, chi_s} contribution
            total = zero
            for j in range(1, s):
                prev = table.level(0, sh.H0, s - j)
                if prev is None or chi_seq[j - 1].is_zero():
                    continue
                total = total + self.lie.poisson_bracket(prev, chi_seq[j - 1]).scale(j / s)
            for m in range(1, s + 1):
                shell = sh.shell(m)
                if shell is None or shell.is_zero():
                    continue
                term = table.level(m, shell, s - m)
                if term is not None:
                    total = total + term
            return total

        records: List[NekhoroshevLevelRecord] = []
        for s in range(1, r + 1):
            psi = rest_of_level(s).pruned()
            chi = self.solve_homological_general(psi, H, s)
            chi_seq.append(chi)
            psi_seq.append(psi)
            self.logger.info(
                f"Level s={s}: |Psi|={self.lie.majorant(psi):.3e}, |chi|={self.lie.majorant(chi):.3e}"
            )

        levels: List[FourierTaylorSeries] = []
        for s in range(1, s_total + 1):
            total = zero
            e_h0 = table.level(0, sh.H0, s)
            if e_h0 is not None:
                total = total + e_h0
            for m in range(1, s + 1):
                shell = sh.shell(m)
                if shell is None or shell.is_zero():
                    continue
                term = table.level(m, shell, s - m)
                if term is not None:
                    total = total + term
            levels.append(total)

        remainder = zero
        for level in levels[r:]:
            remainder = remainder + level
        for m in range(s_total + 1, len(sh.shells) + 1):
            remainder = remainder + sh.shells[m - 1]

        norms = [self.lie.majorant(level) for level in levels]
        tail = 0.0
        if len(norms) >= 2 and norms[-2] > 0:
            ratio = norms[-1] / norms[-2]
            tail = norms[-1] * ratio / (1.0 - ratio) if ratio < 1 else math.inf
        ledger = sum(level.ledger for level in levels)

        for s in range(1, r + 1):
            records.append(self._level_record(sh, s, psi_seq[s - 1], chi_seq[s - 1],
                                              levels[s - 1], ladder, horizon))
        result = NormalFormResult(
            shells=sh, chi_seq=chi_seq, psi_seq=psi_seq, levels=levels, remainder=remainder,
            s_total=s_total, a_ladder=ladder, level_records=records,
            tail_ledger=tail, ledger_total=ledger,
        )
        failing = [rec.s for rec in records if not rec.level_ok]
        if failing:
            self.logger.warning(f"Levels {failing} are not annihilated to tolerance")
        self.logger.info(
            f"Normalized to order r={r} with S_total={s_total}; |R|={self.lie.majorant(remainder):.3e}"
        )
        return result

    def _level_record(self, sh: ShellHamiltonian, s: int, psi: FourierTaylorSeries,
                      chi: FourierTaylorSeries, level: FourierTaylorSeries,
                      ladder: Sequence[float], horizon: float) -> NekhoroshevLevelRecord:
        r, d = sh.r, sh.d
        d_s = d * (s - 1) / r
        d_half = d * (s - 0.5) / r
        C_r = 2.0 ** (2 * sh.n + 4) * (r / d) ** sh.n
        a_s, a_next = ladder[s - 1], ladder[s]
        psi_M = self._certified(psi, (1 - d_s) * sh.rho, (1 - d_s) * sh.sigma, a_s)
        chi_M = self._certified(chi, (1 - d_half) * sh.rho, (1 - d_half) * sh.sigma, a_next)
        chi_t_M = self._certified(chi.d_time(), (1 - d_half) * sh.rho, (1 - d_half) * sh.sigma, a_next)
        shell = sh.shell(s)
        shell_M = sh.shell_envelopes[s - 1].M if shell is not None else 0.0
        rate = self.lie.series_rate(chi) if not chi.is_zero() else a_next
        residual = 0.0 if psi.is_zero() else self.homological_residual(chi, psi, sh.H0, horizon)
        level_residual = self.lie.majorant(level) / sh.epsilon if sh.epsilon > 0 else 0.0
        return NekhoroshevLevelRecord(
            s=s, shell_M=shell_M, shell_bound=sh.shell_bound(s), psi_M=psi_M,
            chi_M=chi_M, chi_t_M=chi_t_M,
            chi_bound=C_r * psi_M / (4.0 * sh.a), chi_t_bound=C_r * psi_M / 4.0,
            a_s=a_next, achieved_rate=rate, rate_ok=rate >= a_next * (1 - 1e-12),
            level_residual=level_residual, level_ok=level_residual <= self._level_tol,
            homological_residual=residual, homological_ok=residual <= self._residual_tol,
        )

    def _certified(self, series: FourierTaylorSeries, rho: float, sigma: float, rate: float) -> float:
        if series.is_zero():
            return 0.0
        try:
            return self.lie.fourier_norm(series, rho, sigma, rate=rate).M
        except EnvelopeError as e:
            self.logger.warning(f"Could not certify rate {rate}: {e}")
            return math.inf

    # ==================== Remainder ====================

    def remainder_norm(self, res: NormalFormResult, rho: Optional[float] = None,
                       sigma: Optional[float] = None) -> Envelope:
        """
        Envelope of the remainder at restricted radii, rate taken from its slowest coefficient.

        Args:
            res: Normalization result
            rho: Action radius, at most (1 - 2d) rho (default)
            sigma: Angle width, at most (1 - 2d) sigma (default)

        Raises:
            RadiusError: If the radii leave the restricted domain
        """
        sh = res.shells
        shrink = 1.0 - 2.0 * sh.d
        rho = shrink * sh.rho if rho is None else float(rho)
        sigma = shrink * sh.sigma if sigma is None else float(sigma)
        tol = 1 + 1e-12
        if rho <= 0 or sigma <= 0 or rho > shrink * sh.rho * tol or sigma > shrink * sh.sigma * tol:
            self.logger.error(f"Remainder radii ({rho}, {sigma}) outside (1-2d)({sh.rho}, {sh.sigma})")
            raise RadiusError(
                f"Remainder radii ({rho}, {sigma}) must lie in (0, (1-2d) rho] x (0, (1-2d) sigma]"
            )
        if res.remainder.is_zero():
            return Envelope(0.0, sh.a, 0)
        rate = self.lie.series_rate(res.remainder)
        return self.lie.fourier_norm(res.remainder, rho, sigma, rate=rate)

    def remainder_checks(self, res: NormalFormResult, times: Optional[Sequence[float]] = None,
                         A: Optional[float] = None) -> List[RemainderRecord]:
        """Measured |R(t)| at the restricted radii against epsilon A e^{-(r + a_{r+1} t)}."""
        sh = res.shells
        a = sh.a
        times = [0.0, 1.0 / a, 5.0 / a, 20.0 / a] if times is None else list(times)
        A = 10.0 * f_tilde(sh.n, sh.sigma) if A is None else A
        shrink = 1.0 - 2.0 * sh.d
        a_next = res.a_ladder[res.r]
        records = []
        for t in times:
            measured = self.lie.fourier_norm_at(res.remainder, t, shrink * sh.rho, shrink * sh.sigma)
            bound = sh.epsilon * A * math.exp(-(res.r + a_next * t))
            records.append(RemainderRecord(r=res.r, t=t, measured=measured, bound=bound,
                                           below=measured <= bound))
        return records

    def conservation_defect(self, res: NormalFormResult) -> float:
        """
        Relative gap between T_chi (H0 + sum H_m) and H0 + sum of the assembled levels.
        Nonzero only through terms past S_total and the truncation ledger.
        """
        sh = res.shells
        full = sh.H0 + sh.perturbation()
        transformed = self.lie.lie_transform_apply(res.chi_seq, full, res.s_total)
        return self.lie.relative_residual(transformed - res.transformed(), sh.perturbation(),
                                          20.0 / sh.a)

    # ==================== Map and Report ====================

    def transform_map(self, res: NormalFormResult) -> NearIdentityMap:
        """Lie transform T_chi on the coordinates, valid on the grid box."""
        sh = res.shells
        shift = self.lie.lie_transform_shift(res.chi_seq, res.s_total, sh.H0)
        return NearIdentityMap((shift,), "lie_transform", "forward", sh.basis.box,
                               sh.d * sh.rho, (), self.settings.INVERSE_MAP_ITERATIONS)

    def build_report(self, res: NormalFormResult, flags: Optional[Dict[str, bool]] = None,
                     check_conservation: bool = False) -> NekhoroshevReport:
        sh = res.shells
        envelope = self.remainder_norm(res)
        a_next = res.a_ladder[res.r]
        return NekhoroshevReport(
            N=sh.N, r=res.r, s_total=res.s_total, levels=res.level_records,
            remainder_envelope=EnvelopeRecord.from_envelope(envelope),
            remainder_rate_target=a_next,
            remainder_rate_ok=res.remainder.is_zero() or envelope.a >= a_next * (1 - 1e-12),
            remainder_checks=self.remainder_checks(res),
            tail_ledger=res.tail_ledger,
            ledger_total=res.ledger_total,
            conservation_defect=self.conservation_defect(res) if check_conservation else None,
            flags=dict(flags or {}),
        )
