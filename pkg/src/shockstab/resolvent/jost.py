"""
モード基底 R_m^±, L_m^± と Jost 解 V_m^±(z, j)。

W_m^±(z, j) = ζ_m^±(z)^j V_m^±(z, j) で、V_m^+ → R_m^+ (j → +∞)、V_m^- → R_m^- (j → -∞)。
V は窓内の不動点反復 V = R_m + φ(z)V で求め、窓の外へは漸化式で伸ばす。
前進/後退の和の分割は z = 1 での |ζ_{m′}/ζ_m| で決め、z について正則な基底を保つ。
"""

import logging
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Tuple

import numpy as np
from scipy import signal

from shockstab.conservation_model import LaxShockData
from shockstab.errors import ContractionFailure, IllConditionedVandermonde
from shockstab.fitting import ExponentialFit, fit_exponential_decay
from shockstab.operator import LinearizedOperator
from shockstab.resolvent.companion import CompanionSystem, build_companion
from shockstab.symbol import EigenvalueCurves

logger = logging.getLogger(__name__)

VANDERMONDE_LIMIT = 1e12
FACTORY_CACHE_LIMIT = 512


@dataclass(frozen=True)
class JostSettings:
    J_start: int = 8
    overlap: int = 32
    tol: float = 1e-12
    max_iter: int = 200
    rate_limit: float = 0.9
    cut: float = 1e-14
    max_doublings: int = 2
    min_store: int = 0

    def to_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass(frozen=True)
class SideBasis:
    """
    片側のモード基底。R, L は (n, n) で行 m が R_m, L_m。
    V は (j_hi - j_lo + 1, n_modes, n)、V[i, m] = V_m(j_lo + i)。
    """

    side: str
    z: complex
    zeta: np.ndarray
    zeta_prime: np.ndarray
    R: np.ndarray
    L: np.ndarray
    x1_defect: float
    j_lo: int = 0
    j_hi: int = -1
    V: Optional[np.ndarray] = None
    report: Dict[str, float] = field(default_factory=dict)
    tail_fits: Dict[int, Optional[ExponentialFit]] = field(default_factory=dict)

    @property
    def n(self) -> int:
        return int(self.zeta.size)

    def V_at(self, j: int) -> np.ndarray:
        """(n_modes, n)。保存範囲外は端の値を漸化式なしで使わない。"""
        if self.V is None or not (self.j_lo <= j <= self.j_hi):
            raise IndexError(f"side {self.side}: j={j} outside the stored range [{self.j_lo}, {self.j_hi}]")
        return self.V[j - self.j_lo]

    def W_at(self, j: int) -> np.ndarray:
        """列 m が W_m(z, j) の (n, n) 行列。"""
        return (self.V_at(j) * (self.zeta ** j)[:, None]).T

    def permuted(self, order: List[int]) -> "SideBasis":
        order = list(order)
        V = None if self.V is None else self.V[:, order]
        return replace(self, zeta=self.zeta[order], zeta_prime=self.zeta_prime[order], R=self.R[order],
                       L=self.L[order], V=V)


@dataclass(frozen=True)
class ModeBasis:
    z: complex
    plus: SideBasis
    minus: SideBasis

    def side(self, side: str) -> SideBasis:
        return self.plus if side == "+" else self.minus


def _stacked_mode(zeta: complex, r: np.ndarray, p: int, q: int) -> np.ndarray:
    """R_m = (ζ^{q-1} r, …, ζ^{-p} r)。"""
    return np.concatenate([zeta ** k * r for k in range(q - 1, -p - 1, -1)])


def _side_basis(companion: CompanionSystem, curves: EigenvalueCurves, shock: LaxShockData, side: str,
                z: complex) -> SideBasis:
    sym = curves.sym
    d, p, q = sym.d, sym.p, sym.q
    char = shock.side(side)
    zeta = curves.zeta_all(side, z)
    zeta_prime = curves.zeta_prime_all(side, z, zeta)
    R = np.array([_stacked_mode(zeta[m], char.r(m % d).astype(complex), p, q) for m in range(zeta.size)])
    N_inf = R.T
    cond = np.linalg.cond(N_inf)
    if cond > VANDERMONDE_LIMIT:
        raise IllConditionedVandermonde(f"side {side}: cond(N^inf) = {cond:.2e} at z={z}", condition=cond)
    L = np.linalg.inv(N_inf)

    defect = 0.0
    for m in range(zeta.size):
        l = m % d
        expected = sym.lam[side][l, p + q] * zeta_prime[m] * char.l(l)
        defect = max(defect, float(np.max(np.abs(L[m, :d] - expected))))
    return SideBasis(side=side, z=complex(z), zeta=zeta, zeta_prime=zeta_prime, R=R, L=L, x1_defect=defect)


def mode_basis(companion: CompanionSystem, curves: EigenvalueCurves, shock: LaxShockData, z: complex) -> ModeBasis:
    """
    R_m^± (固有ベクトル)、L_m^± (N^{±,∞} の逆行列の行) と x_1 恒等式の誤差。

    Raises
    ------
    IllConditionedVandermonde
        cond(N^{±,∞}) > 1e12 の場合
    """

    plus = _side_basis(companion, curves, shock, "+", z)
    minus = _side_basis(companion, curves, shock, "-", z)
    if max(plus.x1_defect, minus.x1_defect) > 1e-8:
        logger.warning("[Jost] dual-basis identity defect %.2e at z=%s", max(plus.x1_defect, minus.x1_defect), z)
    return ModeBasis(z=complex(z), plus=plus, minus=minus)


# --------------------------------------------------------------------------- #
# Contraction
# --------------------------------------------------------------------------- #

def _forward_sums(rho: np.ndarray, c: np.ndarray) -> np.ndarray:
    """S(lo) = 0, S(j+1) = ρ S(j) + c(j)。c は (n_window, n_modes)。"""
    out = np.zeros_like(c)
    for index, ratio in enumerate(rho):
        filtered = signal.lfilter([1.0], [1.0, -ratio], c[:, index])
        out[1:, index] = filtered[:-1]
    return out


def _backward_sums(rho: np.ndarray, c: np.ndarray) -> np.ndarray:
    """U(hi+1) = 0, U(j) = ρ^{-1}(c(j) + U(j+1))。"""
    out = np.zeros_like(c)
    for index, ratio in enumerate(rho):
        inverse = 1.0 / ratio
        out[:, index] = signal.lfilter([inverse], [1.0, -inverse], c[::-1, index])[::-1]
    return out


def _cut_index(companion: CompanionSystem, side: str, cut: float) -> int:
    """|j| がこれを超えると ‖ℰ_j‖ < cut·‖M^±‖。"""
    js = np.arange(0, companion.J_dom + 2)
    signed = js if side == "+" else -js
    norms = companion.perturbation_norms(side, signed)
    scale = max(1.0, np.linalg.norm(companion.M_plus if side == "+" else companion.M_minus, 2))
    above = np.flatnonzero(norms >= cut * scale)
    return int(above.max()) + 1 if above.size else 0


def _contract(companion: CompanionSystem, basis: SideBasis, m: int, window: np.ndarray, forward: np.ndarray,
              settings: JostSettings) -> Dict[str, object]:
    side = basis.side
    zeta = basis.zeta[m]
    rho = basis.zeta / zeta
    E = np.array([companion.perturbation(int(j), side) for j in window]) / zeta
    R_m = basis.R[m]
    V = np.repeat(R_m[None, :], window.size, axis=0)
    previous = None
    rate = 0.0
    for iteration in range(1, settings.max_iter + 1):
        c = np.einsum("ab,jbc,jc->ja", basis.L, E, V)
        coeff = np.zeros_like(c)
        if forward.any():
            coeff[:, forward] = _forward_sums(rho[forward], c[:, forward])
        if (~forward).any():
            coeff[:, ~forward] = -_backward_sums(rho[~forward], c[:, ~forward])
        V_new = R_m[None, :] + coeff @ basis.R
        update = float(np.max(np.abs(V_new - V)))
        V = V_new
        if previous is not None and previous > 0:
            rate = update / previous
        previous = update
        if update < settings.tol * max(1.0, float(np.max(np.abs(R_m)))):
            return {"V": V, "iterations": iteration, "rate": rate, "converged": True}
        if iteration >= 4 and rate > settings.rate_limit:
            break
    return {"V": V, "iterations": iteration, "rate": rate, "converged": False}


def _solve_side(companion: CompanionSystem, basis: SideBasis, curves: EigenvalueCurves,
                settings: JostSettings) -> SideBasis:
    side = basis.side
    n = basis.n
    fit = companion.edge_fits.get(side)
    decay = fit.rate if fit is not None and np.isfinite(fit.rate) and fit.rate > 0 else 4.0
    gap = decay / 4.0
    reference = np.abs(curves.roots_at_one[side])
    J_cut = _cut_index(companion, side, settings.cut)

    J_start = settings.J_start
    for attempt in range(settings.max_doublings + 1):
        J_store = max(J_cut, J_start + 8, settings.min_store)
        window = np.arange(J_start, J_store + 1) if side == "+" else np.arange(-J_store, -J_start + 1)
        V_window = np.empty((window.size, n, n), dtype=complex)
        worst_rate, iterations, failed = 0.0, 0, []
        for m in range(n):
            ratio = reference / reference[m]
            forward = ratio < np.exp(-gap) if side == "+" else ratio <= np.exp(gap)
            result = _contract(companion, basis, m, window, forward, settings)
            V_window[:, m] = result["V"]
            worst_rate = max(worst_rate, result["rate"])
            iterations = max(iterations, result["iterations"])
            if not result["converged"]:
                failed.append(m)
        if not failed:
            break
        logger.warning("[Jost] side %s: slow contraction (rate %.3f) for modes %s, doubling J_start to %d",
                       side, worst_rate, failed, 2 * J_start)
        J_start *= 2
    else:
        raise ContractionFailure(
            f"side {side}: contraction rate {worst_rate:.3f} > {settings.rate_limit} after doubling J twice",
            modes=failed,
        )

    V = _propagate(companion, basis, window, V_window, settings.overlap)
    j_lo, j_hi = (-settings.overlap, int(window[-1])) if side == "+" else (int(window[0]), settings.overlap)
    solved = replace(basis, j_lo=j_lo, j_hi=j_hi, V=V)

    recursion = _recursion_defect(companion, solved)
    tail_fits = {}
    for m in range(n):
        deviation = np.linalg.norm(V_window[:, m] - basis.R[m][None, :], axis=1)
        tail_fits[m] = fit_exponential_decay(np.abs(window), deviation)
    report = {
        "J_start": float(J_start), "J_store": float(J_store), "J_cut": float(J_cut), "gap": float(gap),
        "iterations": float(iterations), "rate": float(worst_rate), "recursion_defect": recursion,
    }
    logger.debug("[Jost] side %s at z=%s: %s", side, basis.z, report)
    return replace(solved, report=report, tail_fits=tail_fits)


def _propagate(companion: CompanionSystem, basis: SideBasis, window: np.ndarray, V_window: np.ndarray,
               overlap: int) -> np.ndarray:
    """窓から j = 0 を越えて overlap まで漸化式で伸ばす。"""
    zeta = basis.zeta
    if basis.side == "+":
        values = [V_window[0]]
        for j in range(int(window[0]) - 1, -overlap - 1, -1):
            # V(j) = ζ M_j^{-1} V(j+1)
            nxt = values[-1]
            values.append(np.linalg.solve(companion.at(j), (nxt * zeta[:, None]).T).T)
        return np.concatenate([np.array(values[:0:-1]), V_window])
    values = [V_window[-1]]
    for j in range(int(window[-1]), overlap):
        # V(j+1) = ζ^{-1} M_j V(j)
        values.append((companion.at(j) @ values[-1].T).T / zeta[:, None])
    return np.concatenate([V_window, np.array(values[1:])])


def _recursion_defect(companion: CompanionSystem, basis: SideBasis) -> float:
    worst = 0.0
    for j in range(basis.j_lo, basis.j_hi):
        current = basis.V_at(j)
        nxt = basis.V_at(j + 1)
        image = (companion.at(j) @ current.T).T
        defect = np.abs(nxt * basis.zeta[:, None] - image)
        scale = np.maximum(np.abs(image).max(axis=1), 1e-300)
        worst = max(worst, float(np.max(defect.max(axis=1) / scale)))
    return worst


def jost_solutions(companion: CompanionSystem, basis: ModeBasis, curves: EigenvalueCurves,
                   settings: Optional[JostSettings] = None) -> ModeBasis:
    """
    両側の全モードについて V_m^±(z, j) を求める。保存範囲は + 側 [-overlap, J_store]、
    - 側 [-J_store, overlap]。

    Raises
    ------
    ContractionFailure
        J_start を 2 回倍にしても収縮率が 0.9 を超える場合
    """

    settings = settings or JostSettings()
    plus = _solve_side(companion, basis.plus, curves, settings)
    minus = _solve_side(companion, basis.minus, curves, settings)
    return replace(basis, plus=plus, minus=minus)


def companion_and_basis(L: LinearizedOperator, curves: EigenvalueCurves, shock: LaxShockData, z: complex,
                        settings: Optional[JostSettings] = None) -> Tuple[CompanionSystem, ModeBasis]:
    """z での M_j(z) と両側の Jost 基底をまとめて求める。"""
    companion = build_companion(L, z)
    basis = jost_solutions(companion, mode_basis(companion, curves, shock, z), curves, settings)
    return companion, basis


@dataclass(frozen=True)
class JostFactory:
    """
    z ごとの M_j(z) と Jost 基底。解いた結果は z ごとに保持し、並べ替えだけ違う factory とは共有する。
    perm を与えると θ 用の並べ替えを適用する。
    """

    L: LinearizedOperator
    curves: EigenvalueCurves
    shock: LaxShockData
    settings: JostSettings = field(default_factory=JostSettings)
    perm_plus: Optional[List[int]] = None
    perm_minus: Optional[List[int]] = None
    _solved: Dict[complex, Tuple[CompanionSystem, ModeBasis]] = field(
        default_factory=dict, init=False, repr=False, compare=False, hash=False,
    )

    def solve(self, z: complex) -> Tuple[CompanionSystem, ModeBasis]:
        """並べ替え前の (M_j(z), 基底)。"""
        key = complex(z)
        if key not in self._solved:
            if len(self._solved) >= FACTORY_CACHE_LIMIT:
                self._solved.clear()
            self._solved[key] = companion_and_basis(self.L, self.curves, self.shock, key, self.settings)
        return self._solved[key]

    @property
    def cached_points(self) -> int:
        return len(self._solved)

    def at(self, z: complex) -> Tuple[CompanionSystem, ModeBasis]:
        companion, basis = self.solve(z)
        if self.perm_plus is not None:
            basis = replace(basis, plus=basis.plus.permuted(self.perm_plus))
        if self.perm_minus is not None:
            basis = replace(basis, minus=basis.minus.permuted(self.perm_minus))
        return companion, basis

    def __call__(self, z: complex) -> ModeBasis:
        return self.at(z)[1]

    def with_permutation(self, perm_plus: List[int], perm_minus: List[int]) -> "JostFactory":
        permuted = replace(self, perm_plus=list(perm_plus), perm_minus=list(perm_minus))
        object.__setattr__(permuted, "_solved", self._solved)
        return permuted

    def with_settings(self, **changes) -> "JostFactory":
        return replace(self, settings=replace(self.settings, **changes))
