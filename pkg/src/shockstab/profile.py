"""
定常離散衝撃波プロファイル (SDSP) ū を 𝒩(ū) = ū の不動点として打ち切り格子上で求める。

Newton 法の Jacobian は 𝓛 - I (線形化作用素と同じ帯構造)。SDSP は 1 パラメータ族を成すので
位相条件 l_I^{+T}(u_0 - (u^- + u^+)/2) = s を 1 行追加し、最小二乗系として解く。
"""

import logging
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence

import numpy as np
from scipy import sparse
from scipy.sparse import linalg as spla

from shockstab.conservation_model import LaxShockData
from shockstab.errors import NewtonDivergence, TailBelowFloor, TruncationTooSmall
from shockstab.fitting import ZERO_TAIL, ExponentialFit, fit_exponential_decay
from shockstab.operator import banded_matrix
from shockstab.scheme import EndStateLinearization, StencilScheme, evolve, linearize_states

logger = logging.getLogger(__name__)

TAIL_FLOOR = 1e-12
TRUNCATION_TOL = 1e-8


@dataclass(frozen=True)
class Profile:
    J_dom: int
    values: np.ndarray
    u_minus: np.ndarray
    u_plus: np.ndarray
    residual: float
    iterations: int
    phase_shift: float = 0.0
    converged: bool = True
    history: List[float] = field(default_factory=list)
    tail_fits: Dict[str, ExponentialFit] = field(default_factory=dict)

    @property
    def lattice(self) -> np.ndarray:
        return np.arange(-self.J_dom, self.J_dom + 1)

    @property
    def d(self) -> int:
        return int(self.values.shape[1])

    def value_at(self, j: int) -> np.ndarray:
        if j > self.J_dom:
            return self.u_plus
        if j < -self.J_dom:
            return self.u_minus
        return self.values[j + self.J_dom]

    def distance_to_end_states(self) -> np.ndarray:
        j = self.lattice
        end = np.where((j >= 0)[:, None], self.u_plus[None, :], self.u_minus[None, :])
        return np.max(np.abs(self.values - end), axis=1)

    def to_dict(self) -> dict:
        return {
            "J_dom": self.J_dom,
            "residual": self.residual,
            "iterations": self.iterations,
            "phase_shift": self.phase_shift,
            "converged": self.converged,
            "history": self.history,
            "tail_fits": {s: f.to_dict() for s, f in self.tail_fits.items()},
        }

    def to_rows(self) -> List[dict]:
        distance = self.distance_to_end_states()
        rows = []
        for index, j in enumerate(self.lattice):
            row = {"j": int(j), "distance": float(distance[index])}
            for c in range(self.d):
                row[f"u{c}"] = float(self.values[index, c])
            rows.append(row)
        return rows


def tanh_connector(shock: LaxShockData, J_dom: int, width: float = 5.0) -> np.ndarray:
    j = np.arange(-J_dom, J_dom + 1)[:, None]
    return shock.midpoint[None, :] + 0.5 * (shock.u_plus - shock.u_minus)[None, :] * np.tanh(j / width)


def _residual(scheme: StencilScheme, values: np.ndarray, shock: LaxShockData, phase: np.ndarray, shift: float,
              J_dom: int) -> np.ndarray:
    R = evolve(scheme, values, shock.u_minus, shock.u_plus) - values
    phase_residual = phase @ (values[J_dom] - shock.midpoint) - shift
    return np.append(R.ravel(), phase_residual)


def _newton_step(scheme: StencilScheme, values: np.ndarray, shock: LaxShockData, end: EndStateLinearization,
                 phase: np.ndarray, residual: np.ndarray, J_dom: int) -> np.ndarray:
    """min ‖K δ + r‖ を拡大系 [[I, K], [K^T, 0]] の疎 LU で解く。"""
    coefficients = linearize_states(scheme, values, shock.u_minus, shock.u_plus, end)
    size = values.size
    jac = banded_matrix(coefficients.A, scheme.p, scheme.q) - sparse.identity(size, format="csr")
    phase_row = sparse.csr_matrix(
        (phase, (np.zeros(phase.size, dtype=int), J_dom * values.shape[1] + np.arange(phase.size))),
        shape=(1, size),
    )
    K = sparse.vstack([jac, phase_row]).tocsr()
    m = K.shape[0]
    augmented = sparse.bmat([[sparse.identity(m), K], [K.T, None]], format="csc")
    rhs = np.concatenate([-residual, np.zeros(size)])
    solution = spla.splu(augmented).solve(rhs)
    return solution[m:].reshape(values.shape)


def solve_profile(
    scheme: StencilScheme,
    shock: LaxShockData,
    end: EndStateLinearization,
    J_dom: int = 200,
    guess: Optional[np.ndarray] = None,
    tol: float = 1e-12,
    max_iter: int = 50,
    phase_shift: float = 0.0,
    armijo_floor: float = 1.0 / 64,
) -> Profile:
    """
    減衰付き Newton 法で 𝒩(ū) - ū = 0 を解く。

    Parameters
    ----------
    guess: Optional[np.ndarray]
        初期値 (2J_dom+1, d)。None の場合は tanh 接続
    phase_shift: float
        位相条件の右辺 s

    Raises
    ------
    NewtonDivergence
        5 ステップで残差が半減しない場合
    TruncationTooSmall
        格子端の値が端点状態から 1e-8 以上離れている場合
    """

    values = tanh_connector(shock, J_dom) if guess is None else np.array(guess, dtype=float).reshape(2 * J_dom + 1, -1)
    phase = shock.char_plus.l(shock.index_I - 1)
    residual = _residual(scheme, values, shock, phase, phase_shift, J_dom)
    norm = float(np.max(np.abs(residual)))
    history = [norm]
    best = (norm, values)
    iterations = 0

    while norm >= tol and iterations < max_iter:
        delta = _newton_step(scheme, values, shock, end, phase, residual, J_dom)
        step = 1.0
        while True:
            trial = values + step * delta
            trial_residual = _residual(scheme, trial, shock, phase, phase_shift, J_dom)
            trial_norm = float(np.max(np.abs(trial_residual)))
            if trial_norm <= (1.0 - 1e-4 * step) * norm or step <= armijo_floor:
                break
            step *= 0.5
        values, residual, norm = trial, trial_residual, trial_norm
        iterations += 1
        history.append(norm)
        if norm < best[0]:
            best = (norm, values)
        logger.debug("[Profile] iteration %d: |R|=%.3e (step %.4f)", iterations, norm, step)
        if iterations >= 5 and norm > 0.5 * history[-6]:
            if best[0] < 10 * tol:
                logger.warning("[Profile] stagnated at %.3e, returning best iterate", best[0])
                break
            raise NewtonDivergence(
                f"residual not halved over 5 damped steps ({history[-6]:.3e} -> {norm:.3e})", history=history
            )

    norm, values = best
    converged = norm < tol
    if not converged:
        logger.warning("[Profile] Newton stopped after %d iterations at residual %.3e", iterations, norm)

    profile = Profile(
        J_dom=J_dom, values=values, u_minus=shock.u_minus, u_plus=shock.u_plus, residual=norm,
        iterations=iterations, phase_shift=phase_shift, converged=converged, history=history,
    )
    edge = np.abs(profile.lattice) >= J_dom - (scheme.p + scheme.q)
    worst = float(np.max(profile.distance_to_end_states()[edge]))
    if worst > TRUNCATION_TOL:
        raise TruncationTooSmall(f"edge values {worst:.2e} away from the end states; increase J_dom", distance=worst)
    logger.info("[Profile] residual %.3e after %d iterations (J_dom=%d)", norm, iterations, J_dom)
    return profile


def verify_exponential_convergence(profile: Profile, floor: float = TAIL_FLOOR) -> Dict[str, ExponentialFit]:
    """
    |j| ∈ [J_dom/4, 3J_dom/4] で log‖ū_j - u^±‖ を回帰する。窓内が floor 未満に落ちる場合は
    floor を上回る区間 (j ≥ 1) へ窓を縮める。

    Raises
    ------
    TailBelowFloor
        縮めた窓にも 3 点未満しか残らない場合
    """

    j = profile.lattice
    distance = profile.distance_to_end_states()
    fits: Dict[str, ExponentialFit] = {}
    for side, mask in (("+", j > 0), ("-", j < 0)):
        cells = np.abs(j[mask])
        tail = distance[mask]
        if np.max(tail) == 0.0:
            fits[side] = ZERO_TAIL
            continue
        window = (cells >= profile.J_dom // 4) & (cells <= 3 * profile.J_dom // 4) & (tail > floor)
        if np.count_nonzero(window) < 5:
            window = (cells >= 2) & (cells <= 3 * profile.J_dom // 4) & (tail > floor) & (tail < 1e-2)
            logger.warning("[Profile] side %s tail hits %.0e before the window end, window shortened to %d cells",
                           side, floor, np.count_nonzero(window))
        fit = fit_exponential_decay(cells[window], tail[window], floor=floor)
        if fit is None:
            raise TailBelowFloor(f"side {side}: fewer than 3 tail values above {floor:.0e}")
        fits[side] = fit
    logger.info("[Profile] tail rates c+=%.4f c-=%.4f", fits["+"].rate, fits["-"].rate)
    return fits


def with_tail_fits(profile: Profile) -> Profile:
    return replace(profile, tail_fits=verify_exponential_convergence(profile))


def profile_family(scheme: StencilScheme, shock: LaxShockData, end: EndStateLinearization, shifts: Sequence[float],
                   J_dom: int = 200, tol: float = 1e-12) -> List[Profile]:
    """位相条件の右辺 s を動かした SDSP 族。前の解を次の初期値に使う。"""
    members = []
    guess = None
    for shift in sorted(shifts, key=abs):
        member = solve_profile(scheme, shock, end, J_dom=J_dom, guess=guess, tol=tol, phase_shift=shift)
        members.append(member)
        guess = member.values
    return members


def ramp_profile(scheme: StencilScheme, build_shock, end_builder, strengths: Sequence[float], J_dom: int = 200,
                 tol: float = 1e-12) -> Profile:
    """
    衝撃波強度を段階的に上げる継続法 (強い衝撃波向け、収束は保証しない)。

    build_shock(strength) -> LaxShockData, end_builder(shock) -> EndStateLinearization。
    """

    profile = None
    for strength in strengths:
        shock = build_shock(strength)
        guess = None if profile is None else _rescale(profile, shock)
        profile = solve_profile(scheme, shock, end_builder(shock), J_dom=J_dom, guess=guess, tol=tol)
        logger.info("[Profile] ramp strength %.4f: %d iterations", strength, profile.iterations)
    return profile


def _rescale(profile: Profile, shock: LaxShockData) -> np.ndarray:
    """前段のプロファイル形状を新しい端点状態へ写す。"""
    span = profile.u_plus - profile.u_minus
    safe = np.where(np.abs(span) > 1e-14, span, 1.0)
    theta = (profile.values - profile.u_minus) / safe
    return shock.u_minus + theta * (shock.u_plus - shock.u_minus)


def extend_profile(profile: Profile, J_new: int) -> Profile:
    """格子を J_new へ広げる (端点値で埋める)。"""
    if J_new < profile.J_dom:
        raise ValueError(f"J_new={J_new} must not shrink the lattice (J_dom={profile.J_dom})")
    pad = J_new - profile.J_dom
    values = np.concatenate([
        np.repeat(profile.u_minus[None, :], pad, axis=0),
        profile.values,
        np.repeat(profile.u_plus[None, :], pad, axis=0),
    ])
    return replace(profile, J_dom=J_new, values=values)


def shift_profile(profile: Profile, cells: int) -> Profile:
    """ū_j -> ū_{j-cells}。"""
    values = np.roll(profile.values, cells, axis=0)
    if cells > 0:
        values[:cells] = profile.u_minus
    elif cells < 0:
        values[cells:] = profile.u_plus
    return replace(profile, values=values)
