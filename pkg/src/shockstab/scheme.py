"""
保存型一段差分スキーム

    (𝒩u)_j = u_j - ν (F(ν; u_{j-p+1}, …, u_{j+q}) - F(ν; u_{j-p}, …, u_{j+q-1}))

の評価・検証と、端点状態およびプロファイルに沿った線形化係数 B, A の組み立て。

格子は j ∈ [-J, J] を配列添字 i = j + J で保持する。打ち切り外は u^± で埋める。
"""

import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from shockstab.conservation_model import CharacteristicData, ConservationLaw, LaxShockData
from shockstab.errors import CommutationFailure, ConsistencyFailure, SingularEdgeMatrix, StateOutOfDomain
from shockstab.fitting import ExponentialFit, fit_exponential_decay

logger = logging.getLogger(__name__)

StencilFn = Callable[[np.ndarray], np.ndarray]

IDENTITY_TOL = 1e-10
COMMUTATION_TOL = 1e-9
EDGE_CONDITION_LIMIT = 1e12


@dataclass(frozen=True)
class StencilScheme:
    """
    numerical_flux は (..., p+q, d) のステンシル (u_{-p}, …, u_{q-1}) を受け取り (..., d) を返す。
    flux_partials は (..., p+q, d, d) を返す。None の場合は 4 次中心差分で代用する。
    """

    name: str
    law: ConservationLaw
    p: int
    q: int
    nu: float
    numerical_flux: StencilFn
    flux_partials: Optional[StencilFn] = None
    params: Dict[str, float] = field(default_factory=dict)

    @property
    def width(self) -> int:
        return self.p + self.q

    def partials(self, stencil: np.ndarray) -> np.ndarray:
        if self.flux_partials is not None:
            return np.asarray(self.flux_partials(stencil), dtype=float)
        return finite_difference_partials(self.numerical_flux, stencil)

    def to_dict(self) -> dict:
        return {"name": self.name, "p": self.p, "q": self.q, "nu": self.nu, **self.params}


def finite_difference_partials(flux: StencilFn, stencil: np.ndarray) -> np.ndarray:
    """4 次中心差分、刻み 1e-5·(1+‖u‖)。"""
    stencil = np.asarray(stencil, dtype=float)
    width, d = stencil.shape[-2:]
    scale = 1e-5 * (1.0 + np.max(np.abs(stencil)))
    out = np.empty(stencil.shape[:-2] + (width, d, d))
    for k in range(width):
        for c in range(d):
            step = np.zeros_like(stencil)
            step[..., k, c] = scale
            out[..., k, :, c] = (
                -flux(stencil + 2 * step) + 8 * flux(stencil + step)
                - 8 * flux(stencil - step) + flux(stencil - 2 * step)
            ) / (12 * scale)
    return out


def modified_lax_friedrichs(law: ConservationLaw, nu: float, D: float) -> StencilScheme:
    """F(ν; u, v) = (f(u) + f(v))/2 - (D/(2ν))(v - u), p = q = 1。"""
    if nu <= 0:
        raise ValueError(f"nu must be positive, got {nu}")
    viscosity = D / (2.0 * nu)

    def numerical_flux(stencil: np.ndarray) -> np.ndarray:
        u, v = stencil[..., 0, :], stencil[..., 1, :]
        return 0.5 * (law.f(u) + law.f(v)) - viscosity * (v - u)

    def flux_partials(stencil: np.ndarray) -> np.ndarray:
        u, v = stencil[..., 0, :], stencil[..., 1, :]
        eye = np.eye(law.d)
        return np.stack([0.5 * law.df(u) + viscosity * eye, 0.5 * law.df(v) - viscosity * eye], axis=-3)

    return StencilScheme(
        name="modified-lax-friedrichs",
        law=law,
        p=1,
        q=1,
        nu=float(nu),
        numerical_flux=numerical_flux,
        flux_partials=flux_partials,
        params={"D": float(D)},
    )


# --------------------------------------------------------------------------- #
# Evolution
# --------------------------------------------------------------------------- #

def pad_states(scheme: StencilScheme, states: np.ndarray, u_minus: np.ndarray, u_plus: np.ndarray) -> np.ndarray:
    return np.concatenate([
        np.repeat(np.asarray(u_minus, dtype=float)[None, :], scheme.p, axis=0),
        states,
        np.repeat(np.asarray(u_plus, dtype=float)[None, :], scheme.q, axis=0),
    ])


def interface_stencils(scheme: StencilScheme, states: np.ndarray, u_minus: np.ndarray, u_plus: np.ndarray) -> np.ndarray:
    """N セルに対し N+1 個の界面ステンシル (N+1, p+q, d)。界面 i はセル i の左側。"""
    padded = pad_states(scheme, states, u_minus, u_plus)
    windows = sliding_window_view(padded, scheme.width, axis=0)
    return np.moveaxis(windows, -1, -2)


def evolve(scheme: StencilScheme, states: np.ndarray, u_minus: np.ndarray, u_plus: np.ndarray) -> np.ndarray:
    states = np.asarray(states, dtype=float)
    if states.ndim == 1:
        states = states[:, None]
    if states.shape[0] < scheme.width + 1:
        raise ValueError(f"sequence length {states.shape[0]} < p+q+1 = {scheme.width + 1}")
    fluxes = scheme.numerical_flux(interface_stencils(scheme, states, u_minus, u_plus))
    if not np.all(np.isfinite(fluxes)):
        raise StateOutOfDomain(f"{scheme.name}: non-finite numerical flux")
    return states - scheme.nu * (fluxes[1:] - fluxes[:-1])


def consistency_defect(scheme: StencilScheme, states: np.ndarray) -> float:
    """max |F(ν; u, …, u) - f(u)|。"""
    states = np.asarray(states, dtype=float)
    stencils = np.repeat(states[:, None, :], scheme.width, axis=1)
    return float(np.max(np.abs(scheme.numerical_flux(stencils) - scheme.law.f(states))))


# --------------------------------------------------------------------------- #
# CFL
# --------------------------------------------------------------------------- #

@dataclass(frozen=True)
class CflReport:
    passed: bool
    nu_lambda_min: float
    nu_lambda_max: float
    margin: float
    violations: List[List[float]]

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "nu_lambda_min": self.nu_lambda_min,
            "nu_lambda_max": self.nu_lambda_max,
            "margin": self.margin,
            "violations": self.violations,
        }


def check_cfl(scheme: StencilScheme, states: np.ndarray) -> CflReport:
    """全サンプル状態で -q ≤ νλ ≤ p を確認する。違反は例外ではなく報告に載せる。"""
    states = np.atleast_2d(np.asarray(states, dtype=float))
    speeds = np.linalg.eigvals(scheme.law.df(states)).real * scheme.nu
    low, high = speeds.min(axis=-1), speeds.max(axis=-1)
    bad = (low < -scheme.q) | (high > scheme.p)
    margin = float(min(scheme.p - high.max(), low.min() + scheme.q))
    return CflReport(
        passed=not bool(bad.any()),
        nu_lambda_min=float(low.min()),
        nu_lambda_max=float(high.max()),
        margin=margin,
        violations=states[bad][:10].tolist(),
    )


def cfl_sample_states(u_minus: np.ndarray, u_plus: np.ndarray, values: Optional[np.ndarray] = None,
                      margin: float = 0.0, n_segment: int = 33) -> np.ndarray:
    """u^- と u^+ を結ぶ線分を中点まわりに (1+margin) 倍したものとプロファイル値を合わせる。"""
    u_minus = np.asarray(u_minus, dtype=float)
    u_plus = np.asarray(u_plus, dtype=float)
    mid = 0.5 * (u_minus + u_plus)
    t = np.linspace(-0.5, 0.5, n_segment)[:, None] * (1.0 + margin)
    segment = mid + t * (u_plus - u_minus)
    if values is None:
        return segment
    hull = mid + (1.0 + margin) * (np.asarray(values, dtype=float) - mid)
    return np.concatenate([segment, hull])


# --------------------------------------------------------------------------- #
# Linearization
# --------------------------------------------------------------------------- #

@dataclass(frozen=True)
class LinearizationCoefficients:
    """
    B[..., k+p] = B_k (k ∈ [-p, q-1])、A[..., k+p] = A_k (k ∈ [-p, q])。

    side が "profile" のとき先頭軸はセル添字 i = j + J_dom、A_plus / A_minus に端点値を持つ。
    """

    side: str
    p: int
    q: int
    B: np.ndarray
    A: np.ndarray
    edge_condition: Dict[str, float]
    J_dom: Optional[int] = None
    A_plus: Optional[np.ndarray] = None
    A_minus: Optional[np.ndarray] = None
    tail_fits: Dict[str, Optional[ExponentialFit]] = field(default_factory=dict)

    def A_k(self, k: int) -> np.ndarray:
        return self.A[..., k + self.p, :, :]

    def blocks_at(self, j: int) -> np.ndarray:
        """A_{j,·}。打ち切り外では端点値。"""
        if self.side != "profile":
            return self.A
        if j > self.J_dom:
            return self.A_plus
        if j < -self.J_dom:
            return self.A_minus
        return self.A[j + self.J_dom]


@dataclass(frozen=True)
class DiagonalSymbolCoefficients:
    """lam[side][l, k+p] = λ_{l,k}^±。"""

    lam: Dict[str, np.ndarray]


@dataclass(frozen=True)
class EndStateLinearization:
    plus: LinearizationCoefficients
    minus: LinearizationCoefficients
    diagonal: DiagonalSymbolCoefficients

    def side(self, side: str) -> LinearizationCoefficients:
        return self.plus if side == "+" else self.minus

    def to_dict(self) -> dict:
        return {
            side: {
                "A": coefs.A.tolist(),
                "edge_condition": coefs.edge_condition,
                "lambda": self.diagonal.lam[side].tolist(),
            }
            for side, coefs in (("+", self.plus), ("-", self.minus))
        }


def _assemble_A(B_here: np.ndarray, B_next: np.ndarray, p: int, q: int) -> np.ndarray:
    """A_k = δ_{k0} Id + B_{j,k} - B_{j+1,k-1}。"""
    d = B_here.shape[-1]
    A = np.zeros(B_here.shape[:-3] + (p + q + 1, d, d))
    A[..., : p + q, :, :] += B_here
    A[..., 1:, :, :] -= B_next
    A[..., p, :, :] += np.eye(d)
    return A


def _edge_conditions(A: np.ndarray, p: int, q: int, label: str) -> Dict[str, float]:
    conditions = {
        "A_-p": float(np.max(np.linalg.cond(A[..., 0, :, :]))),
        "A_q": float(np.max(np.linalg.cond(A[..., p + q, :, :]))),
    }
    for name, value in conditions.items():
        if not np.isfinite(value) or value > EDGE_CONDITION_LIMIT:
            raise SingularEdgeMatrix(f"{label}: {name} is singular (cond {value:.3e})", condition=value)
    return conditions


def _end_state_coefficients(scheme: StencilScheme, u: np.ndarray, side: str) -> LinearizationCoefficients:
    stencil = np.repeat(np.asarray(u, dtype=float)[None, :], scheme.width, axis=0)
    B = scheme.nu * scheme.partials(stencil)
    A = _assemble_A(B, B, scheme.p, scheme.q)

    ks = np.arange(-scheme.p, scheme.q + 1)
    scale = max(1.0, float(np.max(np.abs(A))))
    total_defect = np.max(np.abs(A.sum(axis=0) - np.eye(scheme.law.d)))
    moment_defect = np.max(np.abs(np.tensordot(ks, A, axes=1) + scheme.nu * scheme.law.df(u)))
    if max(total_defect, moment_defect) > IDENTITY_TOL * scale:
        raise ConsistencyFailure(
            f"side {side}: Σ A_k = Id / Σ k A_k = -ν df(u) violated ({total_defect:.2e}, {moment_defect:.2e})"
        )
    return LinearizationCoefficients(
        side=side, p=scheme.p, q=scheme.q, B=B, A=A,
        edge_condition=_edge_conditions(A, scheme.p, scheme.q, f"side {side}"),
    )


def _diagonalize(A: np.ndarray, char: CharacteristicData, side: str) -> np.ndarray:
    P, P_inv = char.right_vectors, char.left_vectors
    D = np.einsum("ab,kbc,cd->kad", P_inv, A, P)
    diagonal = np.diagonal(D, axis1=1, axis2=2)
    leakage = np.max(np.abs(D - np.einsum("ka,ab->kab", diagonal, np.eye(P.shape[0]))))
    if leakage > COMMUTATION_TOL * max(1.0, float(np.max(np.abs(A)))):
        raise CommutationFailure(f"side {side}: P^-1 A_k P off-diagonal leakage {leakage:.2e}", leakage=leakage)
    return diagonal.T.copy()


def linearize_at_end_states(scheme: StencilScheme, shock: LaxShockData) -> EndStateLinearization:
    plus = _end_state_coefficients(scheme, shock.u_plus, "+")
    minus = _end_state_coefficients(scheme, shock.u_minus, "-")
    lam = {
        "+": _diagonalize(plus.A, shock.char_plus, "+"),
        "-": _diagonalize(minus.A, shock.char_minus, "-"),
    }
    logger.info("[Scheme] end-state linearization ok, cond(A_-p)=%.2e cond(A_q)=%.2e",
                plus.edge_condition["A_-p"], plus.edge_condition["A_q"])
    return EndStateLinearization(plus=plus, minus=minus, diagonal=DiagonalSymbolCoefficients(lam=lam))


def linearize_states(scheme: StencilScheme, values: np.ndarray, u_minus: np.ndarray, u_plus: np.ndarray,
                     end: EndStateLinearization) -> LinearizationCoefficients:
    """格子上の状態列 values (N, d) に沿った A_{j,k} (N, p+q+1, d, d)。"""
    values = np.asarray(values, dtype=float)
    J_dom = (values.shape[0] - 1) // 2
    stencils = interface_stencils(scheme, values, u_minus, u_plus)
    B = scheme.nu * scheme.partials(stencils)
    A = _assemble_A(B[:-1], B[1:], scheme.p, scheme.q)

    j = np.arange(-J_dom, J_dom + 1)
    deviation_plus = np.max(np.abs(A - end.plus.A), axis=(1, 2, 3))
    deviation_minus = np.max(np.abs(A - end.minus.A), axis=(1, 2, 3))
    tail_fits = {
        "+": fit_exponential_decay(j[j > 0], deviation_plus[j > 0]),
        "-": fit_exponential_decay(-j[j < 0], deviation_minus[j < 0]),
    }
    return LinearizationCoefficients(
        side="profile", p=scheme.p, q=scheme.q, B=B, A=A,
        edge_condition=_edge_conditions(A, scheme.p, scheme.q, "profile"),
        J_dom=J_dom, A_plus=end.plus.A, A_minus=end.minus.A, tail_fits=tail_fits,
    )


def linearize_along_profile(scheme: StencilScheme, profile, end: EndStateLinearization) -> LinearizationCoefficients:
    coefficients = linearize_states(scheme, profile.values, profile.u_minus, profile.u_plus, end)
    fit = coefficients.tail_fits.get("+")
    if fit is not None:
        logger.info("[Scheme] A_{j,k} -> A_k^+ at rate %.3f (R²=%.4f)", fit.rate, fit.r_squared)
    return coefficients
