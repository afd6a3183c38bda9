"""
Evans 関数 Ev(z) = det(W_1^+, …, W_{dp}^+, W_{dp+1}^-, …, W_{d(p+q)}^-)(z, 0) と、
z = 1 での交わり Σ θ_s W^+ = Σ θ_u W^- から作る基底 Φ_m(z, j)。
"""

import logging
from dataclasses import dataclass, field, replace
from typing import Callable, Dict, List

import numpy as np
from scipy import linalg

from shockstab.errors import IntersectionDimensionMismatch
from shockstab.resolvent.companion import center_block
from shockstab.resolvent.jost import ModeBasis
from shockstab.symbol import EigenvalueCurves, IndexSets

logger = logging.getLogger(__name__)

INTERSECTION_GAP = 1e4
THETA_TOL = 1e-8
THETA_RADIUS = 0.03
THETA_POINTS = 12


@dataclass(frozen=True)
class EvansValue:
    z: complex
    value: complex
    column_scales: np.ndarray

    @property
    def normalized(self) -> complex:
        return self.value / float(np.prod(self.column_scales))

    def to_dict(self) -> dict:
        return {
            "z": self.z,
            "value": self.value,
            "normalized": self.normalized,
            "log10_scale": float(np.sum(np.log10(self.column_scales))),
        }


def evans(basis: ModeBasis, dp: int, j: int = 0) -> EvansValue:
    """列を単位長に揃えて行列式を取り、スケールを別に返す (戻り値 value は元の行列式)。"""
    columns = np.concatenate([basis.plus.W_at(j)[:, :dp], basis.minus.W_at(j)[:, dp:]], axis=1)
    scales = np.linalg.norm(columns, axis=0)
    normalized = linalg.det(columns / scales[None, :])
    return EvansValue(z=basis.z, value=complex(normalized * np.prod(scales)), column_scales=scales)


@dataclass(frozen=True)
class EvansCircle:
    center: complex
    radius: float
    samples: List[EvansValue]
    winding: float
    derivative: complex = 0j
    max_abs: float = 0.0

    def to_rows(self) -> List[dict]:
        return [sample.to_dict() for sample in self.samples]


def winding_number(values: np.ndarray) -> float:
    closed = np.append(values, values[0])
    return float(np.sum(np.angle(closed[1:] / closed[:-1])) / (2 * np.pi))


def evans_circle(basis_at: Callable[[complex], ModeBasis], dp: int, center: complex = 1.0, radius: float = 0.05,
                 n_points: int = 64) -> EvansCircle:
    """|z - center| = radius 上の Ev と偏角原理による零点数。"""
    angles = np.linspace(0.0, 2 * np.pi, n_points, endpoint=False)
    samples = [evans(basis_at(center + radius * np.exp(1j * a)), dp) for a in angles]
    winding = winding_number(np.array([s.normalized for s in samples]))
    raw = np.array([s.value for s in samples])
    # Cauchy: Ev'(center) = mean(Ev(z_k) / (z_k - center))
    derivative = complex(np.mean(raw / (radius * np.exp(1j * angles))))
    logger.info("[Evans] winding number %.4f around |z-%s|=%.3f, Ev'=%.3e", winding, center, radius, abs(derivative))
    return EvansCircle(center=complex(center), radius=radius, samples=samples, winding=winding,
                       derivative=derivative, max_abs=float(np.max(np.abs(raw))))


# --------------------------------------------------------------------------- #
# theta families and the Phi basis
# --------------------------------------------------------------------------- #

@dataclass(frozen=True)
class EvansData:
    """
    z = 1 での θ 係数と添字の並べ替え。perm_plus / perm_minus は元のモード番号の並び。
    V_phi は ΠΦ_1(1, j) (j ∈ [j_lo, j_hi])。
    """

    sets: IndexSets
    dp: int
    n: int
    theta_s: np.ndarray
    theta_u: np.ndarray
    perm_plus: List[int]
    perm_minus: List[int]
    sigma: np.ndarray
    ev_at_one: complex
    j_lo: int
    j_hi: int
    V_phi: np.ndarray
    phi_mismatch: float
    extras: Dict[str, float] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "theta_s": self.theta_s.tolist(),
            "theta_u": self.theta_u.tolist(),
            "perm_plus": self.perm_plus,
            "perm_minus": self.perm_minus,
            "sigma": self.sigma.tolist(),
            "ev_at_one": self.ev_at_one,
            "phi_mismatch": self.phi_mismatch,
            **self.extras,
        }


def _swap_to_front(indices: List[int], weights: np.ndarray, front: bool) -> List[int]:
    order = list(indices)
    target = 0 if front else len(order) - 1
    if abs(weights[target]) >= THETA_TOL * np.max(np.abs(weights)):
        return order
    best = int(np.argmax(np.abs(weights)))
    order[target], order[best] = order[best], order[target]
    return order


def apply_permutation(basis: ModeBasis, data: "EvansData") -> ModeBasis:
    return replace(basis, plus=basis.plus.permuted(data.perm_plus), minus=basis.minus.permuted(data.perm_minus))


def theta_families_and_V0(basis_at_one: ModeBasis, curves: EigenvalueCurves) -> EvansData:
    """
    [W_{I_ss}^+(1,0) | -W_{I_su}^-(1,0)] の最小特異ベクトルから (θ_s, θ_u) を求め、
    θ_{s,1}, θ_{u,d(p+q)} が消えないよう並べ替えてから Φ_1 = Σ θ_s W^+ を作る。

    Raises
    ------
    IntersectionDimensionMismatch
        σ_2/σ_1 ≤ 1e4 (交わりが 1 次元でない) の場合
    """

    sets = curves.global_sets
    sym = curves.sym
    dp, n = sym.d * sym.p, sym.n_modes
    ss, su = list(sets.ss), list(sets.su)
    plus_cols = basis_at_one.plus.W_at(0)[:, ss]
    minus_cols = basis_at_one.minus.W_at(0)[:, su]
    stacked = np.concatenate([plus_cols, -minus_cols], axis=1)
    _, sigma, vh = linalg.svd(stacked)
    sigma_sorted = np.sort(sigma)
    if stacked.shape[1] > 1 and sigma_sorted[1] <= INTERSECTION_GAP * sigma_sorted[0]:
        raise IntersectionDimensionMismatch(
            f"stable/unstable intersection is not one-dimensional (sigma = {sigma_sorted[:2].tolist()})",
            sigma=sigma_sorted.tolist(),
        )
    theta = vh[-1].conj()
    theta = theta / theta[np.argmax(np.abs(theta))]
    theta_s, theta_u = theta[: len(ss)], theta[len(ss):]

    order_ss = _swap_to_front(ss, theta_s, front=True)
    order_su = _swap_to_front(su, theta_u, front=False)
    theta_s = theta_s[[ss.index(m) for m in order_ss]]
    theta_u = theta_u[[su.index(m) for m in order_su]]
    perm_plus = list(range(n))
    perm_plus[ss[0]: ss[-1] + 1] = order_ss
    perm_minus = list(range(n))
    perm_minus[su[0]: su[-1] + 1] = order_su

    data = EvansData(
        sets=sets, dp=dp, n=n, theta_s=theta_s, theta_u=theta_u, perm_plus=perm_plus, perm_minus=perm_minus,
        sigma=sigma_sorted, ev_at_one=evans(basis_at_one, dp).normalized, j_lo=0, j_hi=-1,
        V_phi=np.zeros((0, sym.d), dtype=complex), phi_mismatch=float("nan"),
    )
    basis = apply_permutation(basis_at_one, data)
    j_lo = max(basis.plus.j_lo, basis.minus.j_lo)
    j_hi = min(basis.plus.j_hi, basis.minus.j_hi)
    phi_first = np.array([phi_column(basis, data, j, 0) for j in range(j_lo, j_hi + 1)])
    phi_last = np.array([phi_column(basis, data, j, n - 1) for j in range(j_lo, j_hi + 1)])
    mismatch = float(np.max(np.abs(phi_first - phi_last)) / np.max(np.abs(phi_first)))

    # V_Φ は +側では Φ_1、-側では Φ_n を使い、両側の保存範囲全体に広げる
    plus_range = range(0, basis.plus.j_hi + 1)
    minus_range = range(basis.minus.j_lo, 0)
    V_minus = [center_block(phi_column(basis, data, j, n - 1), sym.d, sym.q) for j in minus_range]
    V_plus = [center_block(phi_column(basis, data, j, 0), sym.d, sym.q) for j in plus_range]
    V_phi = np.array(V_minus + V_plus)
    logger.info("[Evans] theta_s=%s theta_u=%s, Phi_1 vs Phi_n mismatch %.2e", theta_s, theta_u, mismatch)
    return replace(data, j_lo=basis.minus.j_lo, j_hi=basis.plus.j_hi, V_phi=V_phi, phi_mismatch=mismatch)


def phi_column(basis: ModeBasis, data: EvansData, j: int, m: int) -> np.ndarray:
    """Φ_m(z, j)。basis は並べ替え済みであること。"""
    ss, su = list(data.sets.ss), list(data.sets.su)
    if m == 0:
        return basis.plus.W_at(j)[:, ss] @ data.theta_s
    if m == data.n - 1:
        return basis.minus.W_at(j)[:, su] @ data.theta_u
    if m < data.dp:
        return basis.plus.W_at(j)[:, m]
    return basis.minus.W_at(j)[:, m]


@dataclass(frozen=True)
class BasisMatrices:
    phi: np.ndarray
    plus: np.ndarray
    minus: np.ndarray
    tilde_plus: np.ndarray
    tilde_minus: np.ndarray

    def determinants(self) -> Dict[str, complex]:
        return {
            "D_phi": complex(linalg.det(self.phi)),
            "D_plus": complex(linalg.det(self.plus)),
            "D_minus": complex(linalg.det(self.minus)),
        }


def basis_matrices(basis: ModeBasis, data: EvansData, j: int = 0) -> BasisMatrices:
    """𝒢^Φ, 𝒢^±, 𝒢̃^± (z, j)。"""
    n = data.n
    phi = np.column_stack([phi_column(basis, data, j, m) for m in range(n)])
    tilde_plus = basis.plus.W_at(j)
    tilde_minus = basis.minus.W_at(j)
    plus = tilde_plus.copy()
    plus[:, 0] = phi[:, 0]
    minus = tilde_minus.copy()
    minus[:, n - 1] = phi[:, n - 1]
    return BasisMatrices(phi=phi, plus=plus, minus=minus, tilde_plus=tilde_plus, tilde_minus=tilde_minus)


def theta_product_ratio(basis: ModeBasis, data: EvansData, j: int = 0) -> complex:
    """D^Φ / (θ_{s,1} θ_{u,n} Ev)。列ごとに正規化した行列式の比で計算する。"""
    phi = basis_matrices(basis, data, j).phi
    columns = np.concatenate([basis.plus.W_at(j)[:, : data.dp], basis.minus.W_at(j)[:, data.dp:]], axis=1)
    phi_scales = np.linalg.norm(phi, axis=0)
    ev_scales = np.linalg.norm(columns, axis=0)
    ratio = linalg.det(phi / phi_scales[None, :]) / linalg.det(columns / ev_scales[None, :])
    ratio *= np.prod(phi_scales / ev_scales)
    return complex(ratio / (data.theta_s[0] * data.theta_u[-1]))


def theta_product_defect(basis_at: Callable[[complex], ModeBasis], data: EvansData, center: complex = 1.0,
                         radius: float = THETA_RADIUS, n_points: int = THETA_POINTS) -> float:
    """
    D^Φ(z) = θ_{s,1} θ_{u,n} Ev(z) の最大相対誤差を |z - center| = radius 上の n_points 点で測る。
    z = 1 では両辺とも 0 になるので円周上で比べる。basis_at は並べ替え済みの基底を返すこと。
    """

    angles = np.linspace(0.0, 2 * np.pi, n_points, endpoint=False)
    defects = [abs(theta_product_ratio(basis_at(center + radius * np.exp(1j * a)), data) - 1.0) for a in angles]
    return float(max(defects))


def extend_V(data: EvansData, kernel: np.ndarray, lattice: np.ndarray) -> np.ndarray:
    """
    切断格子上の核ベクトル (単位長) を、保存範囲で V = ΠΦ_1(1, ·) と一致するよう定数倍する。
    """

    kernel = np.asarray(kernel)
    lo = max(data.j_lo, int(lattice[0]))
    hi = min(data.j_hi, int(lattice[-1]))
    K = kernel[lo - int(lattice[0]): hi - int(lattice[0]) + 1]
    V = data.V_phi[lo - data.j_lo: hi - data.j_lo + 1]
    scale = np.vdot(K, V) / np.vdot(K, K)
    return scale * kernel
