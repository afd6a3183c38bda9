"""
空間 Green 関数 G(z, j_0, ·): (zI - 𝓛)G = δ_{j_0}。

直接解法 (帯行列の疎 LU) と、Jost 基底による展開 (j の 3 領域) の両方を持つ。
両者の一致がこのパッケージの中心的な検算になる。
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, Optional, Sequence

import numpy as np
from scipy import linalg, sparse
from scipy.sparse import linalg as spla

from shockstab.errors import NearSingularResolvent, SingularBasisMatrix
from shockstab.fitting import ExponentialFit, fit_exponential_decay
from shockstab.operator import LinearizedOperator
from shockstab.resolvent.companion import CompanionSystem, center_block
from shockstab.resolvent.evans import EvansData
from shockstab.resolvent.jost import ModeBasis
from shockstab.resolvent.scattering import contour_residue, g_tilde
from shockstab.scheme import EndStateLinearization

logger = logging.getLogger(__name__)

RESOLVENT_LIMIT = 1e8
BASIS_CONDITION_LIMIT = 1e12
FIT_MIN_DISTANCE = 10


@dataclass(frozen=True)
class SpatialGreenData:
    """G[i][:, e] = G(z, j_0, j)e (j = lattice[i])。"""

    z: complex
    j0: int
    lattice: np.ndarray
    G: np.ndarray
    solve_residual: float
    fits: Dict[str, Optional[ExponentialFit]] = field(default_factory=dict)

    def at(self, j: int) -> np.ndarray:
        return self.G[int(j) - int(self.lattice[0])]

    def to_rows(self) -> list:
        rows = []
        for index, j in enumerate(self.lattice):
            block = self.G[index]
            row = {"j": int(j), "abs": float(np.max(np.abs(block)))}
            for a in range(block.shape[0]):
                for b in range(block.shape[1]):
                    row[f"G{a}{b}"] = complex(block[a, b])
            rows.append(row)
        return rows

    def to_dict(self) -> dict:
        return {
            "z": self.z,
            "j0": self.j0,
            "solve_residual": self.solve_residual,
            "fits": {s: (f.to_dict() if f else None) for s, f in self.fits.items()},
        }


def resolvent_matrix(L: LinearizedOperator, z: complex) -> sparse.csc_matrix:
    size = L.matrix.shape[0]
    return (complex(z) * sparse.identity(size, format="csr", dtype=complex) - L.matrix).tocsc()


def _delta_rhs(L: LinearizedOperator, j0: int) -> np.ndarray:
    rhs = np.zeros((L.n_cells * L.d, L.d), dtype=complex)
    rhs[L.cell(j0) * L.d + np.arange(L.d), np.arange(L.d)] = 1.0
    return rhs


def resolvent_columns(L: LinearizedOperator, z: complex, j0: int) -> np.ndarray:
    try:
        lu = spla.splu(resolvent_matrix(L, z))
    except RuntimeError as exc:
        raise NearSingularResolvent(f"zI - L is singular at z={z}: {exc}", z=complex(z)) from exc
    columns = lu.solve(_delta_rhs(L, j0))
    magnitude = float(np.max(np.abs(columns)))
    if not np.isfinite(magnitude) or magnitude > RESOLVENT_LIMIT:
        raise NearSingularResolvent(f"|G| = {magnitude:.2e} at z={z}: z is too close to the spectrum", z=complex(z))
    return columns


def spatial_green(L: LinearizedOperator, z: complex, j0: int) -> SpatialGreenData:
    """
    e ごとに 1 本の帯行列解法で G(z, j_0, ·) を求め、|j - j_0| ∈ [10, J_dom/2] で両側の減衰を回帰する。

    Raises
    ------
    NearSingularResolvent
        LU が特異、または |G| > 1e8 (z が切断作用素のスペクトルから 1e-8 以内) の場合
    """

    z = complex(z)
    columns = resolvent_columns(L, z, j0)
    residual = float(np.max(np.abs(resolvent_matrix(L, z) @ columns - _delta_rhs(L, j0))))
    G = columns.reshape(L.n_cells, L.d, L.d)

    j = L.lattice
    distance = np.abs(j - j0)
    magnitude = np.max(np.abs(G), axis=(1, 2))
    window = (distance >= FIT_MIN_DISTANCE) & (distance <= L.J_dom // 2)
    fits = {
        "+": fit_exponential_decay(distance[window & (j > j0)], magnitude[window & (j > j0)]),
        "-": fit_exponential_decay(distance[window & (j < j0)], magnitude[window & (j < j0)]),
    }
    logger.info("[Green] z=%s j0=%d: solve residual %.2e", z, j0, residual)
    return SpatialGreenData(z=z, j0=int(j0), lattice=j, G=G, solve_residual=residual, fits=fits)


def fourier_green(end: EndStateLinearization, side: str, z: complex, j: int, n_quad: int = 4096) -> np.ndarray:
    """
    定数係数 𝓛^± の G(z, 0, j) = (1/2π)∫ e^{ijξ}(z - Σ_k A_k e^{ikξ})^{-1} dξ を周期台形則で。
    """

    coefficients = end.side(side)
    p, q = coefficients.p, coefficients.q
    xi = 2 * np.pi * np.arange(n_quad) / n_quad
    ks = np.arange(-p, q + 1)
    phases = np.exp(1j * np.outer(xi, ks))
    symbol = np.einsum("xk,kab->xab", phases, coefficients.A)
    d = symbol.shape[-1]
    inverse = np.linalg.inv(complex(z) * np.eye(d)[None] - symbol)
    return np.mean(np.exp(1j * j * xi)[:, None, None] * inverse, axis=0)


@dataclass(frozen=True)
class ResidueField:
    """
    Res_{z=1} G(z, j_0, ·)。rank-1 分解 residue ≈ V ⊗ κ の V (列空間) と κ (行ベクトル)。
    """

    j0: int
    radius: float
    residue: np.ndarray
    laurent_minus2: np.ndarray
    V: np.ndarray
    kappa: np.ndarray
    rank_defect: float
    laurent_ratio: float
    radius_gap: float

    def to_dict(self) -> dict:
        return {
            "j0": self.j0,
            "radius": self.radius,
            "kappa": [complex(k) for k in self.kappa],
            "rank_defect": self.rank_defect,
            "laurent_ratio": self.laurent_ratio,
            "radius_gap": self.radius_gap,
        }


def residue_field(L: LinearizedOperator, j0: int, radius: float = 0.01, n_nodes: int = 256) -> ResidueField:
    """
    (1/2πi)∮_{|z-1|=ρ} G(z, j_0, ·) dz と (z-1)^{-2} の係数。半径 ρ/2 でも取り直して相対差を報告する。
    """

    offsets = radius * np.exp(2j * np.pi * np.arange(n_nodes) / n_nodes)
    samples = np.array([resolvent_columns(L, 1.0 + o, j0) for o in offsets])
    residue = np.mean(offsets[:, None, None] * samples, axis=0)
    minus2 = np.mean((offsets ** 2)[:, None, None] * samples, axis=0)
    half = contour_residue(lambda z: resolvent_columns(L, z, j0), radius=radius / 2, n_nodes=n_nodes)
    scale = float(np.max(np.abs(residue)))
    gap = float(np.max(np.abs(residue - half)) / scale)

    u, s, vh = linalg.svd(residue, full_matrices=False)
    rank_defect = float(s[1] / s[0]) if s.size > 1 else 0.0
    V = u[:, 0].reshape(L.n_cells, L.d)
    kappa = s[0] * vh[0]
    laurent_ratio = float(np.max(np.abs(minus2)) / scale)
    logger.info("[Green] residue at j0=%d: rank defect %.2e, Laurent ratio %.2e, radius gap %.2e",
                j0, rank_defect, laurent_ratio, gap)
    return ResidueField(
        j0=int(j0), radius=radius, residue=residue.reshape(L.n_cells, L.d, L.d),
        laurent_minus2=minus2.reshape(L.n_cells, L.d, L.d), V=V, kappa=kappa, rank_defect=rank_defect,
        laurent_ratio=laurent_ratio, radius_gap=gap,
    )


# --------------------------------------------------------------------------- #
# Basis expansion
# --------------------------------------------------------------------------- #

@dataclass(frozen=True)
class DeltaCoefficients:
    z: complex
    j0: int
    side: str
    delta: np.ndarray
    c_tilde: np.ndarray
    limit: np.ndarray
    condition: float

    @property
    def deviation(self) -> float:
        return float(np.max(np.abs(self.delta - self.limit)))


def _lead_rhs(companion: CompanionSystem, j0: int, e: np.ndarray) -> np.ndarray:
    """(A_{j_0,q}^{-1} e, 0, …, 0)。"""
    b = np.zeros(companion.n, dtype=complex)
    b[: companion.d] = np.linalg.solve(companion.lead_block(j0), e)
    return b


def delta_coefficients(basis: ModeBasis, companion: CompanionSystem, j0: int, e: np.ndarray) -> DeltaCoefficients:
    """
    Δ_m^±(z, j_0, e) = N^±(z, j_0)^{-1}(A_{j_0,q}^{-1}e, 0, …)、N^± の列は V_m^±(z, j_0+1)。
    j_0 ≥ 0 で + 側、j_0 < 0 で - 側。𝒞̃_m = ζ_m^{-j_0-1} Δ_m。

    Raises
    ------
    SingularBasisMatrix
        cond(N^±) > 1e12 の場合
    """

    side = "+" if j0 >= 0 else "-"
    basis_side = basis.side(side)
    e = np.asarray(e, dtype=complex)
    N = basis_side.V_at(j0 + 1).T
    condition = float(np.linalg.cond(N))
    if condition > BASIS_CONDITION_LIMIT:
        raise SingularBasisMatrix(f"cond(N^{side}) = {condition:.2e} at j0={j0}", condition=condition)
    delta = np.linalg.solve(N, _lead_rhs(companion, j0, e))
    c_tilde = basis_side.zeta ** (-j0 - 1) * delta
    # ζ_m′ l_l^T e = L_m[:d] (A_q^±)^{-1} e
    far_lead = companion.lead_block(companion.J_dom + 1 if side == "+" else -companion.J_dom - 1)
    limit = basis_side.L[:, : companion.d] @ np.linalg.solve(far_lead, e)
    return DeltaCoefficients(z=basis.z, j0=int(j0), side=side, delta=delta, c_tilde=c_tilde, limit=limit,
                             condition=condition)


@dataclass(frozen=True)
class GreenExpansion:
    z: complex
    j0: int
    lattice: np.ndarray
    values: np.ndarray

    def at(self, j: int) -> np.ndarray:
        return self.values[int(j) - int(self.lattice[0])]


def _expansion_weights(basis: ModeBasis, data: EvansData, c: np.ndarray, j0: int) -> Dict[str, np.ndarray]:
    """各領域で W^± の列に掛ける係数ベクトル。"""
    n, dp = data.n, data.dp
    ss, su = list(data.sets.ss), list(data.sets.su)
    if j0 >= 0:
        G = g_tilde(basis, data, "+")
        far = np.arange(dp, n)
        # m ∈ {1..dp-1} への横断項と Φ_1 の極の項
        cross = c[far] @ G[far]
        shared = np.zeros(n, dtype=complex)
        shared[1:dp] -= cross[1:dp]
        shared[ss] -= cross[0] * data.theta_s
        above = shared.copy()
        above[:dp] -= c[:dp]
        between = shared.copy()
        between[dp:] += c[dp:]
        below = np.zeros(n, dtype=complex)
        below[dp:n - 1] += cross[dp:n - 1]
        below[su] += cross[n - 1] * data.theta_u
        return {"above": above, "between": between, "below": below}

    G = g_tilde(basis, data, "-")
    near = np.arange(dp)
    k = c[near] @ G[near]
    plus = np.zeros(n, dtype=complex)
    plus[1:dp] -= k[1:dp]
    plus[ss] -= k[0] * data.theta_s
    minus = np.zeros(n, dtype=complex)
    minus[dp:] += c[dp:]
    minus[dp:n - 1] += k[dp:n - 1]
    minus[su] += k[n - 1] * data.theta_u
    return {"plus": plus, "minus": minus, "between": minus - c}


def green_from_basis(basis: ModeBasis, data: EvansData, companion: CompanionSystem, j0: int, e: np.ndarray,
                     js: Optional[Sequence[int]] = None) -> GreenExpansion:
    """
    Jost 基底による G(z, j_0, j)e。j_0 ≥ 0 では
      j ≥ j_0+1: -Σ_{m≤dp} 𝒞̃_m W_m^+ - (横断項) - (極の項)·Φ_1
      0 ≤ j ≤ j_0: Σ_{m>dp} 𝒞̃_m W_m^+ - (横断項) - (極の項)·Φ_1
      j < 0: Σ_{m>dp} (Σ_{m′>dp} g̃_{m′,m}^+ 𝒞̃_{m′}) Φ_m
    j_0 < 0 では - 側の基底で同じ形を鏡映する。basis は θ 用に並べ替え済みであること。
    """

    e = np.asarray(e, dtype=complex)
    b = _lead_rhs(companion, j0, e)
    side = "+" if j0 >= 0 else "-"
    W_anchor = basis.side(side).W_at(j0 + 1)
    if np.linalg.cond(W_anchor) > BASIS_CONDITION_LIMIT * max(1.0, float(np.max(np.abs(W_anchor)))):
        raise SingularBasisMatrix(f"W^{side}(z, {j0 + 1}) is singular", j0=j0)
    c = np.linalg.solve(W_anchor, b)
    weights = _expansion_weights(basis, data, c, j0)

    if js is None:
        js = range(basis.minus.j_lo, basis.plus.j_hi + 1)
    js = np.asarray(list(js), dtype=int)
    values = np.empty((js.size, companion.d), dtype=complex)
    for index, j in enumerate(js):
        if j0 >= 0:
            if j >= j0 + 1:
                Y = basis.plus.W_at(j) @ weights["above"]
            elif j >= 0:
                Y = basis.plus.W_at(j) @ weights["between"]
            else:
                Y = basis.minus.W_at(j) @ weights["below"]
        else:
            if j >= 0:
                Y = basis.plus.W_at(j) @ weights["plus"]
            elif j >= j0 + 1:
                Y = basis.minus.W_at(j) @ weights["between"]
            else:
                Y = basis.minus.W_at(j) @ weights["minus"]
        values[index] = center_block(Y, companion.d, companion.q)
    return GreenExpansion(z=basis.z, j0=int(j0), lattice=js, values=values)
