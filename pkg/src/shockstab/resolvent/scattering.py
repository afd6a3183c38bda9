"""
散乱係数 g̃_{m′,m}^±(z) = D^±(z) g_{m′,m}^±(z) / D^Φ(z)、g^± = com(ℳ^±)、ℳ^± = 𝒢^±(z,0)^{-1} 𝒢^Φ(z,0)。

z = 1 で g(1) が消える成分は正則に延長できるので Richardson 外挿で値を取り、
残りは 1 位の極として |z-1| = ρ 上の台形則で留数を取る。
"""

import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Tuple

import numpy as np
from scipy import linalg

from shockstab.errors import ResidueUnstable
from shockstab.resolvent.evans import EvansData, basis_matrices
from shockstab.resolvent.jost import ModeBasis

logger = logging.getLogger(__name__)

RESIDUE_RADIUS = 0.01
RESIDUE_NODES = 128
RESIDUE_AGREEMENT = 1e-4
RICHARDSON_STEP = 0.02
RICHARDSON_LEVELS = 4
POLE_TOL = 1e-6


def cofactor_matrix(M: np.ndarray) -> np.ndarray:
    """com(M)_{a,b} = (-1)^{a+b} det(M から a 行 b 列を除いた小行列)。"""
    n = M.shape[0]
    out = np.empty_like(M, dtype=complex)
    if n == 1:
        out[0, 0] = 1.0
        return out
    for a in range(n):
        rows = [r for r in range(n) if r != a]
        for b in range(n):
            cols = [c for c in range(n) if c != b]
            out[a, b] = (-1) ** (a + b) * linalg.det(M[np.ix_(rows, cols)])
    return out


@dataclass(frozen=True)
class ScatteringMatrices:
    z: complex
    side: str
    M_cal: np.ndarray
    g: np.ndarray
    D_phi: complex
    D_side: complex

    @property
    def g_tilde(self) -> np.ndarray:
        return self.D_side * self.g / self.D_phi


def scattering_matrices(basis: ModeBasis, data: EvansData, side: str) -> ScatteringMatrices:
    """basis は並べ替え済み。z = 1 では D^Φ = 0 なので g_tilde は使えない (g は使える)。"""
    mats = basis_matrices(basis, data)
    G_side = mats.plus if side == "+" else mats.minus
    M_cal = linalg.solve(G_side, mats.phi)
    dets = mats.determinants()
    return ScatteringMatrices(
        z=basis.z, side=side, M_cal=M_cal, g=cofactor_matrix(M_cal), D_phi=dets["D_phi"],
        D_side=dets["D_plus"] if side == "+" else dets["D_minus"],
    )


def g_tilde(basis: ModeBasis, data: EvansData, side: str) -> np.ndarray:
    return scattering_matrices(basis, data, side).g_tilde


def cofactor_identity_defect(basis: ModeBasis, data: EvansData) -> float:
    """行 m′ < dp で g^+_{m′,m} = δ_{m′,m} D^Φ/D^+ となることの相対誤差。"""
    mats = scattering_matrices(basis, data, "+")
    dp = data.dp
    expected = np.zeros((dp, data.n), dtype=complex)
    expected[:, :dp] = np.eye(dp) * mats.D_phi / mats.D_side
    scale = max(abs(mats.D_phi / mats.D_side), 1e-300)
    return float(np.max(np.abs(mats.g[:dp] - expected)) / scale)


def antisymmetry_defect(basis_at_one: ModeBasis, data: EvansData) -> float:
    """z = 1 で g^+_{m′,1}(1) = -g^+_{m′,d(p+q)}(1) の相対誤差。"""
    g = scattering_matrices(basis_at_one, data, "+").g
    first, last = g[:, 0], g[:, data.n - 1]
    scale = max(float(np.max(np.abs(first))), 1e-300)
    return float(np.max(np.abs(first + last)) / scale)


def richardson_limit(f: Callable[[float], np.ndarray], h: float = RICHARDSON_STEP,
                     levels: int = RICHARDSON_LEVELS) -> Tuple[np.ndarray, np.ndarray]:
    """
    t = h, h/2, … での f(t) を t の多項式で補間し t → 0 の値を返す。
    誤差の目安として 1 段少ない外挿の値も返す。
    """

    steps = h / 2.0 ** np.arange(levels)
    values = np.array([np.asarray(f(t)) for t in steps])
    shape = values.shape[1:]
    flat = values.reshape(levels, -1)

    def extrapolate(count: int) -> np.ndarray:
        vander = np.vander(steps[-count:], count)
        return np.linalg.solve(vander, flat[-count:])[-1]

    return extrapolate(levels).reshape(shape), extrapolate(levels - 1).reshape(shape)


def contour_residue(f: Callable[[complex], np.ndarray], center: complex = 1.0, radius: float = RESIDUE_RADIUS,
                    n_nodes: int = RESIDUE_NODES, order: int = -1) -> np.ndarray:
    """
    (1/2πi)∮ f(z)(z - center)^{-order-1} dz を台形則で。order=-1 で留数、order=-2 で (z-1)^{-2} の係数。
    """

    angles = 2 * np.pi * np.arange(n_nodes) / n_nodes
    offsets = radius * np.exp(1j * angles)
    weights = offsets ** (-order)
    total = sum(w * np.asarray(f(center + o)) for w, o in zip(weights, offsets))
    return total / n_nodes


@dataclass(frozen=True)
class SideScattering:
    side: str
    kinds: np.ndarray
    g_at_one: np.ndarray
    limits: np.ndarray
    residues: np.ndarray
    residue_gap: float
    limit_error: float

    def pole_pairs(self) -> List[Tuple[int, int]]:
        return [tuple(int(i) for i in pair) for pair in np.argwhere(self.kinds == "pole")]

    def to_dict(self) -> dict:
        n = self.kinds.shape[0]
        entries = []
        for a in range(n):
            for b in range(n):
                value = self.residues[a, b] if self.kinds[a, b] == "pole" else self.limits[a, b]
                entries.append({
                    "m_prime": a, "m": b, "kind": str(self.kinds[a, b]),
                    "re": float(value.real), "im": float(value.imag),
                })
        return {"side": self.side, "residue_gap": self.residue_gap, "limit_error": self.limit_error,
                "entries": entries}


@dataclass(frozen=True)
class ScatteringTable:
    sides: Dict[str, SideScattering]
    antisymmetry: float
    cofactor_identity: float
    settings: Dict[str, float] = field(default_factory=dict)

    def limit(self, side: str, m_prime: int, m: int) -> complex:
        return complex(self.sides[side].limits[m_prime, m])

    def residue(self, side: str, m_prime: int, m: int) -> complex:
        return complex(self.sides[side].residues[m_prime, m])

    def kind(self, side: str, m_prime: int, m: int) -> str:
        return str(self.sides[side].kinds[m_prime, m])

    def to_dict(self) -> dict:
        return {
            "antisymmetry": self.antisymmetry,
            "cofactor_identity": self.cofactor_identity,
            "settings": self.settings,
            "sides": {side: table.to_dict() for side, table in self.sides.items()},
        }


def _both_sides(basis_at: Callable[[complex], ModeBasis], data: EvansData, z: complex) -> np.ndarray:
    basis = basis_at(z)
    return np.stack([g_tilde(basis, data, "+"), g_tilde(basis, data, "-")])


def scattering_coefficients(
    basis_at: Callable[[complex], ModeBasis],
    data: EvansData,
    radius: float = RESIDUE_RADIUS,
    n_nodes: int = RESIDUE_NODES,
    h: float = RICHARDSON_STEP,
    z_check: complex = 1.03,
    pole_tol: float = POLE_TOL,
) -> ScatteringTable:
    """
    g̃^±(1) の表。basis_at(z) は θ 用に並べ替え済みの Jost 基底を返すこと。

    Raises
    ------
    ResidueUnstable
        半径 ρ と ρ/2 の留数が相対 1e-4 を超えて食い違う場合
    """

    at_one = basis_at(1.0)
    g_one = {side: scattering_matrices(at_one, data, side).g for side in ("+", "-")}

    residues = contour_residue(lambda z: _both_sides(basis_at, data, z), radius=radius, n_nodes=n_nodes)
    residues_half = contour_residue(lambda z: _both_sides(basis_at, data, z), radius=radius / 2, n_nodes=n_nodes)
    limits, coarse = richardson_limit(lambda t: _both_sides(basis_at, data, 1.0 + t), h=h)

    sides = {}
    for index, side in enumerate(("+", "-")):
        g = g_one[side]
        scale = max(float(np.max(np.abs(g))), 1e-300)
        kinds = np.where(np.abs(g) > pole_tol * scale, "pole", "holomorphic")
        pole = kinds == "pole"
        res = np.where(pole, residues[index], np.nan + 0j)
        lim = np.where(pole, np.nan + 0j, limits[index])
        if pole.any():
            res_scale = max(float(np.max(np.abs(residues[index][pole]))), 1e-300)
            gap = float(np.max(np.abs(residues[index][pole] - residues_half[index][pole])) / res_scale)
        else:
            gap = 0.0
        limit_error = float(np.max(np.abs(limits[index] - coarse[index])[~pole])) if (~pole).any() else 0.0
        if gap > RESIDUE_AGREEMENT:
            raise ResidueUnstable(
                f"side {side}: residues at radius {radius} and {radius / 2} differ by {gap:.2e} (relative)",
                side=side, gap=gap,
            )
        sides[side] = SideScattering(side=side, kinds=kinds, g_at_one=g, limits=lim, residues=res,
                                     residue_gap=gap, limit_error=limit_error)
        logger.info("[Scattering] side %s: %d pole entries, residue gap %.2e", side, int(pole.sum()), gap)

    table = ScatteringTable(
        sides=sides,
        antisymmetry=antisymmetry_defect(at_one, data),
        cofactor_identity=cofactor_identity_defect(basis_at(z_check), data),
        settings={"radius": radius, "n_nodes": n_nodes, "h": h, "z_check": complex(z_check)},
    )
    if table.antisymmetry > 1e-6:
        logger.warning("[Scattering] cofactor antisymmetry defect %.2e at z=1", table.antisymmetry)
    return table
