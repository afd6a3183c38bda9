"""
(zI - 𝓛)u = 0 と同値な 1 階ブロック漸化式 W_{j+1} = M_j(z) W_j。

W_j = (u_{j+q-1}, …, u_{j-p}) (長さ n = d(p+q))。M_j の先頭ブロック行は
-𝔸_{j,q}^{-1} 𝔸_{j,k} (k = q-1, …, -p)、𝔸_{j,k} = z δ_{k,0} I - A_{j,k}。
"""

import logging
from dataclasses import dataclass
from typing import Dict, Optional

import numpy as np

from shockstab.errors import SingularBlock
from shockstab.fitting import ExponentialFit, fit_exponential_decay
from shockstab.operator import LinearizedOperator

logger = logging.getLogger(__name__)

BLOCK_CONDITION_LIMIT = 1e12


def shifted_blocks(A: np.ndarray, z: complex, p: int) -> np.ndarray:
    """𝔸_k = z δ_{k0} I - A_k。A は (..., p+q+1, d, d)。"""
    d = A.shape[-1]
    out = -np.asarray(A, dtype=complex)
    out[..., p, :, :] += z * np.eye(d)
    return out


def companion_matrices(A: np.ndarray, z: complex, p: int, q: int, label: str = "") -> np.ndarray:
    """A (..., p+q+1, d, d) から M (..., n, n)。"""
    d = A.shape[-1]
    n = d * (p + q)
    blocks = shifted_blocks(A, z, p)
    lead = blocks[..., p + q, :, :]
    tail = blocks[..., 0, :, :]
    for name, block in (("A_q", lead), ("A_-p", tail)):
        cond = np.linalg.cond(block)
        if not np.all(np.isfinite(cond)) or np.max(cond) > BLOCK_CONDITION_LIMIT:
            raise SingularBlock(f"{label} z-shifted {name} block is singular (cond {np.max(cond):.2e})", z=complex(z))
    # k = q-1, …, -p の順に横に並べる
    rest = np.concatenate([blocks[..., k + p, :, :] for k in range(q - 1, -p - 1, -1)], axis=-1)
    top = -np.linalg.solve(lead, rest)
    M = np.zeros(A.shape[:-3] + (n, n), dtype=complex)
    M[..., :d, :] = top
    M[..., d:, : n - d] = np.eye(n - d)
    return M


@dataclass(frozen=True)
class CompanionSystem:
    z: complex
    d: int
    p: int
    q: int
    J_dom: int
    M: np.ndarray
    M_plus: np.ndarray
    M_minus: np.ndarray
    A_q: np.ndarray
    edge_fits: Dict[str, Optional[ExponentialFit]]

    @property
    def n(self) -> int:
        return self.d * (self.p + self.q)

    def at(self, j: int) -> np.ndarray:
        if j > self.J_dom:
            return self.M_plus
        if j < -self.J_dom:
            return self.M_minus
        return self.M[j + self.J_dom]

    def lead_block(self, j: int) -> np.ndarray:
        """A_{j,q} (z を含まない)。"""
        j = int(np.clip(j, -self.J_dom - 1, self.J_dom + 1))
        return self.A_q[j + self.J_dom + 1]

    def perturbation(self, j: int, side: str) -> np.ndarray:
        """ℰ_j^± = M_j - M^±。"""
        return self.at(j) - (self.M_plus if side == "+" else self.M_minus)

    def perturbation_norms(self, side: str, js: np.ndarray) -> np.ndarray:
        return np.array([np.linalg.norm(self.perturbation(int(j), side), 2) for j in js])


def build_companion(L: LinearizedOperator, z: complex) -> CompanionSystem:
    """
    格子上の全 j と両端極限について M_j(z) を組み立て、‖M_j - M^±‖ の指数減衰を回帰する。

    Raises
    ------
    SingularBlock
        𝔸_{j,q}(z) または 𝔸_{j,-p}(z) が特異な場合
    """

    z = complex(z)
    coefficients = L.coefficients
    M = companion_matrices(coefficients.A, z, L.p, L.q, "profile")
    M_plus = companion_matrices(coefficients.A_plus, z, L.p, L.q, "side +")
    M_minus = companion_matrices(coefficients.A_minus, z, L.p, L.q, "side -")
    A_q = np.concatenate([
        coefficients.A_minus[None, L.p + L.q],
        coefficients.A[:, L.p + L.q],
        coefficients.A_plus[None, L.p + L.q],
    ])

    j = L.lattice
    plus_dev = np.linalg.norm(M[j > 0] - M_plus, ord=2, axis=(1, 2))
    minus_dev = np.linalg.norm(M[j < 0] - M_minus, ord=2, axis=(1, 2))
    edge_fits = {
        "+": fit_exponential_decay(j[j > 0], plus_dev),
        "-": fit_exponential_decay(-j[j < 0], minus_dev),
    }
    return CompanionSystem(
        z=z, d=L.d, p=L.p, q=L.q, J_dom=L.J_dom, M=M, M_plus=M_plus, M_minus=M_minus, A_q=A_q, edge_fits=edge_fits,
    )


def center_block(vector: np.ndarray, d: int, q: int) -> np.ndarray:
    """Π: 積み上げベクトル (u_{j+q-1}, …, u_{j-p}) から u_j を取り出す。"""
    start = d * (q - 1)
    return np.asarray(vector)[..., start:start + d]
