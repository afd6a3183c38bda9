"""
保存則系 ∂_t u + ∂_x f(u) = 0 の表現と、端点状態の特性分解・Lax 衝撃波判定。

状態ベクトルは長さ d の numpy 配列。flux / jacobian は先頭軸に対して
ベクトル化されていること (形状 (..., d) -> (..., d) / (..., d, d))。
"""

import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, Optional

import numpy as np
from scipy import linalg

from shockstab.errors import Characteristic, NonHyperbolic, NotLax, RankineHugoniotMismatch, StateOutOfDomain

logger = logging.getLogger(__name__)

FluxFn = Callable[[np.ndarray], np.ndarray]

HYPERBOLICITY_TOL = 1e-9
BIORTHOGONALITY_TOL = 1e-12
RANKINE_HUGONIOT_TOL = 1e-10


@dataclass(frozen=True)
class ConservationLaw:
    name: str
    d: int
    flux: FluxFn
    jacobian: FluxFn
    admissible: Optional[Callable[[np.ndarray], np.ndarray]] = None
    params: Dict[str, float] = field(default_factory=dict)

    def f(self, u: np.ndarray) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        if self.admissible is not None and not np.all(self.admissible(u)):
            raise StateOutOfDomain(f"{self.name}: state outside the admissible set", state=u)
        return np.asarray(self.flux(u), dtype=float)

    def df(self, u: np.ndarray) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        if self.admissible is not None and not np.all(self.admissible(u)):
            raise StateOutOfDomain(f"{self.name}: state outside the admissible set", state=u)
        return np.asarray(self.jacobian(u), dtype=float)

    def jacobian_error(self, u: np.ndarray, h: float = 1e-5) -> float:
        """中心差分との差 (O(h²) で 0 に近づくはず)。"""
        u = np.asarray(u, dtype=float)
        approx = np.empty((self.d, self.d))
        for k in range(self.d):
            step = np.zeros(self.d)
            step[k] = h
            approx[:, k] = (self.f(u + step) - self.f(u - step)) / (2.0 * h)
        return float(np.max(np.abs(approx - self.df(u))))


@dataclass(frozen=True)
class CharacteristicData:
    eigenvalues: np.ndarray
    right_vectors: np.ndarray
    left_vectors: np.ndarray

    def r(self, l: int) -> np.ndarray:
        return self.right_vectors[:, l]

    def l(self, l: int) -> np.ndarray:
        return self.left_vectors[l, :]

    def to_dict(self) -> dict:
        return {
            "eigenvalues": self.eigenvalues.tolist(),
            "right_vectors": self.right_vectors.tolist(),
            "left_vectors": self.left_vectors.tolist(),
        }


@dataclass(frozen=True)
class LaxShockData:
    """
    u_minus / u_plus と Lax 指数 I (1 始まり、論文と同じ)。

    d 個の特性場は 0 始まりで参照する。λ_I^+ は eigenvalues[I - 1]。
    """

    u_minus: np.ndarray
    u_plus: np.ndarray
    index_I: int
    char_minus: CharacteristicData
    char_plus: CharacteristicData

    @property
    def d(self) -> int:
        return int(self.u_minus.size)

    @property
    def midpoint(self) -> np.ndarray:
        return 0.5 * (self.u_minus + self.u_plus)

    def side(self, side: str) -> CharacteristicData:
        return self.char_plus if side == "+" else self.char_minus

    def to_dict(self) -> dict:
        return {
            "u_minus": self.u_minus.tolist(),
            "u_plus": self.u_plus.tolist(),
            "index_I": self.index_I,
            "char_minus": self.char_minus.to_dict(),
            "char_plus": self.char_plus.to_dict(),
        }


# --------------------------------------------------------------------------- #
# Operations
# --------------------------------------------------------------------------- #

def eigen_decompose(law: ConservationLaw, u: np.ndarray) -> CharacteristicData:
    """
    df(u) を対角化し、固有値昇順・右固有ベクトル単位長・双直交な左固有ベクトルを返す。

    Raises
    ------
    NonHyperbolic
        複素固有値、重複固有値、対角化不能の場合
    """

    jac = law.df(u)
    values, vectors = linalg.eig(jac)
    scale = max(1.0, float(np.max(np.abs(values))))
    if np.max(np.abs(values.imag)) > HYPERBOLICITY_TOL * scale:
        raise NonHyperbolic(f"{law.name}: complex characteristic speeds at u={np.asarray(u).tolist()}", eigenvalues=values)
    values = values.real
    vectors = vectors.real
    order = np.argsort(values)
    values = values[order]
    vectors = vectors[:, order]
    if values.size > 1 and np.min(np.diff(values)) <= HYPERBOLICITY_TOL * scale:
        raise NonHyperbolic(f"{law.name}: repeated characteristic speed at u={np.asarray(u).tolist()}", eigenvalues=values)

    for k in range(vectors.shape[1]):
        column = vectors[:, k] / np.linalg.norm(vectors[:, k])
        nonzero = np.flatnonzero(np.abs(column) > 1e-14)
        if column[nonzero[0]] < 0:
            column = -column
        vectors[:, k] = column

    if np.linalg.cond(vectors) > 1e12:
        raise NonHyperbolic(f"{law.name}: Jacobian is not diagonalizable", eigenvalues=values)
    left = np.linalg.inv(vectors)
    defect = np.max(np.abs(left @ vectors - np.eye(law.d)))
    if defect > BIORTHOGONALITY_TOL * np.linalg.cond(vectors):
        raise NonHyperbolic(f"{law.name}: dual basis defect {defect:.2e}")
    return CharacteristicData(eigenvalues=values, right_vectors=vectors, left_vectors=left)


def check_rankine_hugoniot(law: ConservationLaw, u_minus: np.ndarray, u_plus: np.ndarray) -> float:
    return float(np.max(np.abs(law.f(u_minus) - law.f(u_plus))))


def classify_lax_shock(
    law: ConservationLaw,
    u_minus: np.ndarray,
    u_plus: np.ndarray,
    tol: float = RANKINE_HUGONIOT_TOL,
) -> LaxShockData:
    """
    Lax 条件 λ_I^+ < 0 < λ_{I+1}^+ かつ λ_{I-1}^- < 0 < λ_I^- を満たす I を求める。

    Raises
    ------
    RankineHugoniotMismatch
        f(u^-) ≠ f(u^+) の場合
    Characteristic
        端点で 0 が特性速度になる場合
    NotLax
        符号パターンを満たす I が存在しない場合
    """

    u_minus = np.asarray(u_minus, dtype=float)
    u_plus = np.asarray(u_plus, dtype=float)
    residual = check_rankine_hugoniot(law, u_minus, u_plus)
    if residual > tol * max(1.0, float(np.max(np.abs(law.f(u_minus))))):
        raise RankineHugoniotMismatch(f"Rankine-Hugoniot residual {residual:.3e} exceeds {tol:.1e}", residual=residual)

    char_minus = eigen_decompose(law, u_minus)
    char_plus = eigen_decompose(law, u_plus)
    for side, char in (("-", char_minus), ("+", char_plus)):
        scale = max(1.0, float(np.max(np.abs(char.eigenvalues))))
        if np.min(np.abs(char.eigenvalues)) <= HYPERBOLICITY_TOL * scale:
            raise Characteristic(f"end state {side} is characteristic (zero speed)", eigenvalues=char.eigenvalues)

    sentinel = np.array([-np.inf])
    lam_plus = np.concatenate([sentinel, char_plus.eigenvalues, -sentinel])
    lam_minus = np.concatenate([sentinel, char_minus.eigenvalues, -sentinel])
    candidates = [
        index for index in range(1, law.d + 1)
        if lam_plus[index] < 0 < lam_plus[index + 1] and lam_minus[index - 1] < 0 < lam_minus[index]
    ]
    if len(candidates) != 1:
        raise NotLax(
            "no admissible Lax index",
            lambda_minus=char_minus.eigenvalues,
            lambda_plus=char_plus.eigenvalues,
        )
    logger.info("[Shock] %s: Lax %d-shock, RH residual %.2e", law.name, candidates[0], residual)
    return LaxShockData(
        u_minus=u_minus,
        u_plus=u_plus,
        index_I=candidates[0],
        char_minus=char_minus,
        char_plus=char_plus,
    )
