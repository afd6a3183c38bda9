"""
打ち切り格子 j ∈ [-J_dom, J_dom] 上の線形化作用素 (𝓛h)_j = Σ_k A_{j,k} h_{j+k}。

格子外は 0 (Dirichlet 型) として扱う。行列は scipy.sparse の CSR で保持し、
ブロック (i, i+k) に A_{j,k} を置く (i = j + J_dom)。
"""

import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np
from scipy import linalg, sparse
from scipy.sparse import linalg as spla

from shockstab.errors import KernelDimensionAmbiguous, LengthMismatch, SpuriousModes
from shockstab.fitting import ExponentialFit, PowerLawFit, fit_exponential_decay, fit_power_law
from shockstab.scheme import EndStateLinearization, LinearizationCoefficients, StencilScheme, evolve
from shockstab.symbol import SIDES, SymbolData, amplification_symbol

logger = logging.getLogger(__name__)

DENSE_LIMIT = 1200
ESSENTIAL_SAMPLES = 2048
EIGEN_RESIDUAL_TOL = 1e-8
KERNEL_GAP = 1e4
LINEARIZATION_EPSILONS = (1e-4, 1e-5, 1e-6)
LINEARIZATION_ORDER_BAND = 0.2


@dataclass(frozen=True)
class LinearizedOperator:
    coefficients: LinearizationCoefficients
    matrix: sparse.csr_matrix
    label: str = "profile"

    @property
    def d(self) -> int:
        return int(self.coefficients.A.shape[-1])

    @property
    def p(self) -> int:
        return self.coefficients.p

    @property
    def q(self) -> int:
        return self.coefficients.q

    @property
    def J_dom(self) -> int:
        return int(self.coefficients.J_dom)

    @property
    def n_cells(self) -> int:
        return 2 * self.J_dom + 1

    @property
    def lattice(self) -> np.ndarray:
        return np.arange(-self.J_dom, self.J_dom + 1)

    def cell(self, j: int) -> int:
        return int(j) + self.J_dom

    def blocks_at(self, j: int) -> np.ndarray:
        return self.coefficients.blocks_at(j)

    def end_blocks(self, side: str) -> np.ndarray:
        return self.coefficients.A_plus if side == "+" else self.coefficients.A_minus


def banded_matrix(A: np.ndarray, p: int, q: int) -> sparse.csr_matrix:
    """A (N, p+q+1, d, d) からブロック帯行列を組み立てる。格子外への結合は捨てる。"""
    N, _, d, _ = A.shape
    rows, cols, vals = [], [], []
    a, b = np.meshgrid(np.arange(d), np.arange(d), indexing="ij")
    for k in range(-p, q + 1):
        cells = np.arange(max(0, -k), min(N, N - k))
        if cells.size == 0:
            continue
        rows.append((cells[:, None, None] * d + a[None]).ravel())
        cols.append(((cells + k)[:, None, None] * d + b[None]).ravel())
        vals.append(A[cells, k + p].ravel())
    data = np.concatenate(vals)
    matrix = sparse.coo_matrix(
        (data, (np.concatenate(rows), np.concatenate(cols))), shape=(N * d, N * d)
    )
    return matrix.tocsr()


def build_operator(coefficients: LinearizationCoefficients) -> LinearizedOperator:
    matrix = banded_matrix(coefficients.A, coefficients.p, coefficients.q)
    logger.info("[Operator] assembled %d x %d block-banded matrix (nnz=%d)", matrix.shape[0], matrix.shape[1], matrix.nnz)
    return LinearizedOperator(coefficients=coefficients, matrix=matrix)


def constant_operator(end: EndStateLinearization, side: str, J_dom: int) -> LinearizedOperator:
    """端点係数 A_k^± のみからなる 𝓛^± を同じ格子上に置く。"""
    base = end.side(side)
    N = 2 * J_dom + 1
    A = np.repeat(base.A[None], N, axis=0)
    coefficients = LinearizationCoefficients(
        side="profile", p=base.p, q=base.q, B=np.repeat(base.B[None], N, axis=0), A=A,
        edge_condition=base.edge_condition, J_dom=J_dom, A_plus=base.A, A_minus=base.A,
    )
    return LinearizedOperator(coefficients=coefficients, matrix=banded_matrix(A, base.p, base.q), label=side)


# --------------------------------------------------------------------------- #
# Action
# --------------------------------------------------------------------------- #

def _flatten(L: LinearizedOperator, h: np.ndarray) -> Tuple[np.ndarray, Tuple[int, ...]]:
    h = np.asarray(h)
    if h.size != L.n_cells * L.d:
        raise LengthMismatch(f"sequence has {h.size} entries, lattice needs {L.n_cells * L.d}")
    return h.reshape(-1), h.shape


def apply(L: LinearizedOperator, h: np.ndarray) -> np.ndarray:
    flat, shape = _flatten(L, h)
    return (L.matrix @ flat).reshape(shape)


def adjoint_apply(L: LinearizedOperator, g: np.ndarray) -> np.ndarray:
    """𝓛* (転置共役ブロック) の作用。"""
    flat, shape = _flatten(L, g)
    return (L.matrix.conj().T @ flat).reshape(shape)


@dataclass(frozen=True)
class LinearizationCheck:
    epsilons: List[float]
    defects: List[float]
    fit: PowerLawFit

    @property
    def order(self) -> float:
        return self.fit.exponent

    @property
    def within_band(self) -> bool:
        return abs(self.order - 2.0) <= LINEARIZATION_ORDER_BAND

    def to_dict(self) -> dict:
        return {
            "epsilons": self.epsilons,
            "defects": self.defects,
            "order": self.order,
            "within_band": self.within_band,
        }


def linearization_check(L: LinearizedOperator, scheme: StencilScheme, values: np.ndarray, u_minus: np.ndarray,
                        u_plus: np.ndarray, h: Optional[np.ndarray] = None,
                        epsilons: Tuple[float, ...] = LINEARIZATION_EPSILONS, seed: int = 0) -> LinearizationCheck:
    """
    ‖𝒩(ū + εh) - 𝒩(ū) - ε𝓛h‖_∞ を ε ごとに求め、log-log の傾き (2 になるはず) を回帰する。
    h を省くと |j| ≤ 20 に台を持つ正規乱数列を使う。
    """

    values = np.asarray(values, dtype=float).reshape(L.n_cells, L.d)
    if h is None:
        rng = np.random.default_rng(seed)
        h = np.zeros_like(values)
        support = np.abs(L.lattice) <= min(20, L.J_dom // 2)
        h[support] = rng.standard_normal((int(support.sum()), L.d))
    h = np.asarray(h, dtype=float).reshape(L.n_cells, L.d)
    base = evolve(scheme, values, u_minus, u_plus)
    Lh = apply(L, h)
    defects = [
        float(np.max(np.abs(evolve(scheme, values + eps * h, u_minus, u_plus) - base - eps * Lh)))
        for eps in epsilons
    ]
    fit = fit_power_law(np.asarray(epsilons), np.asarray(defects))
    logger.info("[Operator] linearization defect order %.3f over eps=%s", fit.exponent, list(epsilons))
    return LinearizationCheck(epsilons=[float(e) for e in epsilons], defects=defects, fit=fit)


# --------------------------------------------------------------------------- #
# Essential spectrum
# --------------------------------------------------------------------------- #

@dataclass(frozen=True)
class EssentialSpectrum:
    curves: Dict[Tuple[str, int], np.ndarray]

    def points(self) -> np.ndarray:
        return np.concatenate(list(self.curves.values()))

    def distance(self, z: complex) -> float:
        return float(np.min(np.abs(self.points() - complex(z))))

    def winding(self, z: complex) -> Dict[Tuple[str, int], float]:
        out = {}
        for key, curve in self.curves.items():
            closed = np.append(curve, curve[0]) - complex(z)
            increments = np.angle(closed[1:] / closed[:-1])
            out[key] = float(np.sum(increments) / (2 * np.pi))
        return out

    def classify(self, z: complex, on_curve_tol: float = 1e-9) -> str:
        """outer (非有界成分 𝒪 と判定)、inner、on_curve、ambiguous のいずれか。"""
        if self.distance(z) <= on_curve_tol:
            return "on_curve"
        windings = np.array(list(self.winding(z).values()))
        if np.any(np.abs(windings - np.round(windings)) > 0.05):
            return "ambiguous"
        return "outer" if np.all(np.round(windings) == 0) else "inner"

    def to_rows(self) -> List[dict]:
        return [
            {"side": side, "field": l, "xi": xi, "value": value}
            for (side, l), curve in self.curves.items()
            for xi, value in zip(np.linspace(-np.pi, np.pi, curve.size, endpoint=False), curve)
        ]


def essential_spectrum_curves(sym: SymbolData, n_samples: int = ESSENTIAL_SAMPLES) -> EssentialSpectrum:
    kappa = np.exp(1j * np.linspace(-np.pi, np.pi, n_samples, endpoint=False))
    curves = {
        (side, l): np.asarray(amplification_symbol(sym, side, l, kappa))
        for side in SIDES
        for l in range(sym.d)
    }
    return EssentialSpectrum(curves=curves)


# --------------------------------------------------------------------------- #
# Isolated eigenvalues
# --------------------------------------------------------------------------- #

@dataclass(frozen=True)
class EigenCandidate:
    value: complex
    residual: float
    edge_mass: float
    distance: float

    def to_dict(self) -> dict:
        return {
            "re": self.value.real,
            "im": self.value.imag,
            "modulus": abs(self.value),
            "residual": self.residual,
            "edge_mass": self.edge_mass,
            "distance_to_essential": self.distance,
        }


@dataclass(frozen=True)
class SpectralScan:
    retained: List[EigenCandidate]
    polluted: List[EigenCandidate]
    engine: str
    h_spec: bool
    r_min: float
    rho: float

    def to_dict(self) -> dict:
        return {
            "engine": self.engine,
            "h_spec": self.h_spec,
            "r_min": self.r_min,
            "rho": self.rho,
            "retained": [c.to_dict() for c in self.retained],
            "polluted": [c.to_dict() for c in self.polluted],
        }


def _eigenpairs(L: LinearizedOperator, rho: float, n_shifts: int = 8, k: int = 12) -> Tuple[np.ndarray, np.ndarray, str]:
    size = L.matrix.shape[0]
    if size <= DENSE_LIMIT:
        values, vectors = linalg.eig(L.matrix.toarray())
        return values, vectors, "dense"

    values, vectors = [], []
    shifts = [1.0 + 0j] + [(1.0 + rho) * np.exp(2j * np.pi * s / n_shifts) for s in range(1, n_shifts)]
    identity = sparse.identity(size, dtype=complex, format="csc")
    for sigma in shifts:
        lu = spla.splu((L.matrix.astype(complex) - sigma * identity).tocsc())
        op = spla.LinearOperator(shape=L.matrix.shape, dtype=complex, matvec=lu.solve)
        mu, vec = spla.eigs(op, k=min(k, size - 2), which="LM")
        values.append(1.0 / mu + sigma)
        vectors.append(vec)
    values = np.concatenate(values)
    vectors = np.concatenate(vectors, axis=1)
    _, unique = np.unique(np.round(values, 8), return_index=True)
    return values[unique], vectors[:, unique], "shift-invert"


def _edge_mass(L: LinearizedOperator, vector: np.ndarray, edge_fraction: float = 0.1) -> float:
    cells = np.abs(vector.reshape(L.n_cells, L.d)) ** 2
    mass = cells.sum(axis=1)
    width = max(L.p + L.q, int(edge_fraction * L.n_cells))
    edge = mass[:width].sum() + mass[-width:].sum()
    return float(edge / mass.sum())


def eigen_scan(L: LinearizedOperator, essential: EssentialSpectrum, rho: float = 0.02, r_min: float = 1.0 - 1e-6,
               edge_tol: float = 1e-6, refine: Optional[Callable[[], LinearizedOperator]] = None) -> SpectralScan:
    """
    |z| ≥ r_min かつ本質スペクトルから ρ 以上離れた固有値を探す。
    z = 1 (1e-6 以内) は曲線上にあるが保持する。端部質量の大きい固有ベクトルは打ち切り由来として除外する。

    Raises
    ------
    SpuriousModes
        除外された |z| ≥ 1 の固有値が J_dom を倍にしても残る場合
    """

    values, vectors, engine = _eigenpairs(L, rho)
    retained, polluted = [], []
    for value, vector in zip(values, vectors.T):
        value = complex(value)
        if abs(value) < r_min:
            continue
        distance = essential.distance(value)
        at_one = abs(value - 1.0) < 1e-6
        if distance <= rho and not at_one:
            continue
        residual = float(np.linalg.norm(L.matrix @ vector - value * vector) / np.linalg.norm(vector))
        candidate = EigenCandidate(value=value, residual=residual, edge_mass=_edge_mass(L, vector), distance=distance)
        (retained if candidate.edge_mass < edge_tol else polluted).append(candidate)

    if polluted and refine is not None:
        refined = eigen_scan(refine(), essential, rho=rho, r_min=r_min, edge_tol=edge_tol)
        persistent = [c for c in refined.polluted if abs(c.value) >= 1.0]
        if persistent:
            raise SpuriousModes(
                f"{len(persistent)} edge-polluted eigenvalues with |z| >= 1 persist under J_dom doubling",
                values=[c.value for c in persistent],
            )

    for candidate in retained:
        if candidate.residual > EIGEN_RESIDUAL_TOL * max(1.0, np.abs(values).max()):
            logger.warning("[Operator] eigenpair at %s has residual %.2e", candidate.value, candidate.residual)
    h_spec = all(abs(c.value - 1.0) < 1e-6 for c in retained) and sum(abs(c.value - 1.0) < 1e-6 for c in retained) <= 1
    logger.info("[Operator] eigen scan (%s): %d retained, %d polluted, H:spec=%s",
                engine, len(retained), len(polluted), h_spec)
    return SpectralScan(retained=retained, polluted=polluted, engine=engine, h_spec=h_spec, r_min=r_min, rho=rho)


# --------------------------------------------------------------------------- #
# Kernel at z = 1
# --------------------------------------------------------------------------- #

@dataclass(frozen=True)
class KernelVector:
    values: np.ndarray
    sigma: np.ndarray
    tail_fits: Dict[str, Optional[ExponentialFit]] = field(default_factory=dict)

    @property
    def gap(self) -> float:
        return float(self.sigma[1] / self.sigma[0]) if self.sigma[0] > 0 else float("inf")

    def to_dict(self) -> dict:
        return {
            "sigma_1": float(self.sigma[0]),
            "sigma_2": float(self.sigma[1]),
            "gap": self.gap,
            "tail_fits": {s: (f.to_dict() if f else None) for s, f in self.tail_fits.items()},
        }


def smallest_singular_values(L: LinearizedOperator, k: int = 2) -> Tuple[np.ndarray, np.ndarray]:
    """(I - 𝓛) の最小特異値 k 個 (昇順) と右特異ベクトル (列)。"""
    size = L.matrix.shape[0]
    K = sparse.identity(size, format="csr") - L.matrix
    if size <= DENSE_LIMIT:
        _, s, vh = linalg.svd(K.toarray())
        return s[::-1][:k], vh[::-1][:k].conj().T
    s, vecs = spla.eigsh((K.conj().T @ K).tocsc(), k=k, sigma=0.0, which="LM")
    order = np.argsort(s)
    return np.sqrt(np.abs(s[order])), vecs[:, order]


def kernel_vector_at_one(L: LinearizedOperator, phase_vector: np.ndarray, gap: float = KERNEL_GAP) -> KernelVector:
    """
    ker(I - 𝓛) の単位ベクトル V。l_I^{+T} V_0 が実非負となるよう位相を揃える。

    Raises
    ------
    KernelDimensionAmbiguous
        σ_2/σ_1 < gap の場合
    """

    sigma, vectors = smallest_singular_values(L, 2)
    if sigma[0] > 0 and sigma[1] / sigma[0] < gap:
        raise KernelDimensionAmbiguous(
            f"sigma_2/sigma_1 = {sigma[1] / sigma[0]:.3e} < {gap:.0e}", sigma=sigma.tolist()
        )
    V = vectors[:, 0].reshape(L.n_cells, L.d)
    V = V / np.linalg.norm(V)
    anchor = complex(np.asarray(phase_vector) @ V[L.cell(0)])
    if abs(anchor) > 0:
        V = V * (abs(anchor) / anchor)
    if np.max(np.abs(V.imag)) < 1e-14 * np.max(np.abs(V)):
        V = V.real

    j = L.lattice
    magnitude = np.linalg.norm(V, axis=1)
    tail_fits = {
        "+": fit_exponential_decay(j[j > 0], magnitude[j > 0]),
        "-": fit_exponential_decay(-j[j < 0], magnitude[j < 0]),
    }
    logger.info("[Operator] kernel at 1: sigma_1=%.2e sigma_2=%.2e", sigma[0], sigma[1])
    return KernelVector(values=V, sigma=np.asarray(sigma, dtype=float), tail_fits=tail_fits)


def overlap(V: np.ndarray, W: np.ndarray) -> float:
    """|⟨V, W⟩| / (‖V‖‖W‖)。格子長が異なる場合は中央揃えで共通部分を比べる。"""
    V, W = np.asarray(V), np.asarray(W)
    n = min(V.shape[0], W.shape[0])
    a = V[(V.shape[0] - n) // 2: (V.shape[0] + n) // 2]
    b = W[(W.shape[0] - n) // 2: (W.shape[0] + n) // 2]
    return float(abs(np.vdot(a, b)) / (np.linalg.norm(a) * np.linalg.norm(b)))
