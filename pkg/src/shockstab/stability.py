"""
線形軌道安定性の数値実験: m(n) = min_c ‖𝓛^n h - cV‖_{ℓ^{r2}} の冪減衰を測り、
予測指数 -(1/2μ)(1/r1 - 1/r2) と比べる。
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import optimize

from shockstab.errors import ConeTruncation, NonConvergedLineSearch
from shockstab.fitting import PowerLawFit, fit_power_law
from shockstab.operator import LinearizedOperator

logger = logging.getLogger(__name__)

DEFAULT_SEED = 20240917
EXPONENT_BAND = 0.1
NORMS = {"1": 1.0, "2": 2.0, "inf": np.inf}


def parse_norm(value) -> float:
    text = str(value).strip().lower()
    if text in ("inf", "infinity", "∞"):
        return np.inf
    number = float(text)
    if number not in (1.0, 2.0):
        raise ValueError(f"norm index must be 1, 2 or inf (got {value})")
    return number


def predicted_exponent(mu: int, r1: float, r2: float) -> float:
    inv = lambda r: 0.0 if np.isinf(r) else 1.0 / r  # noqa: E731
    return -(inv(r1) - inv(r2)) / (2 * mu)


# --------------------------------------------------------------------------- #
# Perturbation generators
# --------------------------------------------------------------------------- #

@dataclass(frozen=True)
class Perturbation:
    name: str
    values: np.ndarray
    support: Tuple[int, int]
    seed: Optional[int] = None

    def scaled(self, factor: complex) -> "Perturbation":
        return Perturbation(name=self.name, values=factor * self.values, support=self.support, seed=self.seed)


def delta_generator(L: LinearizedOperator, center: int = 0, component: Optional[np.ndarray] = None) -> Perturbation:
    values = np.zeros((L.n_cells, L.d))
    values[L.cell(center)] = np.ones(L.d) if component is None else component
    return Perturbation(name="delta", values=values, support=(center, center))


def box_generator(L: LinearizedOperator, center: int = 0, width: int = 10,
                  component: Optional[np.ndarray] = None) -> Perturbation:
    values = np.zeros((L.n_cells, L.d))
    lo, hi = center - width // 2, center + width // 2
    values[L.cell(lo): L.cell(hi) + 1] = np.ones(L.d) if component is None else component
    return Perturbation(name="box", values=values, support=(lo, hi))


def random_generator(L: LinearizedOperator, center: int = 0, width: int = 20, seed: int = DEFAULT_SEED) -> Perturbation:
    rng = np.random.default_rng(seed)
    values = np.zeros((L.n_cells, L.d))
    lo, hi = center - width // 2, center + width // 2
    values[L.cell(lo): L.cell(hi) + 1] = rng.standard_normal((hi - lo + 1, L.d))
    return Perturbation(name="random", values=values, support=(lo, hi), seed=seed)


GENERATORS = {
    "delta": delta_generator,
    "box": box_generator,
    "random": random_generator,
}


def make_perturbation(L: LinearizedOperator, name: str, **options) -> Perturbation:
    if name not in GENERATORS:
        raise KeyError(f"No perturbation generator found for: {name}")
    return GENERATORS[name](L, **options)


# --------------------------------------------------------------------------- #
# Orbital decay
# --------------------------------------------------------------------------- #

@dataclass(frozen=True)
class DecayExperiment:
    generator: str
    seed: Optional[int]
    r1: float
    r2: float
    mu: int
    ns: np.ndarray
    distances: np.ndarray
    norms: np.ndarray
    coefficients: np.ndarray
    fit: PowerLawFit
    window: Tuple[int, int]

    @property
    def predicted(self) -> float:
        return predicted_exponent(self.mu, self.r1, self.r2)

    @property
    def exponent_error(self) -> float:
        return self.fit.exponent - self.predicted

    @property
    def within_band(self) -> bool:
        return abs(self.exponent_error) <= EXPONENT_BAND

    @property
    def bound_holds(self) -> bool:
        """理論は上界なので、予測より速い減衰は合格とする。"""
        return self.exponent_error <= EXPONENT_BAND

    @property
    def confidence(self) -> Tuple[float, float]:
        return (self.fit.exponent - 2 * self.fit.stderr, self.fit.exponent + 2 * self.fit.stderr)

    def envelope_growth(self) -> float:
        """窓内で m(n)/n^{予測指数} の累積最大が初期値から何割増えたか。"""
        lo, hi = self.window
        mask = (self.ns >= lo) & (self.ns <= hi)
        scaled = self.distances[mask] / self.ns[mask].astype(float) ** self.predicted
        return float(np.max(np.maximum.accumulate(scaled)) / scaled[0] - 1.0)

    def boundedness(self) -> float:
        """sup_n m(n)/m(1)。"""
        return float(np.max(self.distances) / self.distances[0])

    def to_dict(self) -> dict:
        return {
            "generator": self.generator,
            "seed": self.seed,
            "r1": _norm_label(self.r1),
            "r2": _norm_label(self.r2),
            "mu": self.mu,
            "predicted": self.predicted,
            "fit": self.fit.to_dict(),
            "confidence": list(self.confidence),
            "within_band": self.within_band,
            "bound_holds": self.bound_holds,
            "envelope_growth": self.envelope_growth(),
            "boundedness": self.boundedness(),
            "window": list(self.window),
        }

    def to_rows(self) -> List[dict]:
        return [
            {"n": int(n), "m": float(m), "norm": float(u), "c_re": float(np.real(c)), "c_im": float(np.imag(c))}
            for n, m, u, c in zip(self.ns, self.distances, self.norms, self.coefficients)
        ]


def _norm_label(r: float) -> str:
    return "inf" if np.isinf(r) else str(int(r))


def _line_search(objective, center: float, radius: float, label: str) -> float:
    if radius == 0.0:
        return center
    result = optimize.minimize_scalar(objective, bounds=(center - radius, center + radius), method="bounded",
                                      options={"xatol": 1e-12 * max(1.0, abs(center))})
    if not result.success:
        raise NonConvergedLineSearch(f"{label}: bounded line search did not converge ({result.message})")
    return float(result.x)


def distance_to_line(u: np.ndarray, V: np.ndarray, r2: float, sweeps: int = 4) -> Tuple[float, complex]:
    """
    min_c ‖u - cV‖_{r2}。r2 = 2 は直交射影、r2 ∈ {1, ∞} は射影値を中心に |c - c_proj| ≤ 2|c_proj| 上の
    1 次元凸最小化 (複素の場合は実部と虚部を交互に)。
    """

    u = np.ravel(u)
    V = np.ravel(V)
    c_proj = np.vdot(V, u) / np.vdot(V, V)
    if r2 == 2.0:
        return float(np.linalg.norm(u - c_proj * V)), complex(c_proj)

    def norm(c: complex) -> float:
        return float(np.linalg.norm(u - c * V, ord=r2))

    radius = 2.0 * abs(c_proj)
    if radius == 0.0:
        radius = float(np.linalg.norm(u, ord=r2) / np.linalg.norm(V, ord=r2))
    complex_data = np.iscomplexobj(u) or np.iscomplexobj(V)
    c = complex(c_proj) if complex_data else complex(np.real(c_proj))
    for _ in range(sweeps if complex_data else 1):
        re = _line_search(lambda x: norm(x + 1j * c.imag), c.real, radius, "real part")
        c = complex(re, c.imag)
        if complex_data:
            im = _line_search(lambda y: norm(c.real + 1j * y), c.imag, radius, "imaginary part")
            c = complex(c.real, im)
    return norm(c), c


def orbital_decay(L: LinearizedOperator, V: np.ndarray, h: Perturbation, r1: float, r2: float, N_max: int,
                  mu: int = 1) -> DecayExperiment:
    """
    u_n = 𝓛^n h と m(n) を n = 1..N_max で求め、n ∈ [N_max/8, N_max] で log m を log n に回帰する。

    Raises
    ------
    ConeTruncation
        h の台から伸びる錐が N_max までに格子端へ届く場合
    NonConvergedLineSearch
        r2 ∈ {1, ∞} の 1 次元最小化が収束しない場合
    """

    if r1 > r2:
        raise ValueError(f"r1={r1} must not exceed r2={r2}")
    lo, hi = h.support
    if lo - N_max * L.q <= -L.J_dom or hi + N_max * L.p >= L.J_dom:
        raise ConeTruncation(f"support {h.support} spreads to the lattice edge within {N_max} steps",
                             support=list(h.support), N_max=N_max)

    u = h.values.ravel().astype(np.result_type(L.matrix.dtype, h.values.dtype))
    ns = np.arange(1, N_max + 1)
    distances = np.empty(N_max)
    norms = np.empty(N_max)
    coefficients = np.empty(N_max, dtype=complex)
    for index in range(N_max):
        u = L.matrix @ u
        distances[index], coefficients[index] = distance_to_line(u, V, r2)
        norms[index] = np.linalg.norm(u, ord=r2)

    window = (max(1, N_max // 8), N_max)
    mask = (ns >= window[0]) & (ns <= window[1])
    fit = fit_power_law(ns[mask], distances[mask])
    experiment = DecayExperiment(
        generator=h.name, seed=h.seed, r1=r1, r2=r2, mu=mu, ns=ns, distances=distances, norms=norms,
        coefficients=coefficients, fit=fit, window=window,
    )
    logger.info("[Stability] %s (r1=%s, r2=%s): exponent %.4f, predicted %.4f", h.name, _norm_label(r1),
                _norm_label(r2), fit.exponent, experiment.predicted)
    return experiment


@dataclass(frozen=True)
class RateTable:
    experiments: List[DecayExperiment] = field(default_factory=list)

    @property
    def failures(self) -> List[Dict[str, str]]:
        return [
            {"generator": e.generator, "r1": _norm_label(e.r1), "r2": _norm_label(e.r2)}
            for e in self.experiments if not e.bound_holds
        ]

    def to_dict(self) -> dict:
        return {"experiments": [e.to_dict() for e in self.experiments], "failures": self.failures}


def rate_table(L: LinearizedOperator, V: np.ndarray, perturbations: Sequence[Perturbation],
               pairs: Sequence[Tuple[float, float]], N_max: int, mu: int = 1) -> RateTable:
    """生成子 × (r1, r2) の全組合せで orbital_decay を回す。"""
    experiments = []
    for h in perturbations:
        for r1, r2 in pairs:
            experiments.append(orbital_decay(L, V, h, r1, r2, N_max, mu=mu))
    table = RateTable(experiments=experiments)
    if table.failures:
        logger.warning("[Stability] exponents outside the predicted bound: %s", table.failures)
    return table
