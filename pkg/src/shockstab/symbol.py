"""
増幅シンボル ℱ_l^±(κ) = Σ_k λ_{l,k}^± κ^k、拡散性パラメータ (μ, α, β)、
ℱ_l^±(κ) = z の根と z = 1 近傍での固有値曲線 ζ_m^±(z) の追跡。

モード番号 m は 0 始まりで m = l + d·t (t は z = 1 での根の絶対値順位)。
この番号付けで I_ss, I_cs, I_cu, I_su が連続区間になる。
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np
from numpy.polynomial import polynomial as P
from scipy.optimize import linear_sum_assignment

from shockstab.errors import (
    CurveCollision,
    DegenerateLeadingCoefficient,
    NearMultipleRoot,
    NegativeRealPart,
    NoDiffusivity,
    NotDissipative,
    OutsideValidityRadius,
    ZeroKappa,
)
from shockstab.scheme import DiagonalSymbolCoefficients

logger = logging.getLogger(__name__)

SIDES = ("+", "-")
MU_MAX = 4
DISSIPATIVITY_POINTS = 4096
DISSIPATIVITY_EXCLUDED_ARC = 1e-3
MULTIPLE_ROOT_TOL = 1e-8
COLLISION_TOL = 1e-8


@dataclass(frozen=True)
class SymbolData:
    """lam[side] は (d, p+q+1) で列 k+p が λ_{l,k}。"""

    p: int
    q: int
    nu: float
    index_I: int
    lam: Dict[str, np.ndarray]
    alpha: Dict[str, np.ndarray]
    beta: Dict[str, np.ndarray]
    mu: int

    @property
    def d(self) -> int:
        return int(self.lam["+"].shape[0])

    @property
    def n_modes(self) -> int:
        return self.d * (self.p + self.q)

    def to_dict(self) -> dict:
        return {
            "mu": self.mu,
            "index_I": self.index_I,
            "alpha": {s: self.alpha[s].tolist() for s in SIDES},
            "beta": {s: [{"re": b.real, "im": b.imag} for b in self.beta[s]] for s in SIDES},
        }


@dataclass(frozen=True)
class Diffusivity:
    mu: int
    alpha: Dict[str, np.ndarray]
    beta: Dict[str, np.ndarray]


@dataclass(frozen=True)
class KappaRoots:
    roots: np.ndarray
    near_multiple: bool
    min_separation: float


# --------------------------------------------------------------------------- #
# Symbol evaluation
# --------------------------------------------------------------------------- #

def _laurent(row: np.ndarray, p: int, kappa):
    kappa = np.asarray(kappa, dtype=complex)
    return P.polyval(kappa, row) * kappa ** (-p)


def _laurent_derivative(row: np.ndarray, p: int, kappa):
    kappa = np.asarray(kappa, dtype=complex)
    ks = np.arange(-p, row.size - p)
    return sum(k * c * kappa ** (k - 1) for k, c in zip(ks, row))


def amplification_symbol(sym: SymbolData, side: str, l: int, kappa) -> complex:
    if np.any(np.asarray(kappa) == 0):
        raise ZeroKappa("the amplification symbol is a Laurent polynomial: kappa must be nonzero")
    return _laurent(sym.lam[side][l], sym.p, kappa)


def symbol_derivative(sym: SymbolData, side: str, l: int, kappa) -> complex:
    return _laurent_derivative(sym.lam[side][l], sym.p, kappa)


def check_dissipativity(lam: Dict[str, np.ndarray], p: int) -> float:
    """単位円上 (1 近傍の弧を除く) の max|ℱ_l^±|。1 以上なら NotDissipative。"""
    xi = np.linspace(-np.pi, np.pi, DISSIPATIVITY_POINTS, endpoint=False)
    xi = xi[np.abs(xi) > DISSIPATIVITY_EXCLUDED_ARC]
    kappa = np.exp(1j * xi)
    worst = 0.0
    for side in SIDES:
        for row in lam[side]:
            worst = max(worst, float(np.max(np.abs(_laurent(row, p, kappa)))))
    if worst >= 1.0 - 1e-14:
        raise NotDissipative(f"|F(e^ixi)| reaches {worst:.6f} on the unit circle", max_modulus=worst)
    return worst


# --------------------------------------------------------------------------- #
# Diffusivity expansion
# --------------------------------------------------------------------------- #

def _log_series(row: np.ndarray, p: int, order: int) -> np.ndarray:
    """log ℱ(e^{iξ}) の ξ についての Taylor 係数 (0..order)。"""
    ks = np.arange(-p, row.size - p)
    a = np.array([np.sum(row * (1j * ks) ** n) / math.factorial(n) for n in range(order + 1)], dtype=complex)
    logs = np.zeros(order + 1, dtype=complex)
    for n in range(1, order + 1):
        logs[n] = a[n] - sum(m * logs[m] * a[n - m] for m in range(1, n)) / n
    return logs


def _single_diffusivity(row: np.ndarray, p: int, label: str) -> Tuple[int, float, complex]:
    order = 2 * MU_MAX
    series = -_log_series(row, p, order)
    alpha = float((series[1] / 1j).real)
    ks = np.arange(-p, row.size - p)
    for n in range(2, order + 1):
        scale = max(1.0, float(np.sum(np.abs(row) * np.abs(ks) ** n)) / math.factorial(n))
        if abs(series[n]) <= 1e-12 * scale:
            continue
        if n % 2 == 1:
            raise NoDiffusivity(f"{label}: leading term of order {n} is dispersive, no diffusivity")
        beta = complex(series[n])
        if beta.real <= 0:
            raise NegativeRealPart(f"{label}: Re beta = {beta.real:.3e} at order {n}", beta=beta)
        return n // 2, alpha, beta
    raise NoDiffusivity(f"{label}: all orders up to {order} vanish")


def extract_diffusivity(coefficients: DiagonalSymbolCoefficients, p: int) -> Diffusivity:
    """
    -log ℱ(e^{iξ}) = iαξ + βξ^{2μ} + O(ξ^{2μ+1}) を満たす (μ, α, β) を求める。

    Raises
    ------
    NoDiffusivity
        2μ_max = 8 次まで散逸項が現れない、または各場で μ が異なる場合
    NegativeRealPart
        Re β ≤ 0 の場合
    """

    mus = set()
    alpha: Dict[str, np.ndarray] = {}
    beta: Dict[str, np.ndarray] = {}
    for side in SIDES:
        lam = coefficients.lam[side]
        results = [_single_diffusivity(row, p, f"side {side}, field {l}") for l, row in enumerate(lam)]
        mus.update(r[0] for r in results)
        alpha[side] = np.array([r[1] for r in results])
        beta[side] = np.array([r[2] for r in results], dtype=complex)
    if len(mus) != 1:
        raise NoDiffusivity(f"diffusivity order differs across fields: {sorted(mus)}")
    return Diffusivity(mu=mus.pop(), alpha=alpha, beta=beta)


def build_symbol_data(coefficients: DiagonalSymbolCoefficients, p: int, q: int, nu: float, index_I: int,
                      eigenvalues: Optional[Dict[str, np.ndarray]] = None) -> SymbolData:
    lam = {side: np.asarray(coefficients.lam[side], dtype=complex) for side in SIDES}
    worst = check_dissipativity(lam, p)
    diffusivity = extract_diffusivity(coefficients, p)
    if eigenvalues is not None:
        for side in SIDES:
            if np.max(np.abs(diffusivity.alpha[side] - nu * eigenvalues[side])) > 1e-10:
                logger.warning("[Symbol] alpha^%s differs from nu*lambda", side)
    logger.info("[Symbol] mu=%d, max|F| off 1 = %.6f", diffusivity.mu, worst)
    return SymbolData(p=p, q=q, nu=nu, index_I=index_I, lam=lam,
                      alpha=diffusivity.alpha, beta=diffusivity.beta, mu=diffusivity.mu)


# --------------------------------------------------------------------------- #
# Roots of F(kappa) = z
# --------------------------------------------------------------------------- #

def _root_polynomial(row: np.ndarray, p: int, z: complex) -> np.ndarray:
    """zκ^p - Σ λ_k κ^{k+p} の昇冪係数。"""
    coeffs = -np.asarray(row, dtype=complex)
    coeffs[p] += z
    return coeffs


def kappa_roots(sym: SymbolData, side: str, l: int, z: complex) -> KappaRoots:
    row = sym.lam[side][l]
    scale = float(np.max(np.abs(row)))
    if abs(row[0]) <= 1e-14 * scale or abs(row[-1]) <= 1e-14 * scale:
        raise DegenerateLeadingCoefficient(f"side {side}, field {l}: lambda_-p or lambda_q vanishes")
    coeffs = _root_polynomial(row, sym.p, z)
    roots = np.roots(coeffs[::-1]).astype(complex)
    derivative = P.polyder(coeffs)
    roots = roots - P.polyval(roots, coeffs) / P.polyval(roots, derivative)
    roots = roots[np.argsort(np.abs(roots), kind="stable")]
    separation = float("inf")
    if roots.size > 1:
        gaps = np.abs(roots[:, None] - roots[None, :]) + np.diag(np.full(roots.size, np.inf))
        separation = float(gaps.min())
    return KappaRoots(roots=roots, near_multiple=separation < MULTIPLE_ROOT_TOL, min_separation=separation)


def check_simple_roots(sym: SymbolData) -> float:
    """z = 1 で各 ℱ_l^±(κ) = 1 が p+q 個の相異なる根を持つこと。"""
    worst = float("inf")
    for side in SIDES:
        for l in range(sym.d):
            result = kappa_roots(sym, side, l, 1.0)
            worst = min(worst, result.min_separation)
            if result.near_multiple:
                raise NearMultipleRoot(f"side {side}, field {l}: near-multiple roots at z=1",
                                       separation=result.min_separation)
    return worst


# --------------------------------------------------------------------------- #
# Index sets and eigenvalue curves
# --------------------------------------------------------------------------- #

@dataclass(frozen=True)
class IndexSets:
    ss: range
    cs: range
    cu: range
    su: range

    def to_dict(self) -> dict:
        return {name: list(getattr(self, name)) for name in ("ss", "cs", "cu", "su")}


def index_sets(d: int, p: int, q: int, index_I: int, side: str) -> IndexSets:
    I_side = index_I if side == "+" else index_I - 1
    n = d * (p + q)
    return IndexSets(
        ss=range(0, d * (p - 1) + I_side),
        cs=range(d * (p - 1) + I_side, d * p),
        cu=range(d * p, d * p + I_side),
        su=range(d * p + I_side, n),
    )


def central_index(sym: SymbolData, side: str, l: int) -> int:
    if sym.alpha[side][l] < 0:
        return l + sym.d * sym.p
    return l + sym.d * (sym.p - 1)


def field_of(sym: SymbolData, m: int) -> int:
    return m % sym.d


@dataclass(frozen=True)
class EigenvalueCurves:
    sym: SymbolData
    radius: float
    c_star: float
    sets: Dict[str, IndexSets]
    roots_at_one: Dict[str, np.ndarray]
    band_report: Dict[str, float] = field(default_factory=dict)

    @property
    def global_sets(self) -> IndexSets:
        return IndexSets(ss=self.sets["+"].ss, cs=self.sets["+"].cs, cu=self.sets["-"].cu, su=self.sets["-"].su)

    def zeta_all(self, side: str, z: complex) -> np.ndarray:
        """ζ_m^±(z)、m = 0..d(p+q)-1。1 から z への線分上で根を連続追跡する。"""
        z = complex(z)
        if abs(z - 1.0) > self.radius * (1.0 + 1e-12):
            raise OutsideValidityRadius(f"|z-1| = {abs(z - 1):.4f} exceeds the curve radius {self.radius:.4f}")
        return _continue_roots(self.sym, side, self.roots_at_one[side], z)

    def zeta(self, side: str, m: int, z: complex) -> complex:
        return complex(self.zeta_all(side, z)[m])

    def zeta_prime_all(self, side: str, z: complex, zeta: Optional[np.ndarray] = None) -> np.ndarray:
        """ζ′ = 1/ℱ′(ζ)。"""
        if zeta is None:
            zeta = self.zeta_all(side, z)
        d = self.sym.d
        return np.array([1.0 / symbol_derivative(self.sym, side, m % d, zeta[m]) for m in range(zeta.size)])

    def to_dict(self) -> dict:
        return {
            "radius": self.radius,
            "c_star": self.c_star,
            "sets": {s: self.sets[s].to_dict() for s in SIDES},
            "roots_at_one": {s: [[r.real, r.imag] for r in self.roots_at_one[s]] for s in SIDES},
            "band_report": self.band_report,
        }


def _reference_roots(sym: SymbolData, side: str) -> np.ndarray:
    d, width = sym.d, sym.p + sym.q
    roots = np.empty(d * width, dtype=complex)
    for l in range(d):
        ordered = kappa_roots(sym, side, l, 1.0).roots
        # κ = 1 は絶対値 1 ちょうど。α の符号で安定側/不安定側の境界に置く
        central = int(np.argmin(np.abs(ordered - 1.0)))
        others = np.delete(ordered, central)
        position = sym.p if sym.alpha[side][l] < 0 else sym.p - 1
        ordered = np.insert(others, position, 1.0 + 0j)
        roots[l + d * np.arange(width)] = ordered
    return roots


def _match(previous: np.ndarray, candidates: np.ndarray) -> Tuple[np.ndarray, bool]:
    cost = np.abs(previous[:, None] - candidates[None, :])
    rows, cols = linear_sum_assignment(cost)
    matched = candidates[cols[np.argsort(rows)]]
    displacement = float(np.max(np.abs(matched - previous))) if previous.size else 0.0
    gaps = cost + np.diag(np.full(previous.size, np.inf))
    spacing = float(np.min(np.abs(candidates[:, None] - candidates[None, :]) + np.diag(np.full(candidates.size, np.inf)))) \
        if candidates.size > 1 else float("inf")
    ambiguous = displacement > 0.25 * spacing or np.min(gaps) < displacement
    return matched, ambiguous


def _continue_roots(sym: SymbolData, side: str, reference: np.ndarray, z: complex, max_depth: int = 12) -> np.ndarray:
    d, width = sym.d, sym.p + sym.q
    out = np.empty_like(reference)
    for l in range(d):
        slots = l + d * np.arange(width)
        current = reference[slots].copy()
        n_steps = max(2, int(math.ceil(abs(z - 1.0) / 0.01)))
        stack = [(1.0 + (z - 1.0) * s / n_steps, 1.0 + (z - 1.0) * (s + 1) / n_steps, 0) for s in range(n_steps)]
        stack.reverse()
        while stack:
            start, stop, depth = stack.pop()
            candidates = kappa_roots(sym, side, l, stop).roots
            matched, ambiguous = _match(current, candidates)
            if ambiguous and depth < max_depth:
                middle = 0.5 * (start + stop)
                stack.append((middle, stop, depth + 1))
                stack.append((start, middle, depth + 1))
                continue
            current = matched
        out[slots] = current
    return out


def _band_constants(zeta: np.ndarray, sets: IndexSets) -> Tuple[float, float]:
    moduli = np.abs(zeta)
    c_ss = min((-np.log(moduli[m]) / 2 for m in sets.ss), default=np.inf)
    c_su = min((np.log(moduli[m]) / 2 for m in sets.su), default=np.inf)
    central = list(sets.cs) + list(sets.cu)
    c_c = max((abs(np.log(moduli[m])) for m in central), default=0.0)
    return float(min(c_ss, c_su)), float(c_c)


def initial_disc_radius(sym: SymbolData, sets: Dict[str, IndexSets], roots_at_one: Dict[str, np.ndarray],
                        disc_radius: float) -> float:
    """
    中心曲線は |log ζ| ≈ |z - 1|/|α| で動くので、z = 1 での帯の上限 c と min |α| から
    半径 c min|α| を上限にする。弱い衝撃波では α_I が小さく、円板は disc_radius よりずっと小さくなる。
    """

    upper = min(_band_constants(roots_at_one[side], sets[side])[0] for side in SIDES)
    speed = min(abs(float(a)) for side in SIDES for a in sym.alpha[side])
    if not np.isfinite(upper) or speed == 0.0:
        return float(disc_radius)
    return float(min(disc_radius, upper * speed))


def track_eigenvalue_curves(sym: SymbolData, disc_radius: float = 0.2, n_samples: int = 32,
                            n_radii: int = 4, max_shrink: int = 5) -> EigenvalueCurves:
    """
    z = 1 を中心とする円板上で ζ_m^±(z) を標本化し、帯不等式が成り立つ最大の
    半径と c_* を求める。半径は initial_disc_radius から始め、衝突または帯不等式の破れで
    半分にして再試行する。

    Raises
    ------
    NearMultipleRoot
        z = 1 で根が重複する場合 (H:Mpm1)
    CurveCollision
        max_shrink 回縮小しても曲線が分離しない場合
    """

    check_simple_roots(sym)
    sets = {side: index_sets(sym.d, sym.p, sym.q, sym.index_I, side) for side in SIDES}
    roots_at_one = {side: _reference_roots(sym, side) for side in SIDES}
    radius = initial_disc_radius(sym, sets, roots_at_one, disc_radius)
    if radius < disc_radius:
        logger.info("[Symbol] disc radius %.3e from the band gap at z=1 (requested %.3f)", radius, disc_radius)

    for attempt in range(max_shrink + 1):
        upper, lower, separation = np.inf, 0.0, np.inf
        for side in SIDES:
            for radial in np.linspace(radius / n_radii, radius, n_radii):
                for angle in np.linspace(0.0, 2 * np.pi, n_samples, endpoint=False):
                    z = 1.0 + radial * np.exp(1j * angle)
                    zeta = _continue_roots(sym, side, roots_at_one[side], z)
                    c_upper, c_c = _band_constants(zeta, sets[side])
                    upper, lower = min(upper, c_upper), max(lower, c_c)
                    for l in range(sym.d):
                        slot = zeta[l + sym.d * np.arange(sym.p + sym.q)]
                        if slot.size > 1:
                            gaps = np.abs(slot[:, None] - slot[None, :]) + np.diag(np.full(slot.size, np.inf))
                            separation = min(separation, float(gaps.min()))
        if separation > COLLISION_TOL and lower < upper:
            c_star = max(upper / 2.0, lower) if np.isfinite(upper) else max(lower, 1.0)
            logger.info("[Symbol] curves valid on |z-1| <= %.4f, c_* = %.4f", radius, c_star)
            return EigenvalueCurves(
                sym=sym, radius=radius, c_star=float(c_star), sets=sets, roots_at_one=roots_at_one,
                band_report={"c_upper": float(upper), "c_central": float(lower), "separation": float(separation),
                             "attempts": attempt + 1},
            )
        logger.warning("[Symbol] band/collision check failed at radius %.4f (sep %.2e, %.3f >= %.3f), shrinking",
                       radius, separation, lower, upper)
        radius *= 0.5
    raise CurveCollision(f"eigenvalue curves not separated on any disc down to radius {radius:.2e}")


def central_log_curve(curves: EigenvalueCurves, side: str, l: int, tau: complex) -> complex:
    """ϖ_l^±(τ) = log ζ_central(e^τ)、ϖ(0) = 0 の主枝。"""
    z = np.exp(complex(tau))
    if abs(z - 1.0) > curves.radius:
        raise OutsideValidityRadius(f"tau={tau} maps outside the curve radius {curves.radius:.4f}")
    return complex(np.log(curves.zeta(side, central_index(curves.sym, side, l), z)))


def log_curve_model(sym: SymbolData, side: str, l: int, tau: complex) -> complex:
    """φ_l^±(τ) = -τ/α + (-1)^{μ+1} β/α^{2μ+1} τ^{2μ}。"""
    alpha = sym.alpha[side][l]
    beta = sym.beta[side][l]
    mu = sym.mu
    return -tau / alpha + (-1) ** (mu + 1) * beta / alpha ** (2 * mu + 1) * tau ** (2 * mu)


def root_table(sym: SymbolData, z_values: List[complex]) -> List[dict]:
    rows = []
    for side in SIDES:
        for l in range(sym.d):
            for z in z_values:
                result = kappa_roots(sym, side, l, z)
                rows.append({
                    "side": side,
                    "field": l,
                    "z": complex(z),
                    "roots": result.roots,
                    "inside": int(np.sum(np.abs(result.roots) < 1 - 1e-12)),
                    "outside": int(np.sum(np.abs(result.roots) > 1 + 1e-12)),
                })
    return rows
