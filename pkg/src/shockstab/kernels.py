"""
一般化 Gauss 核 H_{2μ}(β; x) = (1/2π)∫ e^{ixu} e^{-βu^{2μ}} du、E_{2μ}(β; x) = ∫_x^∞ H_{2μ}(β; y) dy と
時間 Green 関数の波のテンプレート S / R / T / E。
"""

import logging
from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

import numpy as np
from scipy import optimize, signal

from shockstab.conservation_model import LaxShockData
from shockstab.errors import IndexConstraintViolation, NonpositiveRealPart
from shockstab.symbol import SymbolData

logger = logging.getLogger(__name__)

TRUNCATION_CONSTANT = 40.0
NODES_PER_PANEL = 20
TAIL_INCREMENT = 1e-12
MAX_TAIL_PANELS = 400


@dataclass(frozen=True)
class KernelParams:
    mu: int
    beta: complex

    def __post_init__(self) -> None:
        if self.mu < 1:
            raise ValueError(f"mu must be a positive integer (got {self.mu})")
        if complex(self.beta).real <= 0:
            raise NonpositiveRealPart(f"Re(beta) = {complex(self.beta).real} must be positive")

    @property
    def cutoff(self) -> float:
        """U = (40/Re β)^{1/(2μ)}: e^{-Re β U^{2μ}} < 1e-17。"""
        return (TRUNCATION_CONSTANT / complex(self.beta).real) ** (1.0 / (2 * self.mu))

    @property
    def tail_exponent(self) -> float:
        return 2 * self.mu / (2 * self.mu - 1)


def _gauss_legendre_panels(upper: float, n_panels: int) -> Tuple[np.ndarray, np.ndarray]:
    nodes, weights = np.polynomial.legendre.leggauss(NODES_PER_PANEL)
    edges = np.linspace(0.0, upper, n_panels + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    u = (mid[:, None] + half[:, None] * nodes[None, :]).ravel()
    w = (half[:, None] * weights[None, :]).ravel()
    return u, w


def _h_quadrature(params: KernelParams, x: np.ndarray) -> np.ndarray:
    """偶関数性から (1/π)∫_0^U cos(xu) e^{-βu^{2μ}} du。"""
    U = params.cutoff
    oscillations = float(np.max(np.abs(x))) * U / (2 * np.pi) if x.size else 0.0
    n_panels = 4 + 2 * int(np.ceil(oscillations))
    u, w = _gauss_legendre_panels(U, n_panels)
    damping = w * np.exp(-complex(params.beta) * u ** (2 * params.mu))
    return (np.cos(np.outer(x, u)) @ damping) / np.pi


def H_kernel(params: KernelParams, x, force_quadrature: bool = False):
    """
    H_{2μ}(β; x)。μ = 1 は閉形式 (1/√(4πβ)) e^{-x²/(4β)} (主値の平方根)、μ ≥ 2 は
    [0, U] 上の合成 Gauss-Legendre。x はスカラーでも配列でもよい。
    """

    scalar = np.ndim(x) == 0
    xs = np.atleast_1d(np.asarray(x, dtype=float))
    beta = complex(params.beta)
    if params.mu == 1 and not force_quadrature:
        values = np.exp(-xs ** 2 / (4 * beta)) / np.sqrt(4 * np.pi * beta)
    else:
        values = _h_quadrature(params, xs)
    if np.all(np.abs(values.imag) == 0.0) or beta.imag == 0.0:
        values = values.real
    return values[0] if scalar else values


def _tail_width(params: KernelParams) -> float:
    return 2.0 * max(1.0, complex(params.beta).real ** (1.0 / (2 * params.mu)))


def _e_nonnegative(params: KernelParams, x: float) -> complex:
    """x ≥ 0: 幅 w のパネルごとに H を積分し、増分が 1e-12 を下回ったら止める。"""
    nodes, weights = np.polynomial.legendre.leggauss(2 * NODES_PER_PANEL)
    width = _tail_width(params)
    total = 0.0 + 0.0j
    start = x
    for _ in range(MAX_TAIL_PANELS):
        y = start + 0.5 * width * (nodes + 1.0)
        increment = 0.5 * width * np.sum(weights * H_kernel(params, y))
        total += increment
        start += width
        if abs(increment) < TAIL_INCREMENT and start - x > width:
            break
    return total


def E_kernel(params: KernelParams, x):
    """
    E_{2μ}(β; x)。x ≥ 0 は H の裾の積分、x < 0 は E(-x) = 1 - E(x)。
    """

    scalar = np.ndim(x) == 0
    xs = np.atleast_1d(np.asarray(x, dtype=float))
    values = np.empty(xs.size, dtype=complex)
    for index, value in enumerate(xs):
        if value == 0.0:
            values[index] = 0.5
        elif value > 0.0:
            values[index] = _e_nonnegative(params, value)
        else:
            values[index] = 1.0 - _e_nonnegative(params, -value)
    if complex(params.beta).imag == 0.0:
        values = values.real
    return values[0] if scalar else values


# --------------------------------------------------------------------------- #
# Tail bound
# --------------------------------------------------------------------------- #

@dataclass(frozen=True)
class KernelBoundReport:
    mu: int
    beta: complex
    exponent: float
    rate: float
    log_constant: float
    predicted_exponent: float
    e_rate: float
    n_points: int

    @property
    def exponent_error(self) -> float:
        return abs(self.exponent - self.predicted_exponent) / self.predicted_exponent

    @property
    def e_tail_ok(self) -> bool:
        return self.e_rate >= 0.95 * self.rate

    def to_dict(self) -> dict:
        return {
            "mu": self.mu,
            "beta": complex(self.beta),
            "exponent": self.exponent,
            "predicted_exponent": self.predicted_exponent,
            "exponent_error": self.exponent_error,
            "rate": self.rate,
            "log_constant": self.log_constant,
            "e_rate": self.e_rate,
            "e_tail_ok": self.e_tail_ok,
            "rate_positive": self.rate > 0,
            "n_points": self.n_points,
        }


def _envelope(x: np.ndarray, magnitude: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """振動する場合は |f| の極大だけを残す。"""
    peaks, _ = signal.find_peaks(magnitude)
    if peaks.size >= 4:
        return x[peaks], magnitude[peaks]
    keep = magnitude > 0
    return x[keep], magnitude[keep]


def kernel_bound_check(params: KernelParams, x: Optional[np.ndarray] = None) -> KernelBoundReport:
    """
    |x| ∈ [1, 12] で log|H| ≈ log C - a log|x| - c|x|^γ を回帰する。
    代数的な前因子 a = (μ-1)/(2μ-1) は鞍点評価の値に固定し、γ と c を推定する。
    E の裾は同じ γ で率だけを回帰する。
    """

    if x is None:
        x = np.linspace(1.0, 12.0, 2201)
    x = np.asarray(x, dtype=float)
    x = x[(np.abs(x) >= 1.0) & (np.abs(x) <= 12.0)]
    prefactor = (params.mu - 1) / (2 * params.mu - 1)
    gamma0 = params.tail_exponent

    xs, mags = _envelope(np.abs(x), np.abs(H_kernel(params, x)))

    def model(t, log_c, rate, gamma):
        return log_c - prefactor * np.log(t) - rate * t ** gamma

    p0 = (float(np.log(mags[0])), 0.25, gamma0)
    (log_c, rate, gamma), _ = optimize.curve_fit(model, xs, np.log(mags), p0=p0, maxfev=20000)

    ex, emags = _envelope(np.abs(x), np.abs(E_kernel(params, np.abs(x))))
    emags_positive = emags > 1e-300
    ex, emags = ex[emags_positive], emags[emags_positive]

    def e_model(t, log_c_e, rate_e):
        return log_c_e - rate_e * t ** gamma

    (_, e_rate), _ = optimize.curve_fit(e_model, ex, np.log(emags), p0=(float(np.log(emags[0])), rate),
                                        maxfev=20000)
    report = KernelBoundReport(
        mu=params.mu, beta=complex(params.beta), exponent=float(gamma), rate=float(rate), log_constant=float(log_c),
        predicted_exponent=gamma0, e_rate=float(e_rate), n_points=int(xs.size),
    )
    logger.info("[Kernels] mu=%d: fitted tail exponent %.4f (predicted %.4f), rate %.4f",
                params.mu, report.exponent, gamma0, report.rate)
    return report


def kernel_samples(params: KernelParams, x: np.ndarray) -> List[dict]:
    """CSV 出力用の H, E の標本。"""
    h = np.asarray(H_kernel(params, x), dtype=complex)
    e = np.asarray(E_kernel(params, x), dtype=complex)
    return [{"x": float(xv), "H": complex(hv), "E": complex(ev)} for xv, hv, ev in zip(np.atleast_1d(x), h, e)]


# --------------------------------------------------------------------------- #
# Wave templates
# --------------------------------------------------------------------------- #

# kind -> (l の側, l′ の側, j の指示関数)
TEMPLATE_KINDS: Dict[str, Tuple[Optional[str], str, Optional[str]]] = {
    "S+": ("+", "+", "ge0"),
    "S-": ("-", "-", "le0"),
    "R+": ("+", "+", "ge0"),
    "T+": ("-", "+", "lt0"),
    "R-": ("-", "-", "le0"),
    "T-": ("+", "-", "gt0"),
    "E+": (None, "+", None),
    "E-": (None, "-", None),
}


@dataclass(frozen=True)
class WaveTemplateParams:
    """l, l_prime は 0 始まり。S では l_prime = l。"""

    kind: str
    l: Optional[int]
    l_prime: int
    mu: int
    alpha_l: float
    beta_l: complex
    alpha_lp: float
    beta_lp: complex
    r: Optional[np.ndarray]
    l_vec: np.ndarray

    @property
    def label(self) -> str:
        if self.kind.startswith("S"):
            return f"{self.kind}[{self.l_prime + 1}]"
        if self.kind.startswith("E"):
            return f"{self.kind}[{self.l_prime + 1}]"
        return f"{self.kind}[{self.l_prime + 1},{self.l + 1}]"


def _check_indices(kind: str, l: Optional[int], l_prime: int, d: int, index_I: int) -> None:
    # 1 始まりの添字で判定する
    lp1 = l_prime + 1
    l1 = None if l is None else l + 1
    allowed = {
        "S+": True,
        "S-": True,
        "R+": lp1 <= index_I and l1 is not None and l1 >= index_I + 1,
        "T+": lp1 <= index_I and l1 is not None and l1 <= index_I - 1,
        "E+": lp1 <= index_I,
        "R-": lp1 >= index_I and l1 is not None and l1 <= index_I - 1,
        "T-": lp1 >= index_I and l1 is not None and l1 >= index_I + 1,
        "E-": lp1 >= index_I,
    }[kind]
    in_range = 0 <= l_prime < d and (l is None or 0 <= l < d)
    if not (allowed and in_range):
        raise IndexConstraintViolation(
            f"{kind} does not exist for l'={lp1}, l={l1} (d={d}, I={index_I})", kind=kind, l=l1, l_prime=lp1,
        )


def template_params(kind: str, sym: SymbolData, shock: LaxShockData, l: Optional[int] = None,
                    l_prime: Optional[int] = None) -> WaveTemplateParams:
    """
    Raises
    ------
    IndexConstraintViolation
        kind と (l′, l) の組合せが存在しない場合
    KeyError
        未知の kind
    """

    l_side, lp_side, _ = TEMPLATE_KINDS[kind]
    if kind.startswith("S"):
        l_prime = l if l_prime is None else l_prime
        l = l_prime
    if l_prime is None:
        raise IndexConstraintViolation(f"{kind} needs l_prime", kind=kind)
    if kind.startswith("E"):
        l = None
    _check_indices(kind, l, l_prime, sym.d, sym.index_I)

    lp_char = shock.side(lp_side)
    if l is None:
        return WaveTemplateParams(
            kind=kind, l=None, l_prime=l_prime, mu=sym.mu, alpha_l=float("nan"), beta_l=complex("nan"),
            alpha_lp=float(sym.alpha[lp_side][l_prime]), beta_lp=complex(sym.beta[lp_side][l_prime]),
            r=None, l_vec=lp_char.l(l_prime),
        )
    l_char = shock.side(l_side)
    return WaveTemplateParams(
        kind=kind, l=l, l_prime=l_prime, mu=sym.mu,
        alpha_l=float(sym.alpha[l_side][l]), beta_l=complex(sym.beta[l_side][l]),
        alpha_lp=float(sym.alpha[lp_side][l_prime]), beta_lp=complex(sym.beta[lp_side][l_prime]),
        r=l_char.r(l), l_vec=lp_char.l(l_prime),
    )


def admissible_templates(d: int, index_I: int, j0: int) -> List[Tuple[str, Optional[int], int]]:
    """j_0 の符号に応じて存在する (kind, l, l′) の一覧。"""
    suffix = "+" if j0 >= 0 else "-"
    out: List[Tuple[str, Optional[int], int]] = []
    for l in range(d):
        out.append(("S" + suffix, l, l))
    for kind in ("R" + suffix, "T" + suffix):
        for lp in range(d):
            for l in range(d):
                try:
                    _check_indices(kind, l, lp, d, index_I)
                except IndexConstraintViolation:
                    continue
                out.append((kind, l, lp))
    for lp in range(d):
        try:
            _check_indices("E" + suffix, None, lp, d, index_I)
        except IndexConstraintViolation:
            continue
        out.append(("E" + suffix, None, lp))
    return out


def _indicator(rule: str, j: np.ndarray) -> np.ndarray:
    return {"ge0": j >= 0, "le0": j <= 0, "lt0": j < 0, "gt0": j > 0}[rule]


def wave_template(tp: WaveTemplateParams, n: int, j0: int, j=None) -> np.ndarray:
    """
    S / R / T は (len(j), d, d) の行列場、E は長さ d の行ベクトル l_{l′}^T の倍を返す。
    R / T の第 1 引数は (j/(nα_l))β_l - (j_0/(nα_{l′}))β_{l′}(α_l/α_{l′})^{2μ}。
    """

    if n < 1:
        raise ValueError(f"n must be positive (got {n})")
    scale = float(n) ** (1.0 / (2 * tp.mu))

    if tp.kind.startswith("E"):
        if tp.kind == "E+":
            x = (n * tp.alpha_lp + j0) / scale
        else:
            x = (-n * tp.alpha_lp - j0) / scale
        return E_kernel(KernelParams(tp.mu, tp.beta_lp), x) * tp.l_vec

    j = np.atleast_1d(np.asarray(j, dtype=float))
    _, _, rule = TEMPLATE_KINDS[tp.kind]
    if tp.kind.startswith("S"):
        position = (j - j0) / tp.alpha_l
    else:
        position = j / tp.alpha_l - j0 / tp.alpha_lp
    active = _indicator(rule, j) & (position >= n / 2) & (position <= 2 * n)

    outer = np.outer(tp.r, tp.l_vec)
    out = np.zeros((j.size,) + outer.shape, dtype=complex)
    for index in np.flatnonzero(active):
        jj = j[index]
        if tp.kind.startswith("S"):
            beta = tp.beta_l
            x = (n * tp.alpha_l + j0 - jj) / scale
        else:
            ratio = tp.alpha_l / tp.alpha_lp
            beta = (jj / (n * tp.alpha_l)) * tp.beta_l - (j0 / (n * tp.alpha_lp)) * tp.beta_lp * ratio ** (2 * tp.mu)
            x = (n * tp.alpha_l + j0 * ratio - jj) / scale
        out[index] = H_kernel(KernelParams(tp.mu, beta), x) / scale * outer
    return out
