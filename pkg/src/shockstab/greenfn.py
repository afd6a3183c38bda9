"""
時間 Green 関数 𝒢(n, j_0, ·) = 𝓛^n δ_{j_0} と、波のテンプレートへの分解。

𝒢 は反復と、円 |z| = r 上の逆 Laplace 変換 (1/2πi)∮ z^n G(z, j_0, j) dz の二通りで求める。
分解の定数は散乱係数 (留数・極限) から作り、最小二乗による推定は検算としてのみ使う。
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np
from scipy import linalg, optimize

from shockstab.conservation_model import LaxShockData
from shockstab.errors import ConeTruncation, NearSingularResolvent, NodeNearSpectrum, ProvenanceDisagreement
from shockstab.fitting import PowerLawFit, fit_power_law
from shockstab.kernels import admissible_templates, template_params, wave_template
from shockstab.operator import LinearizedOperator
from shockstab.resolvent.green import ResidueField, resolvent_columns
from shockstab.resolvent.scattering import ScatteringTable
from shockstab.symbol import SymbolData, central_index

logger = logging.getLogger(__name__)

PROVENANCE_TOL = 0.05
DECAY_BAND = 0.1
ACTIVATION_SPREAD = 3.0
ACTIVATION_LOW = 0.05
ACTIVATION_HIGH = 0.95


@dataclass(frozen=True)
class TemporalGreen:
    """values[n, i][:, e] = 𝒢(n, j_0, j_i) e。"""

    j0: int
    lattice: np.ndarray
    values: np.ndarray
    p: int
    q: int
    conservation_defect: float = 0.0

    @property
    def N_max(self) -> int:
        return int(self.values.shape[0] - 1)

    @property
    def d(self) -> int:
        return int(self.values.shape[-1])

    def cone(self, n: int) -> np.ndarray:
        offset = self.lattice - self.j0
        return (offset >= -n * self.q) & (offset <= n * self.p)

    def at(self, n: int, j: int) -> np.ndarray:
        return self.values[n, int(j) - int(self.lattice[0])]

    def to_rows(self, ns: Optional[Sequence[int]] = None) -> List[dict]:
        ns = range(self.N_max + 1) if ns is None else ns
        rows = []
        for n in ns:
            for index in np.flatnonzero(self.cone(n)):
                block = self.values[n, index]
                row = {"n": int(n), "j": int(self.lattice[index])}
                for a in range(self.d):
                    for b in range(self.d):
                        row[f"G{a}{b}"] = float(block[a, b])
                rows.append(row)
        return rows


def temporal_green_iterate(L: LinearizedOperator, j0: int, N_max: int) -> TemporalGreen:
    """
    𝒢(n+1) = 𝓛𝒢(n) を n = N_max まで。各段で錐 j - j_0 ∈ {-nq, …, np} の外を 0 に保つ。

    Raises
    ------
    ConeTruncation
        錐が格子端に届く場合
    """

    p, q, d = L.p, L.q, L.d
    if j0 - N_max * q <= -L.J_dom or j0 + N_max * p >= L.J_dom:
        raise ConeTruncation(
            f"cone of n={N_max} from j0={j0} reaches the lattice edge (J_dom={L.J_dom})",
            j0=j0, N_max=N_max, J_dom=L.J_dom,
        )
    columns = np.zeros((L.n_cells * d, d), dtype=L.matrix.dtype)
    columns[L.cell(j0) * d + np.arange(d), np.arange(d)] = 1.0
    values = np.empty((N_max + 1, L.n_cells, d, d), dtype=L.matrix.dtype)
    values[0] = columns.reshape(L.n_cells, d, d)

    offset = L.lattice - j0
    worst_leak = 0.0
    for n in range(1, N_max + 1):
        columns = L.matrix @ columns
        outside = np.repeat(~((offset >= -n * q) & (offset <= n * p)), d)
        worst_leak = max(worst_leak, float(np.max(np.abs(columns[outside]), initial=0.0)))
        columns[outside] = 0.0
        values[n] = columns.reshape(L.n_cells, d, d)

    totals = values.sum(axis=1)
    defect = float(np.max(np.abs(totals - np.eye(d)[None])))
    if worst_leak > 0.0:
        logger.warning("[Green] nonzero values outside the cone (%.2e) were masked", worst_leak)
    logger.info("[Green] iterated temporal Green to n=%d from j0=%d (mass defect %.2e)", N_max, j0, defect)
    return TemporalGreen(j0=int(j0), lattice=L.lattice, values=values, p=p, q=q, conservation_defect=defect)


def temporal_green_contour(L: LinearizedOperator, j0: int, js: Sequence[int], ns: Sequence[int], r: float = 1.05,
                           M_nodes: int = 1024) -> np.ndarray:
    """
    𝒢(n, j_0, j) ≈ (1/M) Σ_k z_k^{n+1} G(z_k, j_0, j)、z_k = r e^{2πik/M}。戻り値は (len(ns), len(js), d, d)。

    Raises
    ------
    NodeNearSpectrum
        いずれかの節点でレゾルベントが特異に近い場合
    """

    js = np.asarray(list(js), dtype=int)
    ns = np.asarray(list(ns), dtype=int)
    rows = np.concatenate([L.cell(j) * L.d + np.arange(L.d) for j in js])
    nodes = r * np.exp(2j * np.pi * np.arange(M_nodes) / M_nodes)
    total = np.zeros((ns.size, rows.size, L.d), dtype=complex)
    for z in nodes:
        try:
            columns = resolvent_columns(L, z, j0)[rows]
        except NearSingularResolvent as exc:
            raise NodeNearSpectrum(f"contour node z={z:.6f} is too close to the spectrum", z=complex(z)) from exc
        total += (z ** (ns + 1))[:, None, None] * columns[None]
    out = (total / M_nodes).reshape(ns.size, js.size, L.d, L.d)
    logger.info("[Green] contour |z|=%.3f with %d nodes for %d times", r, M_nodes, ns.size)
    return out


# --------------------------------------------------------------------------- #
# Constants
# --------------------------------------------------------------------------- #

@dataclass(frozen=True)
class WaveConstant:
    kind: str
    l: Optional[int]
    l_prime: int
    value: complex
    provenance: str
    least_squares: Optional[complex] = None

    @property
    def label(self) -> str:
        if self.l is None:
            return f"C^{self.kind}[{self.l_prime + 1}]"
        return f"C^{self.kind}[{self.l_prime + 1},{self.l + 1}]"

    @property
    def gap(self) -> Optional[float]:
        if self.least_squares is None or not np.isfinite(self.value):
            return None
        return float(abs(self.least_squares - self.value) / max(abs(self.value), 1e-300))

    def to_dict(self) -> dict:
        return {
            "label": self.label,
            "kind": self.kind,
            "value": complex(self.value),
            "provenance": self.provenance,
            "least_squares": None if self.least_squares is None else complex(self.least_squares),
            "gap": self.gap,
        }


def residue_constants(table: ScatteringTable, sym: SymbolData, j0: int) -> List[WaveConstant]:
    """
    C^E_{l′}^+ = Res(g̃^+_{m′,1}, 1)/α_{l′}^+、C^R_{l′,l}^+ = (α_l^+/α_{l′}^+) g̃^+_{m′,m}(1)、
    C^T_{l′,l}^+ = (α_l^-/α_{l′}^+) g̃^+_{m′,m}(1)。j_0 < 0 は役割を入れ替えた - 側の式。
    (m′, m) は (l′, l) の中心モード番号。
    """

    n = sym.n_modes
    out: List[WaveConstant] = []
    own = "+" if j0 >= 0 else "-"
    other = "-" if own == "+" else "+"
    for kind, l, lp in admissible_templates(sym.d, sym.index_I, j0):
        if kind.startswith("S"):
            continue
        m_prime = central_index(sym, own, lp)
        alpha_lp = float(sym.alpha[own][lp])
        if kind.startswith("E"):
            if own == "+":
                value = table.residue("+", m_prime, 0) / alpha_lp
            else:
                value = -table.residue("-", m_prime, n - 1) / alpha_lp
        else:
            l_side = own if kind.startswith("R") else other
            m = central_index(sym, l_side, l)
            value = float(sym.alpha[l_side][l]) / alpha_lp * table.limit(own, m_prime, m)
        out.append(WaveConstant(kind=kind, l=l, l_prime=lp, value=complex(value), provenance="residue"))
    return out


@dataclass(frozen=True)
class ConstantSet:
    j0: int
    constants: List[WaveConstant]
    lsq_times: List[int] = field(default_factory=list)

    def get(self, kind: str, l_prime: int, l: Optional[int] = None) -> WaveConstant:
        for constant in self.constants:
            if constant.kind == kind and constant.l_prime == l_prime and constant.l == l:
                return constant
        raise KeyError(f"no constant {kind} for l'={l_prime}, l={l}")

    @property
    def disagreements(self) -> List[str]:
        return [c.label for c in self.constants if c.gap is not None and c.gap > PROVENANCE_TOL]

    def to_dict(self) -> dict:
        return {
            "j0": self.j0,
            "lsq_times": self.lsq_times,
            "constants": [c.to_dict() for c in self.constants],
            "disagreements": self.disagreements,
        }


def _s_prediction(tg: TemporalGreen, sym: SymbolData, shock: LaxShockData, n: int) -> np.ndarray:
    total = np.zeros((tg.lattice.size, tg.d, tg.d), dtype=complex)
    for kind, l, lp in admissible_templates(sym.d, sym.index_I, tg.j0):
        if kind.startswith("S"):
            total += wave_template(template_params(kind, sym, shock, l=l), n, tg.j0, tg.lattice)
    return total


def _template_field(constant: WaveConstant, tg: TemporalGreen, sym: SymbolData, shock: LaxShockData, n: int,
                    V: np.ndarray) -> np.ndarray:
    """定数 1 に対するテンプレート場 (len(lattice), d, d)。"""
    tp = template_params(constant.kind, sym, shock, l=constant.l, l_prime=constant.l_prime)
    if constant.kind.startswith("E"):
        row = wave_template(tp, n, tg.j0)
        return np.einsum("ja,b->jab", V, row)
    return wave_template(tp, n, tg.j0, tg.lattice)


def estimate_constants(table: ScatteringTable, sym: SymbolData, shock: LaxShockData, tg: Optional[TemporalGreen] = None,
                       V: Optional[np.ndarray] = None, strict: bool = False) -> ConstantSet:
    """
    留数・極限から定数を作り、tg と V があれば n ∈ {N/2, 3N/4, N} での最小二乗推定も並べて報告する。

    Raises
    ------
    ProvenanceDisagreement
        strict=True で二つの推定が相対 5% を超えて食い違う場合 (既定では警告のみ)
    """

    j0 = 0 if tg is None else tg.j0
    constants = residue_constants(table, sym, j0)
    if tg is None or V is None or not constants:
        return ConstantSet(j0=j0, constants=constants)

    times = sorted({tg.N_max // 2, (3 * tg.N_max) // 4, tg.N_max})
    design, target = [], []
    for n in times:
        measured = tg.values[n] - _s_prediction(tg, sym, shock, n)
        target.append(measured.ravel())
        design.append(np.column_stack([_template_field(c, tg, sym, shock, n, V).ravel() for c in constants]))
    solution, *_ = linalg.lstsq(np.vstack(design), np.concatenate(target))

    updated = [
        WaveConstant(kind=c.kind, l=c.l, l_prime=c.l_prime, value=c.value, provenance=c.provenance,
                     least_squares=complex(s))
        for c, s in zip(constants, solution)
    ]
    result = ConstantSet(j0=j0, constants=updated, lsq_times=times)
    for label in result.disagreements:
        message = f"{label}: residue and least-squares estimates differ by more than {PROVENANCE_TOL:.0%}"
        if strict:
            raise ProvenanceDisagreement(message, constants=[c.to_dict() for c in updated])
        logger.warning("[Green] %s (residue value kept)", message)
    return result


# --------------------------------------------------------------------------- #
# Decomposition
# --------------------------------------------------------------------------- #

@dataclass(frozen=True)
class DecompositionStep:
    n: int
    residual_norm: float
    prediction_norm: float
    measured_norm: float

    @property
    def ratio(self) -> float:
        return self.residual_norm / self.prediction_norm if self.prediction_norm > 0 else float("inf")

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "residual_norm": self.residual_norm,
            "prediction_norm": self.prediction_norm,
            "measured_norm": self.measured_norm,
            "ratio": self.ratio,
        }


@dataclass(frozen=True)
class WaveDecomposition:
    j0: int
    constants: ConstantSet
    steps: List[DecompositionStep]
    predictions: Dict[int, np.ndarray]
    residuals: Dict[int, np.ndarray]

    def step(self, n: int) -> DecompositionStep:
        return next(s for s in self.steps if s.n == n)

    def ratios_non_increasing(self) -> bool:
        ratios = [s.ratio for s in self.steps]
        return all(b <= a * (1 + 1e-9) for a, b in zip(ratios, ratios[1:]))

    def to_dict(self) -> dict:
        return {
            "j0": self.j0,
            "constants": self.constants.to_dict(),
            "steps": [s.to_dict() for s in self.steps],
            "ratios_non_increasing": self.ratios_non_increasing(),
            "threshold_note": "ratio < 0.2 at n=200 is a working convention, the remainder rate is not quantified",
        }


def predicted_field(constants: ConstantSet, tg: TemporalGreen, sym: SymbolData, shock: LaxShockData, n: int,
                    V: np.ndarray) -> np.ndarray:
    total = _s_prediction(tg, sym, shock, n)
    for constant in constants.constants:
        total += constant.value * _template_field(constant, tg, sym, shock, n, V)
    return total


def decompose(tg: TemporalGreen, constants: ConstantSet, sym: SymbolData, shock: LaxShockData, V: np.ndarray,
              ns: Sequence[int]) -> WaveDecomposition:
    """ℛ = 𝒢 - (S + C^R R + C^T T + C^E E·V) と各 n の sup ノルム。"""
    steps, predictions, residuals = [], {}, {}
    for n in ns:
        prediction = predicted_field(constants, tg, sym, shock, int(n), V)
        residual = tg.values[n] - prediction
        predictions[int(n)] = prediction
        residuals[int(n)] = residual
        steps.append(DecompositionStep(
            n=int(n),
            residual_norm=float(np.max(np.abs(residual))),
            prediction_norm=float(np.max(np.abs(prediction))),
            measured_norm=float(np.max(np.abs(tg.values[n]))),
        ))
        logger.info("[Green] n=%d: |R|/|prediction| = %.4f", n, steps[-1].ratio)
    return WaveDecomposition(j0=tg.j0, constants=constants, steps=steps, predictions=predictions,
                             residuals=residuals)


def excited_field(constants: ConstantSet, sym: SymbolData, shock: LaxShockData, V: np.ndarray) -> np.ndarray:
    """n → ∞ での Σ C^E V_j l_{l′}^T (E → l^T)。"""
    total = np.zeros((V.shape[0], sym.d, sym.d), dtype=complex)
    for constant in constants.constants:
        if constant.kind.startswith("E"):
            side = constant.kind[1]
            total += constant.value * np.einsum("ja,b->jab", V, shock.side(side).l(constant.l_prime))
    return total


def residue_cross_check(constants: ConstantSet, sym: SymbolData, shock: LaxShockData, V: np.ndarray,
                        residue: ResidueField) -> float:
    """excited_field と Res_{z=1}G(z, j_0, ·) の相対差。"""
    field_ = excited_field(constants, sym, shock, V)
    scale = float(np.max(np.abs(residue.residue)))
    return float(np.max(np.abs(field_ - residue.residue)) / scale)


def residue_convergence(tg: TemporalGreen, residue: ResidueField, ns: Sequence[int]) -> PowerLawFit:
    """sup_j |𝒢(n, j_0, j) - Res G(·, j_0, j)| の n に対する冪回帰 (傾きは -1/(2μ) に近いはず)。"""
    ns = np.asarray(list(ns), dtype=int)
    distance = np.array([np.max(np.abs(tg.values[n] - residue.residue)) for n in ns])
    fit = fit_power_law(ns, distance)
    logger.info("[Green] long-time convergence exponent %.4f", fit.exponent)
    return fit


def activation_curve(constants: ConstantSet, sym: SymbolData, shock: LaxShockData, j0: int,
                     ns: Sequence[int]) -> List[dict]:
    """|C^E E(n, j_0)| / |C^E| を n ごとに (波の到達で 0 から 1 へ)。"""
    rows = []
    for constant in constants.constants:
        if not constant.kind.startswith("E"):
            continue
        tp = template_params(constant.kind, sym, shock, l_prime=constant.l_prime)
        limit = np.linalg.norm(tp.l_vec)
        for n in ns:
            value = np.linalg.norm(wave_template(tp, int(n), j0)) / limit
            rows.append({"label": constant.label, "n": int(n), "fraction": float(value),
                         "arrival": abs(j0 / tp.alpha_lp)})
    return rows


@dataclass(frozen=True)
class ActivationWindow:
    """n_lo + c n_lo^{1/(2μ)} = n* = n_hi - c n_hi^{1/(2μ)} (n* = |j_0/α_{l′}|) の両端での到達率。"""

    label: str
    arrival: float
    n_lo: int
    n_hi: int
    before: float
    after: float

    @property
    def within(self) -> bool:
        return self.before < ACTIVATION_LOW and self.after > ACTIVATION_HIGH

    def to_dict(self) -> dict:
        return {
            "label": self.label,
            "arrival": self.arrival,
            "n_lo": self.n_lo,
            "n_hi": self.n_hi,
            "before": self.before,
            "after": self.after,
            "within": self.within,
        }


def _window_edge(arrival: float, mu: int, sign: float, spread: float) -> float:
    power = 1.0 / (2 * mu)

    def f(n: float) -> float:
        return n + sign * spread * n ** power - arrival

    if sign > 0:
        return float(optimize.brentq(f, 1e-12, arrival))
    return float(optimize.brentq(f, arrival, arrival + spread * (4 * arrival + 100) ** power))


def activation_windows(constants: ConstantSet, sym: SymbolData, shock: LaxShockData, j0: int,
                       spread: float = ACTIVATION_SPREAD) -> List[ActivationWindow]:
    """
    C^E E(n, j_0) の到達率が n* - c n^{1/(2μ)} で 5% 未満、n* + c n^{1/(2μ)} で 95% を超えるか。
    窓の端は外側の整数に丸める。
    """

    windows = []
    for constant in constants.constants:
        if not constant.kind.startswith("E"):
            continue
        tp = template_params(constant.kind, sym, shock, l_prime=constant.l_prime)
        arrival = abs(j0 / tp.alpha_lp)
        if arrival == 0.0:
            continue
        n_lo = max(1, int(np.floor(_window_edge(arrival, sym.mu, 1.0, spread) + 1e-9)))
        n_hi = int(np.ceil(_window_edge(arrival, sym.mu, -1.0, spread) - 1e-9))
        limit = np.linalg.norm(tp.l_vec)
        window = ActivationWindow(
            label=constant.label, arrival=arrival, n_lo=n_lo, n_hi=n_hi,
            before=float(np.linalg.norm(wave_template(tp, n_lo, j0)) / limit),
            after=float(np.linalg.norm(wave_template(tp, n_hi, j0)) / limit),
        )
        logger.info("[Green] %s activation %.3f at n=%d, %.3f at n=%d (arrival %.1f)", window.label, window.before,
                    n_lo, window.after, n_hi, arrival)
        windows.append(window)
    return windows


def in_flight_j0(constants: ConstantSet, sym: SymbolData, shock: LaxShockData, N_max: int, spread: float = 6.0) -> int:
    """N_max までに入射波が衝撃波へ届かない j_0 (> 0): j_0 ≥ N_max|α_{l′}| + c N_max^{1/(2μ)}。"""
    speeds = [
        abs(template_params(c.kind, sym, shock, l_prime=c.l_prime).alpha_lp)
        for c in constants.constants if c.kind == "E+"
    ]
    speed = max(speeds, default=max(abs(a) for a in sym.alpha["+"]))
    return int(np.ceil(N_max * speed + spread * N_max ** (1.0 / (2 * sym.mu))))


@dataclass(frozen=True)
class InFlightDecay:
    j0: int
    mu: int
    fit: PowerLawFit
    ns: List[int]
    distances: List[float]

    @property
    def predicted(self) -> float:
        return -1.0 / (2 * self.mu)

    @property
    def within_band(self) -> bool:
        return abs(self.fit.exponent - self.predicted) <= DECAY_BAND

    def to_dict(self) -> dict:
        return {
            "j0": self.j0,
            "predicted": self.predicted,
            "fit": self.fit.to_dict(),
            "within_band": self.within_band,
            "ns": self.ns,
            "distances": self.distances,
        }


def in_flight_decay(tg: TemporalGreen, constants: ConstantSet, sym: SymbolData, shock: LaxShockData, V: np.ndarray,
                    ns: Sequence[int]) -> InFlightDecay:
    """
    sup_j |𝒢(n, j_0, j) - Σ C^E E(n, j_0) V_j l_{l′}^T| の n に対する冪回帰。
    波が飛んでいる間 (j_0 は in_flight_j0 以上) は拡散波の高さ n^{-1/(2μ)} で減る。
    吸収後は誤差関数の裾だけが残り急速に減るので、その区間では測らない。
    """

    ns = [int(n) for n in ns]
    distances = []
    for n in ns:
        excited = np.zeros_like(tg.values[n], dtype=complex)
        for constant in constants.constants:
            if constant.kind.startswith("E"):
                excited += constant.value * _template_field(constant, tg, sym, shock, n, V)
        distances.append(float(np.max(np.abs(tg.values[n] - excited))))
    fit = fit_power_law(np.asarray(ns), np.asarray(distances))
    result = InFlightDecay(j0=tg.j0, mu=sym.mu, fit=fit, ns=ns, distances=distances)
    logger.info("[Green] in-flight decay exponent %.4f (predicted %.4f) from j0=%d", fit.exponent, result.predicted,
                tg.j0)
    return result
