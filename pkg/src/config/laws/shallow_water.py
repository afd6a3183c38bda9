"""
浅水方程式 f(h, q) = (q, q²/h + g h²/2) の定義。

定常 1-衝撃波の右状態は Rankine-Hugoniot 条件から数値的に求める。
質量流束 q は両側で等しいので、与えた水深 h^- と h^+ = h^-(1 + strength)
に対して運動量流束の一致
    q² (1/h^- - 1/h^+) = g (h^+² - h^-²) / 2
を q > 0 について brentq で解く (閉形式 q² = g h^- h^+ (h^- + h^+)/2 はテストで照合)。
"""

from typing import Any, Mapping, Tuple

import numpy as np
from scipy import optimize

from shockstab.conservation_model import ConservationLaw


def build_law(params: Mapping[str, Any]) -> ConservationLaw:
    g = float(params.get("g", 1.0))
    if g <= 0:
        raise ValueError(f"shallow-water gravity must be positive, got {g}")

    def flux(u: np.ndarray) -> np.ndarray:
        h, q = u[..., 0], u[..., 1]
        return np.stack([q, q ** 2 / h + 0.5 * g * h ** 2], axis=-1)

    def jacobian(u: np.ndarray) -> np.ndarray:
        h, q = u[..., 0], u[..., 1]
        velocity = q / h
        row0 = np.stack([np.zeros_like(h), np.ones_like(h)], axis=-1)
        row1 = np.stack([g * h - velocity ** 2, 2.0 * velocity], axis=-1)
        return np.stack([row0, row1], axis=-2)

    return ConservationLaw(
        name="shallow-water",
        d=2,
        flux=flux,
        jacobian=jacobian,
        admissible=lambda u: u[..., 0] > 0,
        params={"g": g},
    )


def stationary_shock_states(g: float, h_minus: float, strength: float) -> Tuple[np.ndarray, np.ndarray]:
    """
    定常 1-衝撃波の (u^-, u^+) を求める。

    Parameters
    ----------
    g: float
        重力加速度
    h_minus: float
        左側の水深
    strength: float
        相対強度 (h^+ = h^-(1 + strength))

    Returns
    -------
    Tuple[np.ndarray, np.ndarray]
        (h, q) 形式の左右状態
    """
    if strength <= 0:
        raise ValueError("a stationary 1-shock needs h^+ > h^- (strength > 0)")
    h_plus = h_minus * (1.0 + strength)

    def momentum_jump(q: float) -> float:
        return q ** 2 * (1.0 / h_minus - 1.0 / h_plus) - 0.5 * g * (h_plus ** 2 - h_minus ** 2)

    # 運動量流束の差は q > 0 で単調増加
    upper = 1.0
    while momentum_jump(upper) < 0:
        upper *= 2.0
    q = optimize.brentq(momentum_jump, 0.0, upper, xtol=1e-15, rtol=4 * np.finfo(float).eps)
    return np.array([h_minus, q]), np.array([h_plus, q])


def build_shock(params: Mapping[str, Any]) -> Tuple[np.ndarray, np.ndarray]:
    return stationary_shock_states(
        g=float(params.get("g", 1.0)),
        h_minus=float(params.get("h_minus", 1.0)),
        strength=float(params.get("strength", 0.1)),
    )
