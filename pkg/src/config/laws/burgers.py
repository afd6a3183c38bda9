"""
Burgers 方程式 f(u) = u²/2 の定義。

スカラー則 (d=1)。既定の衝撃波は u^- = 1, u^+ = -1 の定常衝撃波。
"""

from typing import Any, Mapping, Tuple

import numpy as np

from shockstab.conservation_model import ConservationLaw


def build_law(params: Mapping[str, Any]) -> ConservationLaw:
    """
    Burgers 則を構築する。

    Parameters
    ----------
    params: Mapping[str, Any]
        未使用 (パラメータなし)

    Returns
    -------
    ConservationLaw
        d=1 の保存則
    """
    return ConservationLaw(
        name="burgers",
        d=1,
        flux=lambda u: 0.5 * u ** 2,
        jacobian=lambda u: u[..., None],
    )


def build_shock(params: Mapping[str, Any]) -> Tuple[np.ndarray, np.ndarray]:
    # 定常衝撃波は u^+ = -u^-
    u_minus = float(params.get("u_minus", 1.0))
    u_plus = float(params.get("u_plus", -u_minus))
    return np.array([u_minus]), np.array([u_plus])
