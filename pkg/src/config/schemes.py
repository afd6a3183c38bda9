"""
スキーム名ごとのビルダー。

各ビルダーは (ConservationLaw, パラメータ) から StencilScheme を作る。
新しいスキームはビルダーを定義して SCHEME_BUILDERS に追記する。
"""

from typing import Any, Callable, Dict, Mapping

from shockstab.conservation_model import ConservationLaw
from shockstab.scheme import StencilScheme, modified_lax_friedrichs

SchemeBuilder = Callable[[ConservationLaw, Mapping[str, Any]], StencilScheme]


def build_modified_lax_friedrichs(law: ConservationLaw, params: Mapping[str, Any]) -> StencilScheme:
    """
    修正 Lax-Friedrichs スキームを構築する。

    Parameters
    ----------
    law: ConservationLaw
        対象の保存則
    params: Mapping[str, Any]
        "nu" (Δt/Δx) と "D" (数値粘性係数)

    Returns
    -------
    StencilScheme
        p = q = 1 のスキーム
    """
    return modified_lax_friedrichs(law, nu=float(params["nu"]), D=float(params["D"]))


def build_lax_friedrichs(law: ConservationLaw, params: Mapping[str, Any]) -> StencilScheme:
    # 古典的な Lax-Friedrichs は D = 1
    return modified_lax_friedrichs(law, nu=float(params["nu"]), D=1.0)


# スキーム名 -> ビルダー関数 のマッピング
SCHEME_BUILDERS: Dict[str, SchemeBuilder] = {
    "mlf": build_modified_lax_friedrichs,
    "lax-friedrichs": build_lax_friedrichs,
}


def get_scheme_builder(name: str) -> SchemeBuilder:
    """
    スキーム名に対応するビルダーを取得する。

    Parameters
    ----------
    name: str
        スキーム名（例: "mlf", "lax-friedrichs"）

    Returns
    -------
    SchemeBuilder

    Raises
    ------
    KeyError
        指定されたスキーム名に対応するビルダーが存在しない場合
    """
    if name not in SCHEME_BUILDERS:
        raise KeyError(f"No scheme builder found for scheme: {name}")
    return SCHEME_BUILDERS[name]
