"""
保存則ごとの定義。

各モジュールは build_law (パラメータ -> ConservationLaw) と
build_shock (パラメータ -> (u^-, u^+)) を提供する。
"""

from typing import Any, Callable, Dict, Mapping, Tuple

import numpy as np

from shockstab.conservation_model import ConservationLaw

from .burgers import build_law as build_burgers_law, build_shock as build_burgers_shock
from .shallow_water import build_law as build_shallow_water_law, build_shock as build_shallow_water_shock
from .polynomial import build_law as build_polynomial_law, build_shock as build_polynomial_shock

LawBuilder = Callable[[Mapping[str, Any]], ConservationLaw]
ShockBuilder = Callable[[Mapping[str, Any]], Tuple[np.ndarray, np.ndarray]]

# law名 -> (build_law関数, build_shock関数) のマッピング
LAW_BUILDERS: Dict[str, Tuple[LawBuilder, ShockBuilder]] = {
    "burgers": (build_burgers_law, build_burgers_shock),
    "shallow-water": (build_shallow_water_law, build_shallow_water_shock),
    "polynomial": (build_polynomial_law, build_polynomial_shock),
}


def get_law_builder(name: str) -> Tuple[LawBuilder, ShockBuilder]:
    """
    law名に対応する保存則ビルダーと衝撃波ビルダーを取得する。

    Parameters
    ----------
    name: str
        law名（例: "burgers", "shallow-water"）

    Returns
    -------
    Tuple[build_law関数, build_shock関数]

    Raises
    ------
    KeyError
        指定されたlaw名に対応するビルダーが存在しない場合
    """
    if name not in LAW_BUILDERS:
        raise KeyError(f"No law builder found for law: {name}")
    return LAW_BUILDERS[name]
