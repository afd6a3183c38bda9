"""
出力 CSV ごとの列設定。

CSV_EXPORT_CONFIG は以下のような構造:
{
    "<stage>/<table>": {
        "field_order": ["n", "m", ...],  # オプション: 出力する列と順序
    },
}

複素数の列は <名前>_re, <名前>_im に展開された後の名前で書く。
未設定の表は最初の行のキー順をそのまま使う (成分数で列が変わる表など)。
"""

from typing import Dict, Mapping

TableConfig = Mapping[str, object]

CSV_EXPORT_CONFIG: Dict[str, TableConfig] = {
    "spectrum/essential": {
        "field_order": ["side", "field", "xi", "value_re", "value_im"],
    },
    "evans/circle": {
        "field_order": ["z_re", "z_im", "value_re", "value_im", "normalized_re", "normalized_im", "log10_scale"],
    },
    "kernels/samples": {
        "field_order": ["mu", "x", "H_re", "H_im", "E_re", "E_im"],
    },
    "stability/decay": {
        "field_order": ["generator", "r1", "r2", "n", "m", "norm", "c_re", "c_im"],
    },
    "decompose/activation": {
        "field_order": ["label", "n", "fraction", "arrival"],
    },
}
