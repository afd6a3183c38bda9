"""
解析パイプラインの実行設定。

優先順位は 既定値 < TOML ファイル < 環境変数 < CLI フラグ。
TOML はセクション付き (例: [scheme] nu = 0.5) で、内部では平坦なフィールドに写す。
KEY_MAP がドット区切りキーとフィールド名の対応表で、CLI フラグも同じキーで上書きする。
"""

import json
import math
import os

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from dataclasses import MISSING, asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional

from shockstab.errors import ConfigError
from shockstab.stability import GENERATORS

from .laws import get_law_builder
from .schemes import get_scheme_builder

PRESET_DIR = Path(__file__).resolve().parent / "presets"

# "セクション.キー" -> RunConfig のフィールド名
KEY_MAP: Dict[str, str] = {
    "law.name": "law",
    "law.params": "law_params",
    "shock": "shock",
    "scheme.name": "scheme",
    "scheme.nu": "nu",
    "scheme.D": "D",
    "scheme.p": "p",
    "scheme.q": "q",
    "lattice.J_dom": "J_dom",
    "newton.tol": "newton_tol",
    "newton.max_iter": "newton_max_iter",
    "profile.phase_shifts": "phase_shifts",
    "symbol.disc_radius": "disc_radius",
    "spectrum.rho": "eigen_rho",
    "evans.radius": "evans_radius",
    "evans.n_points": "evans_points",
    "green.z": "green_z",
    "green.j0": "green_j0",
    "green.far_z": "far_z",
    "green.contour_r": "contour_r",
    "green.contour_M": "contour_M",
    "green.contour_nmax": "contour_nmax",
    "decompose.j0": "decompose_j0",
    "decompose.times": "decompose_times",
    "stability.nmax": "stability_nmax",
    "stability.generators": "stability_generators",
    "stability.pairs": "stability_pairs",
    "stability.seed": "seed",
    "stability.center": "stability_center",
    "kernels.mu": "kernel_mu",
    "kernels.xmin": "kernel_xmin",
    "kernels.xmax": "kernel_xmax",
    "kernels.n": "kernel_n",
    "output.dir": "output_dir",
    "output.bucket": "bucket",
}

# 環境変数 -> ドット区切りキー
ENV_KEYS: Dict[str, str] = {
    "SHOCKSTAB_OUTPUT_DIR": "output.dir",
    "SHOCKSTAB_ARTIFACT_BUCKET": "output.bucket",
}

NORM_LABELS = ("1", "2", "inf")


@dataclass(frozen=True)
class RunConfig:
    law: str = "burgers"
    law_params: Dict[str, Any] = field(default_factory=dict)
    shock: Dict[str, Any] = field(default_factory=lambda: {"u_minus": 1.0, "u_plus": -1.0})
    scheme: str = "mlf"
    nu: float = 0.5
    D: float = 0.8
    p: int = 1
    q: int = 1
    J_dom: int = 200
    newton_tol: float = 1e-12
    newton_max_iter: int = 50
    phase_shifts: List[float] = field(default_factory=lambda: [-0.1, -0.05, 0.0, 0.05, 0.1])
    disc_radius: float = 0.2
    eigen_rho: float = 0.02
    evans_radius: float = 0.05
    evans_points: int = 64
    green_z: float = 1.03
    green_j0: int = 10
    far_z: float = 1.5
    contour_r: float = 1.05
    contour_M: int = 1024
    contour_nmax: int = 50
    decompose_j0: int = 20
    decompose_times: List[int] = field(default_factory=lambda: [100, 200, 400])
    stability_nmax: int = 400
    stability_generators: List[str] = field(default_factory=lambda: ["delta"])
    stability_center: int = 0
    stability_pairs: List[List[str]] = field(
        default_factory=lambda: [["1", "inf"], ["1", "2"], ["2", "inf"], ["1", "1"], ["2", "2"]]
    )
    seed: int = 20240917
    kernel_mu: List[int] = field(default_factory=lambda: [1, 2])
    kernel_xmin: float = -10.0
    kernel_xmax: float = 10.0
    kernel_n: int = 401
    output_dir: str = "artifacts"
    bucket: str = ""

    @property
    def scheme_params(self) -> Dict[str, Any]:
        return {"nu": self.nu, "D": self.D, "p": self.p, "q": self.q}

    def to_dict(self) -> Dict[str, Any]:
        """TOML と同じセクション構造の辞書。from_dict で元に戻る。"""
        flat = asdict(self)
        nested: Dict[str, Any] = {}
        for key, name in KEY_MAP.items():
            section, _, leaf = key.partition(".")
            if not leaf:
                nested[section] = flat[name]
            else:
                nested.setdefault(section, {})[leaf] = flat[name]
        return nested

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, ensure_ascii=False, indent=2)

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "RunConfig":
        return cls().with_overrides(flatten(data))

    @classmethod
    def from_json(cls, text: str) -> "RunConfig":
        return cls.from_dict(json.loads(text))

    def with_overrides(self, overrides: Mapping[str, Any]) -> "RunConfig":
        """
        ドット区切りキーで値を上書きする。

        Raises
        ------
        ConfigError
            未知のキーが含まれる、または値を型に合わせられない場合
        """
        changes = {}
        for key, value in overrides.items():
            if value is None:
                continue
            if key not in KEY_MAP:
                raise ConfigError(f"unknown config key: {key}", key=key)
            try:
                changes[KEY_MAP[key]] = _coerce(KEY_MAP[key], value)
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"invalid value for {key}: {value!r}", key=key) from exc
        return replace(self, **changes)

    def validate(self) -> "RunConfig":
        """
        名前の解決と数値範囲を確認する。

        Raises
        ------
        ConfigError
            law / scheme 名が解決できない、または数値が範囲外の場合
        """
        try:
            get_law_builder(self.law)
            get_scheme_builder(self.scheme)
        except KeyError as exc:
            raise ConfigError(str(exc.args[0])) from exc

        checks = [
            (self.nu > 0, "scheme.nu must be positive"),
            (self.D > 0, "scheme.D must be positive"),
            (self.p >= 1 and self.q >= 1, "scheme.p and scheme.q must be at least 1"),
            (self.J_dom >= 20, "lattice.J_dom must be at least 20"),
            (0 < self.newton_tol <= 1e-6, "newton.tol must lie in (0, 1e-6]"),
            (self.newton_max_iter >= 1, "newton.max_iter must be positive"),
            (0 < self.disc_radius < 1, "symbol.disc_radius must lie in (0, 1)"),
            (0 < self.eigen_rho < 1, "spectrum.rho must lie in (0, 1)"),
            (0 < self.evans_radius <= self.disc_radius, "evans.radius must lie in (0, symbol.disc_radius]"),
            (self.evans_points >= 16, "evans.n_points must be at least 16"),
            (0 < abs(self.green_z - 1) <= self.disc_radius, "green.z must lie in the punctured disc around 1"),
            (self.far_z > 1, "green.far_z must exceed 1"),
            (self.contour_r > 1, "green.contour_r must exceed 1"),
            (self.contour_M >= 64, "green.contour_M must be at least 64"),
            (self.contour_nmax >= 1, "green.contour_nmax must be positive"),
            (all(n >= 1 for n in self.decompose_times), "decompose.times must be positive"),
            (self.stability_nmax >= 16, "stability.nmax must be at least 16"),
            (abs(self.stability_center) < self.J_dom, "stability.center must lie inside the lattice"),
            (all(g in GENERATORS for g in self.stability_generators),
             f"stability.generators must be drawn from {sorted(GENERATORS)}"),
            (all(1 <= mu <= 4 for mu in self.kernel_mu), "kernels.mu must lie in [1, 4]"),
            (self.kernel_xmin < self.kernel_xmax and self.kernel_n >= 2, "kernels range is empty"),
        ]
        for ok, message in checks:
            if not ok:
                raise ConfigError(message)
        for pair in self.stability_pairs:
            if len(pair) != 2 or any(r not in NORM_LABELS for r in pair):
                raise ConfigError(f"stability.pairs entries must be two of {NORM_LABELS}, got {pair}")
            if _norm_value(pair[0]) > _norm_value(pair[1]):
                raise ConfigError(f"stability pair {pair} needs r1 <= r2")
        return self


def _norm_value(label: str) -> float:
    return math.inf if label == "inf" else float(label)


def _coerce(name: str, value: Any) -> Any:
    """フィールドの既定値の型に合わせる (CLI 文字列や TOML の整数を float へ)。"""
    default = next(f for f in fields(RunConfig) if f.name == name)
    sample = None if default.default is MISSING else default.default
    if name == "stability_pairs":
        return [[str(r) for r in pair] for pair in value]
    if name in ("phase_shifts",):
        return [float(v) for v in value]
    if name in ("decompose_times", "kernel_mu"):
        return [int(v) for v in value]
    if name == "stability_generators":
        return [str(v) for v in ([value] if isinstance(value, str) else value)]
    if isinstance(sample, bool):
        return str(value).lower() in {"1", "true", "yes"}
    if isinstance(sample, int):
        return int(value)
    if isinstance(sample, float):
        return float(value)
    if isinstance(sample, str):
        return str(value)
    return dict(value) if isinstance(value, Mapping) else value


def flatten(data: Mapping[str, Any]) -> Dict[str, Any]:
    """セクション付き辞書をドット区切りキーに平坦化する。law.params と shock は値ごと扱う。"""
    flat: Dict[str, Any] = {}
    for section, body in data.items():
        if section in KEY_MAP:
            flat[section] = body
            continue
        if not isinstance(body, Mapping):
            raise ConfigError(f"config section [{section}] must be a table", section=section)
        for leaf, value in body.items():
            flat[f"{section}.{leaf}"] = value
    return flat


def env_overrides() -> Dict[str, Any]:
    return {key: os.getenv(env) for env, key in ENV_KEYS.items() if os.getenv(env)}


def load_config(path: Optional[Path] = None, overrides: Optional[Mapping[str, Any]] = None) -> RunConfig:
    """
    設定を読み込み、環境変数と CLI フラグで上書きして検証する。

    Parameters
    ----------
    path: Optional[Path]
        TOML ファイル。存在しない場合は presets/<path>.toml を探す
    overrides: Optional[Mapping[str, Any]]
        ドット区切りキーの上書き値（CLI フラグ）

    Returns
    -------
    RunConfig
        検証済みの設定

    Raises
    ------
    ConfigError
        ファイルが見つからない、解析できない、または値が不正な場合
    """
    config = RunConfig()
    if path is not None:
        config = RunConfig.from_dict(read_toml(resolve_config_path(path)))
    config = config.with_overrides(env_overrides())
    config = config.with_overrides(overrides or {})
    return config.validate()


def resolve_config_path(path: Path) -> Path:
    path = Path(path)
    if path.exists():
        return path
    preset = PRESET_DIR / (path.name if path.suffix == ".toml" else f"{path.name}.toml")
    if preset.exists():
        return preset
    raise ConfigError(f"config file not found: {path}", path=str(path))


def read_toml(path: Path) -> Dict[str, Any]:
    try:
        with open(path, "rb") as handle:
            return tomllib.load(handle)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}", path=str(path)) from exc
