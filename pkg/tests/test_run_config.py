from pathlib import Path

import pytest

from config.run_config import RunConfig, flatten, load_config
from shockstab.errors import ConfigError


def test_defaults_are_reference_case():
    config = load_config()
    assert (config.law, config.scheme) == ("burgers", "mlf")
    assert config.scheme_params == {"nu": 0.5, "D": 0.8, "p": 1, "q": 1}
    assert config.shock == {"u_minus": 1.0, "u_plus": -1.0}


def test_bundled_presets():
    burgers = load_config(Path("burgers-mlf"))
    assert burgers.output_dir == "artifacts/burgers-mlf"
    assert burgers.stability_pairs[0] == ["1", "inf"]
    shallow = load_config(Path("shallow-water-mlf.toml"))
    assert shallow.law == "shallow-water"
    assert shallow.law_params == {"g": 1.0}
    assert shallow.J_dom == 300


def test_precedence(tmp_path, monkeypatch):
    path = tmp_path / "run.toml"
    path.write_text('[scheme]\nnu = 0.4\n\n[output]\ndir = "from-file"\n', encoding="utf-8")
    monkeypatch.setenv("SHOCKSTAB_OUTPUT_DIR", "from-env")
    config = load_config(path)
    assert config.nu == 0.4
    assert config.D == 0.8
    assert config.output_dir == "from-env"
    config = load_config(path, {"output.dir": "from-flag", "scheme.nu": None})
    assert config.output_dir == "from-flag"
    assert config.nu == 0.4


def test_values_are_coerced():
    config = RunConfig().with_overrides({"scheme.nu": "0.7", "lattice.J_dom": 150.0, "stability.generators": "random"})
    assert config.nu == 0.7
    assert config.J_dom == 150 and isinstance(config.J_dom, int)
    assert config.stability_generators == ["random"]


def test_dict_round_trip():
    config = RunConfig().with_overrides({"law.params": {"g": 2.0}, "decompose.times": [10, 20]})
    assert config.to_dict()["scheme"]["nu"] == 0.5
    assert RunConfig.from_dict(config.to_dict()) == config
    assert RunConfig.from_json(config.to_json()) == config


def test_unknown_key_is_rejected():
    with pytest.raises(ConfigError):
        RunConfig().with_overrides({"scheme.cfl": 0.5})
    with pytest.raises(ConfigError):
        flatten({"scheme": 0.5})


@pytest.mark.parametrize(
    "overrides",
    [
        {"law.name": "euler"},
        {"scheme.name": "upwind"},
        {"scheme.nu": -0.5},
        {"green.z": 1.0},
        {"evans.radius": 0.5},
        {"stability.pairs": [["inf", "1"]]},
        {"stability.pairs": [["1", "3"]]},
        {"kernels.mu": [5]},
    ],
)
def test_invalid_values(overrides):
    with pytest.raises(ConfigError) as info:
        load_config(overrides=overrides)
    assert info.value.exit_code == 2


def test_missing_or_broken_file(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "absent.toml")
    broken = tmp_path / "broken.toml"
    broken.write_text("[scheme\nnu = 0.5\n", encoding="utf-8")
    with pytest.raises(ConfigError):
        load_config(broken)


def test_perturbation_center():
    config = load_config(overrides={"stability.center": "-30", "stability.generators": ["delta", "box"]})
    assert config.stability_center == -30
    assert config.to_dict()["stability"]["center"] == -30
    with pytest.raises(ConfigError):
        load_config(overrides={"stability.center": 500})
    with pytest.raises(ConfigError):
        load_config(overrides={"stability.generators": "gaussian"})


@pytest.mark.parametrize(
    "overrides",
    [
        {"scheme.nu": "fast"},
        {"lattice.J_dom": "two hundred"},
        {"decompose.times": [100, None]},
        {"stability.pairs": 5},
    ],
)
def test_uncoercible_values(overrides):
    with pytest.raises(ConfigError) as info:
        load_config(overrides=overrides)
    assert info.value.exit_code == 2
    assert "invalid value" in str(info.value)
