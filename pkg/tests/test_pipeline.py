import json

import pytest

from config.run_config import load_config
from handlers.cli import build_parser, main, split_arguments
from handlers.pipeline import lambda_handler, run_pipeline
from handlers.stages import stages_for
from shockstab.errors import ConfigError


def test_stage_prerequisites():
    assert stages_for("symbol") == ["scheme-check", "symbol"]
    assert stages_for("decompose") == [
        "scheme-check", "symbol", "profile", "spectrum", "evans", "scattering", "green-temporal", "decompose",
    ]
    assert stages_for("run")[-1] == "stability"


def test_unknown_target(tmp_path):
    with pytest.raises(ConfigError):
        run_pipeline(load_config(), target="plot", output_dir=tmp_path)


def test_symbol_stage_passes(tmp_path):
    run = run_pipeline(load_config(), target="symbol", output_dir=tmp_path)
    assert run.exit_code == 0
    assert run.ledger["H:F"] is True and run.ledger["H:Lax"] is True
    assert run.ledger["H:Evans"] is None
    manifest = json.loads((tmp_path / "manifest.json").read_text(encoding="utf-8"))
    assert manifest["completed"] == ["scheme-check", "symbol"]
    assert set(manifest["stage_hashes"]) == {"scheme-check", "symbol"}
    assert (tmp_path / "symbol" / "roots.csv").exists()


def test_manifest_is_reproducible(tmp_path):
    first = run_pipeline(load_config(), target="scheme-check", output_dir=tmp_path / "a")
    second = run_pipeline(load_config(), target="scheme-check", output_dir=tmp_path / "b")
    assert first.stage_hashes == second.stage_hashes


def test_cfl_violation_is_a_hypothesis_failure(tmp_path):
    run = run_pipeline(load_config(overrides={"scheme.nu": 3.0}), target="symbol", output_dir=tmp_path)
    assert run.exit_code == 2
    assert run.conditions == {"cond:CFL": False}
    assert run.error["stage"] == "scheme-check"
    assert (tmp_path / "scheme-check" / "error.json").exists()
    assert "symbol" not in run.results


def test_vanishing_diffusion_fails_symbol(tmp_path):
    # D = ν²λ² で β = 0
    run = run_pipeline(load_config(overrides={"scheme.D": 0.25}), target="symbol", output_dir=tmp_path)
    assert run.exit_code == 2
    assert run.ledger["H:F"] is False
    assert run.error["stage"] == "symbol"


def test_cli_arguments():
    args = build_parser().parse_args(["stability", "--nu", "0.4", "--r1", "1", "--r2", "inf", "--nmax", "100"])
    overrides, options = split_arguments(args)
    assert overrides == {"scheme.nu": 0.4, "stability.nmax": 100}
    assert options == {"r1": "1", "r2": "inf", "nmax": 100}
    args = build_parser().parse_args(["evans", "--circle", "0.04", "48"])
    overrides, _ = split_arguments(args)
    assert overrides == {"evans.radius": 0.04, "evans.n_points": 48}


def test_cli_exit_codes(tmp_path, capsys):
    assert main(["scheme-check", "--out", str(tmp_path / "ok")]) == 0
    summary = json.loads(capsys.readouterr().out)
    assert summary["checks"] == {"cfl": True, "consistency": True}
    assert main(["scheme-check", "--nu", "3", "--out", str(tmp_path / "cfl")]) == 2
    manifest = json.loads(capsys.readouterr().out)
    assert manifest["conditions"] == {"cond:CFL": False}
    assert main(["symbol", "--law", "euler", "--out", str(tmp_path / "bad")]) == 2
    assert json.loads(capsys.readouterr().out)["error"] == "ConfigError"


def test_lambda_handler(tmp_path):
    response = lambda_handler({"overrides": {"scheme.cfl": 1}}, None)
    assert response["statusCode"] == 400
    assert json.loads(response["body"])["error"]["error"] == "ConfigError"
    response = lambda_handler({"target": "scheme-check", "overrides": {"output.dir": str(tmp_path)}}, None)
    assert response["statusCode"] == 200
    assert json.loads(response["body"])["hypotheses"]["H:Lax"] is True
    response = lambda_handler(
        {"target": "scheme-check", "overrides": {"output.dir": str(tmp_path), "scheme.nu": 3.0}}, None,
    )
    assert response["statusCode"] == 422


@pytest.mark.slow
def test_full_run_on_reference_case(tmp_path):
    run = run_pipeline(load_config(overrides={"stability.nmax": 160}), output_dir=tmp_path)
    assert run.error is None
    assert run.failures == []
    assert run.exit_code == 0
    assert all(run.ledger.values())
    assert list(run.results) == run.stages
    assert (tmp_path / "stability" / "decay.csv").exists()


@pytest.mark.slow
def test_shallow_water_through_decompose(tmp_path):
    run = run_pipeline(load_config("shallow-water-mlf"), target="decompose", output_dir=tmp_path)
    assert run.error is None
    assert run.ledger["H:Evans"] is True and run.ledger["H:spec"] is True
    curves = run.results["symbol"].summary["curves"]
    assert curves["radius"] < 1e-3
    assert run.results["evans"].summary["radius"] <= 0.5 * curves["radius"]
    assert run.results["evans"].checks["V_alignment"]
    constants = run.results["decompose"].summary["constants"]["constants"]
    crossing = [c for c in constants if c["kind"][0] in "RT"]
    assert crossing
    assert all(c["gap"] is not None and c["gap"] < 0.05 for c in crossing)


def test_lambda_handler_rejects_malformed_events(tmp_path, monkeypatch):
    response = lambda_handler({"overrides": {"scheme.nu": "fast"}}, None)
    assert response["statusCode"] == 400
    assert json.loads(response["body"])["error"]["error"] == "ConfigError"
    response = lambda_handler({"body": "{not json"}, None)
    assert response["statusCode"] == 400
    assert json.loads(response["body"])["error"]["error"] == "JSONDecodeError"
    response = lambda_handler({"overrides": ["scheme.nu"]}, None)
    assert response["statusCode"] == 400
    body = json.dumps({"target": "scheme-check", "overrides": {"output.dir": str(tmp_path)}})
    assert lambda_handler({"body": body}, None)["statusCode"] == 200

    def broken_pipeline(*args, **kwargs):
        raise RuntimeError("disk full")

    monkeypatch.setattr("handlers.pipeline.run_pipeline", broken_pipeline)
    response = lambda_handler({"target": "scheme-check"}, None)
    assert response["statusCode"] == 500
    assert "unexpected_error: disk full" in json.loads(response["body"])["error"]["message"]


@pytest.mark.slow
def test_decompose_reports_wave_arrival_and_decay_rate(tmp_path):
    run = run_pipeline(load_config(), target="decompose", output_dir=tmp_path)
    assert run.exit_code == 0, run.error or run.failures
    result = run.results["decompose"]
    assert result.checks["excited_matches_residue"]
    assert result.checks["activation_window"]
    assert result.checks["long_time_exponent"]
    (window,) = result.summary["activation_windows"]
    assert window["arrival"] == pytest.approx(40.0)
    assert window["n_lo"] <= 40 <= window["n_hi"]
    exponent = result.summary["long_time_exponent"]
    assert exponent["fit"]["exponent"] == pytest.approx(-0.5, abs=0.1)
    assert exponent["ns"][0] == 50 and exponent["ns"][-1] == 400
