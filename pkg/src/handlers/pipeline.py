import hashlib
import json
import logging
import traceback
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional

from config.run_config import RunConfig, load_config
from handlers.stages import FULL_RUN, HYPOTHESES, STAGE_ORDER, PipelineContext, StageResult, get_stage, stages_for
from shockstab.errors import ConfigError, ShockStabError
from storage.artifacts import ArtifactStore

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_HYPOTHESIS = 2
EXIT_NUMERICAL = 3


@dataclass
class PipelineRun:
  """
  1 回の実行の結果。manifest は時刻を含まず、同じ設定からは同じ内容になる。
  """

  config: RunConfig
  target: str
  stages: List[str] = field(default_factory=list)
  results: Dict[str, StageResult] = field(default_factory=dict)
  stage_hashes: Dict[str, str] = field(default_factory=dict)
  ledger: Dict[str, Optional[bool]] = field(default_factory=lambda: {h: None for h in HYPOTHESES})
  conditions: Dict[str, Optional[bool]] = field(default_factory=dict)
  failures: List[Dict[str, str]] = field(default_factory=list)
  error: Optional[Dict[str, Any]] = None
  exit_code: int = EXIT_OK

  def manifest(self) -> Dict[str, Any]:
    return {
        "target": self.target,
        "stages": self.stages,
        "completed": list(self.results),
        "stage_hashes": self.stage_hashes,
        "hypotheses": self.ledger,
        "conditions": self.conditions,
        "failures": self.failures,
        "error": self.error,
        "exit_code": self.exit_code,
        "config": self.config.to_dict(),
    }


def _stage_hash(store: ArtifactStore, stage: str) -> str:
  files = store.stage_files(stage)
  body = "\n".join(f"{name}:{files[name]}" for name in sorted(files))
  return hashlib.sha256(body.encode("utf-8")).hexdigest()


def _record_error(run: PipelineRun, stage: str, exc: ShockStabError) -> None:
  report = exc.to_report()
  report["stage"] = stage
  run.error = report
  if exc.hypothesis in run.ledger:
    run.ledger[exc.hypothesis] = False
  elif exc.hypothesis:
    run.conditions[exc.hypothesis] = False
  run.exit_code = exc.exit_code


# --------------------------------------------------------------------------- #
# Pipeline
# --------------------------------------------------------------------------- #

def run_pipeline(
    config: RunConfig,
    target: str = FULL_RUN,
    options: Optional[Dict[str, Any]] = None,
    output_dir: Optional[Path] = None,
) -> PipelineRun:
  """
  target とその前提ステージを順に実行し、各ステージの summary.json と表を書き出す。

  仮説違反 (例外) は終了コード 2、数値的失敗は 3。例外なく終わっても
  検査項目が 1 つでも失敗すれば 3 とする。
  """

  if target != FULL_RUN and target not in STAGE_ORDER:
    raise ConfigError(f"unknown stage: {target}", target=target)
  order = stages_for(target)
  store = ArtifactStore(root=Path(output_dir or config.output_dir), bucket=config.bucket or None)
  run = PipelineRun(config=config, target=target, stages=order)
  ctx = PipelineContext(config=config, options=dict(options or {}))
  store.write_json("", "config", config.to_dict())

  for name in order:
    logger.info("[Pipeline] stage %s", name)
    try:
      result = get_stage(name)(ctx)
    except ShockStabError as exc:
      logger.error("[Pipeline] %s failed: %s", name, exc)
      _record_error(run, name, exc)
      store.write_json(name, "error", run.error)
      run.stage_hashes[name] = _stage_hash(store, name)
      break
    except Exception as exc:
      logger.error("[Pipeline] unexpected_error in %s: %s\n%s", name, exc, traceback.format_exc())
      run.error = {"error": "unexpected_error", "message": str(exc), "stage": name}
      run.exit_code = EXIT_NUMERICAL
      store.write_json(name, "error", run.error)
      run.stage_hashes[name] = _stage_hash(store, name)
      break

    run.results[name] = result
    for hypothesis, ok in result.hypotheses.items():
      run.ledger[hypothesis] = ok
    store.write_json(name, "summary", {**result.summary, "checks": result.checks})
    for table, rows in result.tables.items():
      store.write_csv(name, table, rows)
    run.stage_hashes[name] = _stage_hash(store, name)
    for check in result.failures:
      run.failures.append({"stage": name, "check": check})
      logger.warning("[Pipeline] %s: check %s failed", name, check)

  if run.exit_code == EXIT_OK and run.failures:
    run.exit_code = EXIT_NUMERICAL
  store.write_json("", "manifest", run.manifest())
  logger.info("[Pipeline] finished %s with exit code %d", target, run.exit_code)
  return run


# --------------------------------------------------------------------------- #
# Lambda entry point
# --------------------------------------------------------------------------- #

def lambda_handler(event: Dict[str, Any], context: Any) -> Dict[str, Any]:
  """
  event:
    {"config": "<preset 名または TOML パス>", "overrides": {"scheme.nu": 0.5, ...},
     "target": "run", "options": {...}}
    API Gateway 経由なら同じ内容を JSON 文字列として body に持つ。
  artifact は /tmp 以下に書き、output.bucket (SHOCKSTAB_ARTIFACT_BUCKET) があれば S3 にも置く。
  """

  logger.info("[Pipeline] lambda handler started")
  try:
    if isinstance(event.get("body"), str):
      event = json.loads(event["body"])
    overrides = {"output.dir": "/tmp/shockstab", **event.get("overrides", {})}
    config = load_config(event.get("config"), overrides)
    run = run_pipeline(config, target=event.get("target", FULL_RUN), options=event.get("options"))
  except ShockStabError as exc:
    logger.error("[Pipeline] invalid_event: %s", exc)
    return {
        "statusCode": 400,
        "body": json.dumps({"error": exc.to_report()}),
    }
  except (KeyError, ValueError, TypeError, json.JSONDecodeError) as exc:
    logger.error("[Pipeline] invalid_event: %s", exc)
    return {
        "statusCode": 400,
        "body": json.dumps({"error": {"error": type(exc).__name__, "message": f"invalid_event: {exc}"}}),
    }
  except Exception as exc:
    logger.exception("[Pipeline] unexpected_error: %s", exc)
    return {
        "statusCode": 500,
        "body": json.dumps({"error": {"error": type(exc).__name__, "message": f"unexpected_error: {exc}"}}),
    }

  status = 200 if run.exit_code == EXIT_OK else 422
  return {
      "statusCode": status,
      "body": json.dumps(
          {
              "exit_code": run.exit_code,
              "hypotheses": run.ledger,
              "failures": run.failures,
              "stage_hashes": run.stage_hashes,
              "error": run.error,
          },
          default=str,
      ),
  }
