import csv
import hashlib
import io
import json
import math
import os
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional

import boto3
import numpy as np

from config.outputs.headers import CSV_EXPORT_CONFIG

USE_LOCAL_S3 = os.getenv("USE_LOCAL_S3", "").lower() in {"1", "true", "yes"}
LOCAL_S3_DIR = Path(os.getenv("LOCAL_S3_DIR", "/tmp/local_s3"))
ARTIFACT_PREFIX = os.getenv("SHOCKSTAB_ARTIFACT_PREFIX", "shockstab")


@lru_cache(maxsize=1)
def _s3_client() -> Any:
  return boto3.client("s3")


# --------------------------------------------------------------------------- #
# Serialization helpers
# --------------------------------------------------------------------------- #

def to_jsonable(value: Any) -> Any:
  """
  numpy / 複素数を JSON に載る型へ変換する。

  複素数は {"re": .., "im": ..}、非有限の実数は "inf" / "-inf" / "nan" の文字列にする。
  """

  if isinstance(value, dict):
    return {str(k): to_jsonable(v) for k, v in value.items()}
  if isinstance(value, (list, tuple)):
    return [to_jsonable(v) for v in value]
  if isinstance(value, np.ndarray):
    return [to_jsonable(v) for v in value.tolist()]
  if isinstance(value, (bool, np.bool_)):
    return bool(value)
  if isinstance(value, (int, np.integer)):
    return int(value)
  if isinstance(value, (complex, np.complexfloating)):
    return {"re": _finite(complex(value).real), "im": _finite(complex(value).imag)}
  if isinstance(value, (float, np.floating)):
    return _finite(float(value))
  if isinstance(value, Path):
    return str(value)
  return value


def _finite(number: float) -> Any:
  if math.isfinite(number):
    return number
  if math.isnan(number):
    return "nan"
  return "inf" if number > 0 else "-inf"


def dump_json(data: Any) -> str:
  # 同じ入力からは同じバイト列になるようキーを並べる
  return json.dumps(to_jsonable(data), sort_keys=True, ensure_ascii=False, indent=2, allow_nan=False)


def expand_complex(row: Dict[str, Any]) -> Dict[str, Any]:
  """複素数の列を <名前>_re, <名前>_im に分ける。"""

  out: Dict[str, Any] = {}
  for key, value in row.items():
    if isinstance(value, (complex, np.complexfloating)):
      out[f"{key}_re"] = complex(value).real
      out[f"{key}_im"] = complex(value).imag
    elif isinstance(value, np.generic):
      out[key] = value.item()
    else:
      out[key] = value
  return out


def to_csv(table: str, rows: Iterable[Dict[str, Any]]) -> str:
  rows = [expand_complex(row) for row in rows]
  if not rows:
    return ""

  config = CSV_EXPORT_CONFIG.get(table, {})
  field_order = config.get("field_order")
  if field_order:
    fieldnames = [name for name in field_order if name in rows[0]]
  else:
    fieldnames = list(rows[0].keys())

  output = io.StringIO()
  writer = csv.DictWriter(output, fieldnames=fieldnames, extrasaction="ignore", lineterminator="\n")
  writer.writeheader()
  for row in rows:
    writer.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})
  return output.getvalue()


def digest(body: bytes) -> str:
  return hashlib.sha256(body).hexdigest()


# --------------------------------------------------------------------------- #
# Artifact store
# --------------------------------------------------------------------------- #

@dataclass
class ArtifactStore:
  """
  artifact ディレクトリ <root>/<stage>/<name> への書き込み。

  bucket を指定すると同じキー構成で S3 (USE_LOCAL_S3 のときはローカルの擬似 S3) にも置く。
  書いたファイルごとの sha256 を files に記録する。
  """

  root: Path
  bucket: Optional[str] = None
  run_id: str = "latest"
  files: Dict[str, str] = field(default_factory=dict)

  def __post_init__(self) -> None:
    self.root = Path(self.root)
    self.root.mkdir(parents=True, exist_ok=True)

  def write_json(self, stage: str, name: str, data: Any) -> str:
    return self._write(stage, f"{name}.json", dump_json(data).encode("utf-8"), "application/json")

  def write_csv(self, stage: str, name: str, rows: List[Dict[str, Any]]) -> Optional[str]:
    content = to_csv(f"{stage}/{name}", rows)
    if not content:
      return None
    return self._write(stage, f"{name}.csv", content.encode("utf-8"), "text/csv; charset=utf-8")

  def stage_files(self, stage: str) -> Dict[str, str]:
    prefix = f"{stage}/"
    return {k: v for k, v in self.files.items() if k.startswith(prefix)}

  def _write(self, stage: str, filename: str, body: bytes, content_type: str) -> str:
    relative = f"{stage}/{filename}" if stage else filename
    destination = self.root / relative
    destination.parent.mkdir(parents=True, exist_ok=True)
    destination.write_bytes(body)
    self.files[relative] = digest(body)
    if self.bucket:
      _upload(body, self.bucket, f"{ARTIFACT_PREFIX}/{self.run_id}/{relative}", content_type)
    return self.files[relative]


def _upload(body: bytes, bucket: str, key: str, content_type: str) -> None:
  if USE_LOCAL_S3:
    destination = LOCAL_S3_DIR / bucket / key
    destination.parent.mkdir(parents=True, exist_ok=True)
    destination.write_bytes(body)
    return

  _s3_client().put_object(
      Bucket=bucket,
      Key=key,
      Body=body,
      ContentType=content_type,
  )
