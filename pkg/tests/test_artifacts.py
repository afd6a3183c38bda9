import json

import numpy as np
import pytest

from storage import artifacts
from storage.artifacts import ArtifactStore, digest, dump_json, expand_complex, to_csv, to_jsonable


def test_complex_and_nonfinite_values():
    data = to_jsonable({"z": 1.5 - 2j, "x": np.float64(np.inf), "y": float("nan"), 3: np.arange(2)})
    assert data == {"z": {"re": 1.5, "im": -2.0}, "x": "inf", "y": "nan", "3": [0, 1]}
    assert to_jsonable(np.bool_(True)) is True


def test_json_is_deterministic():
    first = dump_json({"b": 1, "a": [1j, -np.inf]})
    second = dump_json({"a": [1j, -np.inf], "b": 1})
    assert first == second
    assert json.loads(first)["a"][1] == "-inf"


def test_complex_columns_are_split():
    row = expand_complex({"n": np.int64(3), "c": 2 + 1j})
    assert row == {"n": 3, "c_re": 2.0, "c_im": 1.0}


def test_csv_field_order():
    rows = [{"m": 0.5, "n": 1, "generator": "delta", "r1": "1", "r2": "inf", "norm": 1.0, "c": 0.25 + 0j, "extra": 0}]
    text = to_csv("stability/decay", rows)
    header, line = text.splitlines()
    assert header == "generator,r1,r2,n,m,norm,c_re,c_im"
    assert line == "delta,1,inf,1,0.5,1.0,0.25,0.0"
    assert to_csv("stability/decay", []) == ""
    assert to_csv("other/table", [{"b": 1, "a": 2}]).splitlines()[0] == "b,a"


def test_store_records_hashes(tmp_path):
    store = ArtifactStore(root=tmp_path)
    value = store.write_json("symbol", "summary", {"mu": 1})
    body = (tmp_path / "symbol" / "summary.json").read_bytes()
    assert value == digest(body)
    assert store.write_csv("symbol", "roots", []) is None
    store.write_csv("symbol", "roots", [{"z": 1.0}])
    assert sorted(store.stage_files("symbol")) == ["symbol/roots.csv", "symbol/summary.json"]


def test_local_bucket_mirror(tmp_path, monkeypatch):
    monkeypatch.setattr(artifacts, "USE_LOCAL_S3", True)
    monkeypatch.setattr(artifacts, "LOCAL_S3_DIR", tmp_path / "s3")
    monkeypatch.setattr(artifacts, "ARTIFACT_PREFIX", "shockstab")
    store = ArtifactStore(root=tmp_path / "out", bucket="results", run_id="r1")
    store.write_json("", "manifest", {"exit_code": 0})
    mirrored = tmp_path / "s3" / "results" / "shockstab" / "r1" / "manifest.json"
    assert mirrored.read_bytes() == (tmp_path / "out" / "manifest.json").read_bytes()


def test_upload_uses_s3_client(tmp_path, monkeypatch):
    calls = []

    class FakeClient:
        def put_object(self, **kwargs):
            calls.append(kwargs)

    monkeypatch.setattr(artifacts, "USE_LOCAL_S3", False)
    monkeypatch.setattr(artifacts, "_s3_client", lambda: FakeClient())
    store = ArtifactStore(root=tmp_path, bucket="results")
    store.write_csv("kernels", "samples", [{"x": 0.0}])
    assert calls[0]["Bucket"] == "results"
    assert calls[0]["Key"].endswith("latest/kernels/samples.csv")
    assert calls[0]["ContentType"] == "text/csv; charset=utf-8"


@pytest.mark.parametrize("value", [1, 2.5, "text", None])
def test_plain_values_pass_through(value):
    assert to_jsonable(value) == value
