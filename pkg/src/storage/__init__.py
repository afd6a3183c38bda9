"""
artifact の書き出し (ローカルと S3)。
"""

from .artifacts import ArtifactStore, digest, dump_json, to_csv, to_jsonable
