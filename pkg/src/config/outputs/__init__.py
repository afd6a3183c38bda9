"""
出力ファイルの列設定。
"""

from .headers import CSV_EXPORT_CONFIG
