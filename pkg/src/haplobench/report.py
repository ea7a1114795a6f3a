"""Machine-readable JSON reports.

Reports are canonical: keys sorted, floats rounded to 12 significant
digits, non-finite floats spelled as the strings ``"inf"``, ``"-inf"`` and
``"nan"``.  The wall-clock time lives only in the top-level ``timestamp``
field so two runs can be compared with that one field removed.
"""

from __future__ import annotations

import datetime as _dt
import json
import math
from pathlib import Path

import numpy as np

SCHEMA_VERSION = 1
SIG_DIGITS = 12
TIMESTAMP_FIELD = "timestamp"


def canonical_float(x: float):
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    r = float(f"{x:.{SIG_DIGITS}g}")
    return 0.0 if r == 0 else r


def canonicalize(obj):
    """Plain JSON-ready copy of ``obj`` with every float in canonical form."""
    if isinstance(obj, dict):
        return {str(k): canonicalize(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [canonicalize(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [canonicalize(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return canonical_float(obj)
    if obj is None or isinstance(obj, str):
        return obj
    if hasattr(obj, "to_dict"):
        return canonicalize(obj.to_dict())
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def make_report(command: str, argv: list[str], fingerprint: str | None, results: dict, exit_code: int) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "command": {"name": command, "argv": list(argv)},
        "inputs_fingerprint": fingerprint,
        "results": results,
        "exit_code": exit_code,
        TIMESTAMP_FIELD: _dt.datetime.now(_dt.timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ"),
    }


def dumps_report(doc: dict) -> str:
    return json.dumps(canonicalize(doc), sort_keys=True, indent=2, ensure_ascii=True, allow_nan=False) + "\n"


def write_report(doc: dict, path) -> None:
    Path(path).write_text(dumps_report(doc), encoding="utf-8")


def read_report(path) -> dict:
    return json.loads(Path(path).read_text(encoding="utf-8"))


def without_timestamp(doc: dict) -> dict:
    return {k: v for k, v in doc.items() if k != TIMESTAMP_FIELD}


__all__ = ["SCHEMA_VERSION", "canonicalize", "dumps_report", "make_report", "read_report", "without_timestamp", "write_report"]
