"""Canonical JSON reports: sorted keys, shortest round-trip floats, no NaN.

Identical in-memory documents serialize to identical bytes, so report diffs
are meaningful.
"""

from __future__ import annotations

import json
import math

from .errors import ReportIOError


def _validate_finite(obj, path="$"):
    if isinstance(obj, float) and not math.isfinite(obj):
        raise ReportIOError(f"non-finite value at {path}")
    if isinstance(obj, dict):
        for key, val in obj.items():
            if not isinstance(key, str):
                raise ReportIOError(f"non-string key at {path}")
            _validate_finite(val, f"{path}.{key}")
    elif isinstance(obj, (list, tuple)):
        for i, val in enumerate(obj):
            _validate_finite(val, f"{path}[{i}]")


def canonical_json(obj) -> str:
    """Deterministic rendering; floats use repr (shortest round-trip form)."""
    _validate_finite(obj)
    try:
        return json.dumps(obj, sort_keys=True, indent=2, allow_nan=False) + "\n"
    except (TypeError, ValueError) as exc:
        raise ReportIOError(f"cannot serialize report: {exc}") from exc


def emit_report(report: dict, path: str):
    text = canonical_json(report)
    try:
        with open(path, "w") as fh:
            fh.write(text)
    except OSError as exc:
        raise ReportIOError(f"cannot write {path}: {exc}") from exc


def read_report(path: str) -> dict:
    try:
        with open(path) as fh:
            return json.load(fh)
    except OSError as exc:
        raise ReportIOError(f"cannot read {path}: {exc}") from exc
