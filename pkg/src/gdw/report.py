"""
JSON reports with stable key order and 17-significant-digit floats.

The standard ``json`` module prints the shortest round-trip repr, so floats
are emitted by hand. Non-finite floats become ``null``.
"""

from __future__ import annotations

import json
import math
import sys
import time
from pathlib import Path
from typing import Any, Optional, Union

import numpy as np

from . import __version__


def _encode(obj: Any, indent: int, level: int) -> str:
    pad = "\n" + " " * (indent * (level + 1)) if indent else ""
    end = "\n" + " " * (indent * level) if indent else ""
    sep = "," + pad if indent else ","
    if obj is None or obj is True or obj is False:
        return json.dumps(obj)
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if not math.isfinite(x):
            return "null"
        s = "%.17g" % x
        # keep floats recognisable as floats after a round trip
        if not any(c in s for c in ".en"):
            s += ".0"
        return s
    if isinstance(obj, str):
        return json.dumps(obj, ensure_ascii=False)
    if isinstance(obj, Path):
        return json.dumps(str(obj))
    if isinstance(obj, np.ndarray):
        return _encode(obj.tolist(), indent, level)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [json.dumps(str(k)) + ": " + _encode(v, indent, level + 1) for k, v in obj.items()]
        return "{" + pad + sep.join(items) + end + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        return "[" + pad + sep.join(_encode(v, indent, level + 1) for v in obj) + end + "]"
    if hasattr(obj, "to_dict"):
        return _encode(obj.to_dict(), indent, level)
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def dumps(obj: Any, indent: int = 2) -> str:
    return _encode(obj, indent, 0)


class Report:
    """Command report: parameters echo, metrics, per-seed rows and timings."""

    def __init__(self, command: str, parameters: Optional[dict] = None):
        self.command = command
        self.parameters = dict(parameters or {})
        self.metrics: dict = {}
        self.per_seed: list = []
        self.timings: dict = {}
        self._t0 = time.perf_counter()

    def time(self, name: str, seconds: float) -> None:
        self.timings[name] = seconds

    def to_dict(self) -> dict:
        timings = dict(self.timings)
        timings.setdefault("total_seconds", time.perf_counter() - self._t0)
        return {
            "command": self.command,
            "version": __version__,
            "parameters": self.parameters,
            "metrics": self.metrics,
            "per_seed": self.per_seed,
            "timings": timings,
        }

    def emit(self, path: Union[str, Path, None] = None) -> str:
        text = dumps(self.to_dict()) + "\n"
        if path is None or str(path) == "-":
            sys.stdout.write(text)
        else:
            Path(path).write_text(text, encoding="utf-8")
        return text
