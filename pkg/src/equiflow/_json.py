"""Deterministic JSON writing.

Every JSON artifact is serialized through here so that identical data produces
byte-identical files: floats are rendered with 12 significant digits, keys keep
insertion order, and non-finite numbers are rejected (callers encode them
explicitly, e.g. as the string "inf").
"""

from __future__ import annotations

import json
import math
from typing import Any

FORMAT_VERSION = "equiflow/1"


def format_float(x: float, spec: str = ".12g") -> str:
    if math.isnan(x) or math.isinf(x):
        raise ValueError("non-finite float cannot be serialized: %r" % x)
    if x == 0.0:
        return "0"  # normalizes -0.0
    return format(x, spec)


def _emit(obj: Any, out: list, indent: int, level: int, float_spec: str) -> None:
    pad = " " * (indent * level)
    pad_in = " " * (indent * (level + 1))
    if obj is None:
        out.append("null")
    elif obj is True:
        out.append("true")
    elif obj is False:
        out.append("false")
    elif isinstance(obj, int):
        out.append(str(obj))
    elif isinstance(obj, float):
        out.append(format_float(obj, float_spec))
    elif isinstance(obj, str):
        out.append(json.dumps(obj, ensure_ascii=False))
    elif isinstance(obj, dict):
        if not obj:
            out.append("{}")
            return
        out.append("{\n")
        for i, (k, v) in enumerate(obj.items()):
            if not isinstance(k, str):
                raise TypeError("JSON object keys must be strings, got %r" % (k,))
            out.append(pad_in)
            out.append(json.dumps(k, ensure_ascii=False))
            out.append(": ")
            _emit(v, out, indent, level + 1, float_spec)
            out.append(",\n" if i + 1 < len(obj) else "\n")
        out.append(pad + "}")
    elif isinstance(obj, (list, tuple)):
        if not obj:
            out.append("[]")
            return
        out.append("[\n")
        for i, v in enumerate(obj):
            out.append(pad_in)
            _emit(v, out, indent, level + 1, float_spec)
            out.append(",\n" if i + 1 < len(obj) else "\n")
        out.append(pad + "]")
    else:
        raise TypeError("cannot serialize %r" % type(obj))


def dumps(obj: Any, indent: int = 2, float_spec: str = ".12g") -> str:
    out: list[str] = []
    _emit(obj, out, indent, 0, float_spec)
    out.append("\n")
    return "".join(out)


def dump_path(obj: Any, path, float_spec: str = ".12g") -> None:
    """float_spec ".17g" round-trips exactly (internal artifacts); the default
    12 significant digits keep reports diffable."""
    text = dumps(obj, float_spec=float_spec)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
