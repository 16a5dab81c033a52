"""Compact, deterministic JSON writer.

Floats get 17 significant digits, so every value round-trips exactly and
two documents holding the same numbers are byte-identical. Flat lists stay
on one line, which keeps matrices readable.
"""

from __future__ import annotations

import json
import math

import numpy as np


def _emit(obj, indent, level, out):
    pad = " " * (indent * (level + 1))
    end = " " * (indent * level)
    if isinstance(obj, dict):
        if not obj:
            out.append("{}")
            return
        out.append("{\n")
        for k, (key, val) in enumerate(obj.items()):
            out.append(f"{pad}{json.dumps(str(key))}: ")
            _emit(val, indent, level + 1, out)
            out.append(",\n" if k + 1 < len(obj) else "\n")
        out.append(end + "}")
    elif isinstance(obj, (list, tuple, np.ndarray)):
        items = obj.tolist() if isinstance(obj, np.ndarray) else obj
        if not items:
            out.append("[]")
        elif all(not isinstance(v, (dict, list, tuple, np.ndarray)) for v in items):
            # flat rows stay on one line
            out.append("[" + ", ".join(_scalar(v) for v in items) + "]")
        else:
            out.append("[\n")
            for k, v in enumerate(items):
                out.append(pad)
                _emit(v, indent, level + 1, out)
                out.append(",\n" if k + 1 < len(items) else "\n")
            out.append(end + "]")
    else:
        out.append(_scalar(obj))


def _scalar(v):
    if v is None or isinstance(v, (bool, np.bool_)):
        return json.dumps(None if v is None else bool(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if not math.isfinite(v):
            raise ValueError(f"cannot serialize non-finite number {v}")
        return format(v, ".17g")
    if isinstance(v, str):
        return json.dumps(v)
    raise TypeError(f"cannot serialize {type(v).__name__}")


def dumps(obj, indent=2) -> str:
    out = []
    _emit(obj, indent, 0, out)
    return "".join(out) + "\n"


def dump(obj, path):
    with open(path, "w") as fh:
        fh.write(dumps(obj))
