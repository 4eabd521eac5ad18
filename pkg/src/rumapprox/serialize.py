"""Tiny JSON writer that prints floats with 17 significant digits.

The stdlib encoder prints the shortest repr, which also round-trips, but
fixing the digit count keeps serialized artifacts byte-stable across
Python versions.  Only the shapes we actually serialize are supported:
dicts with string keys, lists/tuples, strings, numbers, bools, None.
"""

import math

import numpy as np


def _fmt(value):
    if isinstance(value, bool):
        return "true" if value else "false"
    if value is None:
        return "null"
    if isinstance(value, str):
        return '"' + value.replace("\\", "\\\\").replace('"', '\\"') + '"'
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        value = float(value)
        if not math.isfinite(value):
            raise ValueError("cannot serialize non-finite float")
        return f"{value:.17g}"
    if isinstance(value, (list, tuple, np.ndarray)):
        return "[" + ", ".join(_fmt(v) for v in value) + "]"
    if isinstance(value, dict):
        items = (f'{_fmt(str(k))}: {_fmt(v)}' for k, v in value.items())
        return "{" + ", ".join(items) + "}"
    raise TypeError(f"cannot serialize {type(value).__name__}")


def dumps_compact(obj):
    return _fmt(obj)
