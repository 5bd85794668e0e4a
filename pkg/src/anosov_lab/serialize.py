"""Byte-stable JSON/CSV writers for experiment reports."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import struct

import numpy as np

SCHEMA = 1


def to_plain(obj):
    """Recursively convert numpy scalars/arrays and tuples to JSON-ready Python objects."""
    if isinstance(obj, dict):
        return {str(k): to_plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_plain(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return float(obj)
    if isinstance(obj, complex):
        return {"re": obj.real, "im": obj.imag}
    return obj


def format_float(x):
    if math.isnan(x):
        return '"nan"'
    if math.isinf(x):
        return '"inf"' if x > 0 else '"-inf"'
    text = format(x, ".17g")
    if all(c in "-0123456789" for c in text):
        text += ".0"
    return text


def dumps(obj, indent=2, _level=0):
    """JSON text with sorted keys and 17-significant-digit floats."""
    obj = to_plain(obj) if _level == 0 else obj
    pad = " " * (indent * (_level + 1))
    end = " " * (indent * _level)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(k)}: {dumps(obj[k], indent, _level + 1)}" for k in sorted(obj)]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, list):
        if not obj:
            return "[]"
        if all(not isinstance(v, (dict, list)) for v in obj):
            return "[" + ", ".join(dumps(v, indent, _level + 1) for v in obj) + "]"
        return "[\n" + ",\n".join(pad + dumps(v, indent, _level + 1) for v in obj) + "\n" + end + "]"
    if isinstance(obj, bool) or obj is None:
        return json.dumps(obj)
    if isinstance(obj, float):
        return format_float(obj)
    return json.dumps(obj)


def config_hash(config):
    canonical = json.dumps(to_plain(config), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode()).hexdigest()


def csv_text(header, rows):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([format(v, ".17g") if isinstance(v, float) else v for v in to_plain(row)])
    return buf.getvalue()


def write_grid_binary(path, samples, n):
    """Header of three little-endian int64 (n, resolution, components), then float64 values.

    Values are ordered component-major, and within a component the first coordinate
    index varies fastest.
    """
    samples = np.asarray(samples, dtype=float)
    comps = 1 if samples.ndim == n else samples.shape[-1]
    data = samples.reshape(samples.shape[:n] + (comps,))
    data = np.transpose(data, (n,) + tuple(reversed(range(n))))
    with open(path, "wb") as fh:
        fh.write(struct.pack("<qqq", n, samples.shape[0], comps))
        fh.write(np.ascontiguousarray(data).astype("<f8").tobytes())


def read_grid_binary(path):
    with open(path, "rb") as fh:
        n, R, comps = struct.unpack("<qqq", fh.read(24))
        data = np.frombuffer(fh.read(), dtype="<f8").reshape((comps,) + (R,) * n)
    return np.transpose(data, tuple(reversed(range(1, n + 1))) + (0,))
