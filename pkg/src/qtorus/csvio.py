"""CSV and JSON output: '#'-prefixed metadata headers, comma columns,
17-significant-digit floats, atomic writes (temp + rename)."""

from __future__ import annotations

import json
import os
import tempfile


def _atomic_write(path, text):
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def fmt(x):
    if isinstance(x, (int,)) or (hasattr(x, "dtype") and x.dtype.kind in "iu"):
        return str(int(x))
    return f"{float(x):.17g}"


def write_csv(path, columns, meta=None):
    """columns: list of (name, iterable); meta: dict for '#' header lines."""
    lines = []
    for k, v in (meta or {}).items():
        lines.append(f"# {k}: {v}")
    names = [c[0] for c in columns]
    arrays = [list(c[1]) for c in columns]
    lines.append(",".join(names))
    for row in zip(*arrays):
        lines.append(",".join(fmt(x) for x in row))
    _atomic_write(path, "\n".join(lines) + "\n")


def read_csv(path):
    meta, names, rows = {}, None, []
    with open(path) as fh:
        for line in fh:
            line = line.rstrip("\n")
            if line.startswith("#"):
                if ":" in line:
                    k, v = line[1:].split(":", 1)
                    meta[k.strip()] = v.strip()
                continue
            if not line:
                continue
            if names is None:
                names = line.split(",")
            else:
                rows.append([float(x) for x in line.split(",")])
    cols = {n: [r[i] for r in rows] for i, n in enumerate(names or [])}
    return meta, cols


def write_json(path, payload):
    _atomic_write(path, json.dumps(payload, indent=2, sort_keys=True) + "\n")
