"""Deterministic CSV / JSON writers.

Data files never carry timestamps; run metadata goes to a ``.meta.json``
sidecar so that identical inputs give byte-identical data files.
"""

from __future__ import annotations

import csv
import json
import math
import platform
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

__all__ = ["fmt", "round_sig", "write_csv", "read_csv", "write_json", "write_jsonl", "write_meta"]


def fmt(x, sig=15):
    return format(float(x), f".{sig}g")


def round_sig(x, sig=12):
    """Round to ``sig`` significant digits, passing non-floats through."""
    if isinstance(x, (bool, int, str)) or x is None:
        return x
    if isinstance(x, (np.bool_, np.integer)):
        return x.item()
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if not math.isfinite(x):
            return None
        return float(format(x, f".{sig}g"))
    if isinstance(x, np.ndarray):
        return [round_sig(v, sig) for v in x.tolist()]
    if isinstance(x, dict):
        return {k: round_sig(v, sig) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [round_sig(v, sig) for v in x]
    return x


def write_csv(path, header, columns, sig=15):
    """Write equal-length ``columns`` under ``header`` (RFC-4180 quoting)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    columns = [np.asarray(c) for c in columns]
    n = len(columns[0]) if columns else 0
    if any(len(c) != n for c in columns):
        raise ValueError("columns have different lengths")
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for i in range(n):
            writer.writerow([fmt(c[i], sig) if np.issubdtype(c.dtype, np.number) else c[i] for c in columns])
    return path


def read_csv(path):
    """Read a numeric CSV written by :func:`write_csv` into a dict of arrays."""
    with Path(path).open(newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    return {name: np.array([float(r[i]) for r in body]) for i, name in enumerate(header)}


def write_json(path, payload, sig=12):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(round_sig(payload, sig), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def write_jsonl(path, records, sig=12):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [json.dumps(round_sig(r, sig), sort_keys=True) for r in records]
    path.write_text("".join(line + "\n" for line in lines), encoding="utf-8")
    return path


def write_meta(path, **info):
    """Sidecar with the non-deterministic run context (time, argv, versions)."""
    from . import __version__

    meta = {
        "created_utc": datetime.now(timezone.utc).isoformat(timespec="seconds"),
        "argv": sys.argv,
        "package_version": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        **info,
    }
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(meta, indent=2, sort_keys=True, default=str) + "\n", encoding="utf-8")
    return path
