"""Deterministic report serialization.

Reports must be byte-identical across reruns with the same inputs, so
serialization is hand-rolled rather than delegated to json.dumps defaults:
keys are emitted sorted, floats are printed with the shortest 17
significant digit form, and no environment-dependent values (timestamps,
paths, hostnames) are ever included by the writers here.
"""

from __future__ import annotations

import hashlib
import json
import math
from typing import Iterable, Sequence

import numpy as np


class ReportError(ValueError):
    pass


def format_float(v: float) -> str:
    if math.isnan(v) or math.isinf(v):
        raise ReportError(f"non-finite float {v!r} cannot appear in a report")
    if v == 0.0:
        return "0"
    return "%.17g" % v


def _canon(obj, out: list[str]) -> None:
    if obj is None:
        out.append("null")
    elif isinstance(obj, bool):
        out.append("true" if obj else "false")
    elif isinstance(obj, (int, np.integer)):
        out.append(str(int(obj)))
    elif isinstance(obj, (float, np.floating)):
        out.append(format_float(float(obj)))
    elif isinstance(obj, str):
        out.append(json.dumps(obj))
    elif isinstance(obj, np.ndarray):
        _canon(obj.tolist(), out)
    elif isinstance(obj, (list, tuple)):
        out.append("[")
        for i, item in enumerate(obj):
            if i:
                out.append(",")
            _canon(item, out)
        out.append("]")
    elif isinstance(obj, dict):
        out.append("{")
        keys = list(obj.keys())
        if any(not isinstance(k, str) for k in keys):
            raise ReportError("report dict keys must be strings")
        for i, k in enumerate(sorted(keys)):
            if i:
                out.append(",")
            out.append(json.dumps(k))
            out.append(":")
            _canon(obj[k], out)
        out.append("}")
    else:
        raise ReportError(f"cannot serialize {type(obj).__name__} into a report")


def canonical_json(obj) -> str:
    """Canonical JSON text: sorted keys, %.17g floats, no whitespace."""
    out: list[str] = []
    _canon(obj, out)
    return "".join(out)


def sha256_hex(data) -> str:
    if isinstance(data, str):
        data = data.encode("utf-8")
    return hashlib.sha256(data).hexdigest()


def file_sha256(path: str) -> str:
    with open(path, "rb") as fh:
        return sha256_hex(fh.read())


def write_report(path: str, obj) -> str:
    """Write canonical JSON plus trailing newline; returns the text sha256."""
    text = canonical_json(obj) + "\n"
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
    return sha256_hex(text)


def write_csv(path: str, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    """Deterministic CSV: %.17g floats, LF line endings, no quoting needs."""
    lines = [",".join(header)]
    for row in rows:
        cells = []
        for cell in row:
            if isinstance(cell, bool):
                cells.append("true" if cell else "false")
            elif isinstance(cell, (float, np.floating)):
                cells.append(format_float(float(cell)))
            elif isinstance(cell, (int, np.integer)):
                cells.append(str(int(cell)))
            else:
                text = str(cell)
                if any(ch in text for ch in ",\"\n"):
                    raise ReportError(f"csv cell {text!r} needs quoting, refusing")
                cells.append(text)
        lines.append(",".join(cells))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
