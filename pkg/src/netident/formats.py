"""Number and file formats shared by the library and the CLI.

Numbers are written either as exact ``p/q`` strings (integers without the
``/1``) or as decimals with 17 significant digits, never locale-dependent.
"""

from __future__ import annotations

import json
import os
import tempfile
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .exact import as_fraction


def fmt_number(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, Fraction):
        return str(v.numerator) if v.denominator == 1 else f"{v.numerator}/{v.denominator}"
    return format(float(v), ".17g")


def parse_number(text: str):
    """``p/q`` and integer strings become Fractions, anything else a float."""
    s = text.strip()
    if not s:
        raise ValueError("empty number")
    if any(c in s for c in ".eEn") and "/" not in s:
        return float(s)
    return as_fraction(s)


def parse_vector(text: str) -> list:
    """Whitespace/comma separated numbers; ``#`` starts a comment."""
    vals = []
    for line in text.splitlines():
        line = line.split("#", 1)[0]
        vals.extend(parse_number(t) for t in line.replace(",", " ").split())
    return vals


def read_vector_file(path) -> list:
    text = Path(path).read_text()
    if text.lstrip().startswith("{"):
        data = json.loads(text)
        for key in ("y", "w"):
            if key in data:
                return [parse_number(str(v)) for v in data[key]]
        raise ValueError(f"{path}: JSON vector file needs a 'y' or 'w' field")
    return parse_vector(text)


def atomic_write(path, text: str):
    """Write via a temporary file in the same directory, then rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def dump_json(data) -> str:
    return json.dumps(data, indent=2, sort_keys=True) + "\n"


def steady_state_csv(rows: Iterable, n: int) -> str:
    """CSV with ``key,y1..yn,residual_inf`` for ``(graph, SteadyState)`` pairs."""
    lines = ["key," + ",".join(f"y{i}" for i in range(1, n + 1)) + ",residual_inf"]
    for g, ss in rows:
        lines.append(",".join([g.key_string() or "-", *map(fmt_number, ss.y),
                               fmt_number(ss.residual_norm)]))
    return "\n".join(lines) + "\n"


def exact_record(values: Sequence) -> list[str]:
    return [fmt_number(v) for v in values]
