"""
CSV helpers for run outputs.

Floats are written with 17 significant digits so every value round-trips
exactly; the same rows always produce the same bytes.
"""

import csv
import math
from numbers import Integral, Real
from pathlib import Path
from typing import Iterable, Sequence


def format_value(value) -> str:
    """Render one cell: ints as ints, floats as %.17g, inf/nan spelled out."""
    if isinstance(value, bool):
        return str(int(value))
    if isinstance(value, Integral):
        return str(int(value))
    if isinstance(value, Real):
        v = float(value)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return f"{v:.17g}"
    if value is None:
        return ""
    return str(value)


def write_csv(path: Path | str, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    """Write header + rows to path (parents created). Returns the path."""
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    with open(p, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(list(header))
        for row in rows:
            w.writerow([format_value(v) for v in row])
    return p


def read_csv(path: Path | str) -> tuple[list[str], list[list[str]]]:
    """Header and raw string rows."""
    with open(path, newline="", encoding="utf-8") as f:
        r = csv.reader(f)
        header = next(r, [])
        return header, [row for row in r]


def write_records(path: Path | str, records: Iterable[str]) -> Path:
    """One text record per line (mixture records, fit records)."""
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    with open(p, "w", encoding="utf-8") as f:
        for rec in records:
            f.write(rec.rstrip("\n") + "\n")
    return p
