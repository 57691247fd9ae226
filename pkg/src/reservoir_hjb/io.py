"""Atomic CSV/JSON writers and a strict CSV table reader."""

from __future__ import annotations

import csv
import json
import os
import tempfile
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import InputError


def format_value(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return "%.17g" % float(x)
    return str(x)


def _atomic_write(path: Path, text: str):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_csv(path, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    """Write a header plus rows with 17 significant digits and LF line endings."""
    lines = [",".join(header)]
    lines.extend(",".join(format_value(x) for x in row) for row in rows)
    _atomic_write(Path(path), "\n".join(lines) + "\n")
    return Path(path)


def write_json(path, obj) -> Path:
    _atomic_write(Path(path), json.dumps(obj, indent=2) + "\n")
    return Path(path)


def write_text(path, text: str) -> Path:
    _atomic_write(Path(path), text)
    return Path(path)


def read_csv_table(path, header: Sequence[str]) -> np.ndarray:
    """Read a numeric CSV whose first line must equal ``header``.

    Raises
    ------
    InputError
        Missing file, wrong header, wrong field count or a non-numeric cell;
        the message carries the line number.
    """
    path = Path(path)
    if not path.is_file():
        raise InputError(f"file not found: {path}")
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        first = next(reader, None)
        if first is None or [c.strip() for c in first] != list(header):
            raise InputError(f"{path}: expected header {','.join(header)}", line=1)
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise InputError(f"{path}: expected {len(header)} fields", line=lineno)
            try:
                rows.append([float(c) for c in row])
            except ValueError:
                raise InputError(f"{path}: non-numeric value in {row}", line=lineno) from None
    if not rows:
        raise InputError(f"{path}: no data rows")
    return np.array(rows)
