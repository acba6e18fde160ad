"""CSV reading and writing.

Files are comma separated, UTF-8, LF line endings, with optional ``# key =
value`` comment lines (parameter echo) before a single header line.  Floats
are written with 17 significant digits, so reading a file back reproduces the
written doubles exactly.
"""

from __future__ import annotations

import csv
import io as _io
import math
import sys
from pathlib import Path

import numpy as np


class CsvFormatError(ValueError):
    """Malformed CSV input; ``line`` is the 1-based line number."""

    def __init__(self, message: str, line: int | None = None, path=None):
        where = f"{path or '<input>'}:{line}: " if line is not None else ""
        super().__init__(where + message)
        self.line = line
        self.path = path


def format_value(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return "%.17g" % v
    return str(v)


def render_csv(header, rows, meta: dict | None = None) -> str:
    buf = _io.StringIO()
    for k, v in (meta or {}).items():
        buf.write(f"# {k} = {format_value(v)}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        if len(row) != len(header):
            raise ValueError(f"row has {len(row)} fields, header has {len(header)}")
        w.writerow([format_value(v) for v in row])
    return buf.getvalue()


def write_csv(path, header, rows, meta: dict | None = None) -> None:
    """Write to ``path``; ``"-"`` or None writes to stdout."""
    text = render_csv(header, rows, meta)
    if path in (None, "-"):
        sys.stdout.write(text)
        return
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def parse_csv(text: str, path=None, numeric: bool = True, line_numbers: list | None = None):
    """Return (meta, header, rows).  With ``numeric`` rows form a float array.

    ``line_numbers``, when given, is filled with the source line of each row.
    """
    meta, header, rows = {}, None, []
    for lineno, raw in enumerate(text.split("\n"), start=1):
        line = raw.rstrip("\r")
        if not line.strip():
            continue
        if line.startswith("#"):
            if header is None and "=" in line:
                k, _, v = line[1:].partition("=")
                meta[k.strip()] = v.strip()
            continue
        fields = next(csv.reader([line]))
        if header is None:
            header = [f.strip() for f in fields]
            if len(set(header)) != len(header):
                raise CsvFormatError("duplicate column names in header", lineno, path)
            continue
        if len(fields) != len(header):
            raise CsvFormatError(f"expected {len(header)} fields, found {len(fields)}", lineno, path)
        if numeric:
            try:
                vals = [float(f) for f in fields]
            except ValueError:
                raise CsvFormatError(f"non-numeric value in {line!r}", lineno, path) from None
            if not all(math.isfinite(v) for v in vals):
                raise CsvFormatError("non-finite value", lineno, path)
            rows.append(vals)
            if line_numbers is not None:
                line_numbers.append(lineno)
        else:
            rows.append([f.strip() for f in fields])
    if header is None:
        raise CsvFormatError("no header line", None, path)
    if numeric:
        rows = np.array(rows, dtype=float).reshape(len(rows), len(header))
    return meta, header, rows


def read_csv(path, numeric: bool = True, line_numbers: list | None = None):
    try:
        text = Path(path).read_text(encoding="utf-8")
    except UnicodeDecodeError as exc:
        raise CsvFormatError(f"not UTF-8 text ({exc.reason})", None, path) from None
    return parse_csv(text, path, numeric, line_numbers)


def read_spectrum(path):
    """Two-column (frequency_MHz, signal) spectrum file -> (meta, frequencies, signal)."""
    lines: list = []
    meta, header, rows = read_csv(path, line_numbers=lines)
    if len(header) != 2:
        raise CsvFormatError(f"spectrum needs 2 columns, header has {len(header)}", 1, path)
    if rows.shape[0] < 3:
        raise CsvFormatError("spectrum needs at least 3 rows", None, path)
    if np.any(np.diff(rows[:, 0]) <= 0):
        bad = int(np.nonzero(np.diff(rows[:, 0]) <= 0)[0][0])
        raise CsvFormatError("frequencies must be strictly increasing", lines[bad + 1], path)
    return meta, rows[:, 0], rows[:, 1]
