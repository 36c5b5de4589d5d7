"""Dense matrix files: Matrix Market ``array real general`` and a raw binary format.

Raw binary layout (little-endian): magic ``b"RBKI"``, ``u32`` version,
``u64`` rows, ``u64`` cols, then ``rows * cols`` float64 values in row-major
order.
"""

from __future__ import annotations

import math
import os
import struct
from pathlib import Path

import numpy as np

MAGIC = b"RBKI"
VERSION = 1
_HEADER = struct.Struct("<4sIQQ")
_MAX_ENTRIES = 1 << 40

MM_HEADER = "%%MatrixMarket matrix array real general"


class MatrixFormatError(ValueError):
    """Malformed matrix file; carries the path and a line or byte offset."""

    def __init__(self, message: str, path=None, line: int | None = None, offset: int | None = None):
        where = []
        if path is not None:
            where.append(str(path))
        if line is not None:
            where.append(f"line {line}")
        if offset is not None:
            where.append(f"byte {offset}")
        super().__init__(f"{': '.join(where)}: {message}" if where else message)
        self.path = path
        self.line = line
        self.offset = offset


def _format_for(path, format: str | None) -> str:
    if format is not None:
        if format not in ("matrix-market", "raw-binary"):
            raise ValueError(f"unknown format {format!r}")
        return format
    return "matrix-market" if str(path).endswith(".mtx") else "raw-binary"


def write_matrix(path, A, format: str | None = None) -> None:
    A = np.asarray(A, dtype=np.float64)
    if A.ndim != 2 or A.size == 0:
        raise ValueError(f"need a nonempty 2-D matrix, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise ValueError("refusing to write a matrix with non-finite entries")
    fmt = _format_for(path, format)
    if fmt == "raw-binary":
        with open(path, "wb") as fh:
            fh.write(_HEADER.pack(MAGIC, VERSION, A.shape[0], A.shape[1]))
            fh.write(np.ascontiguousarray(A, dtype="<f8").tobytes())
        return
    with open(path, "w", newline="\n") as fh:
        fh.write(MM_HEADER + "\n")
        fh.write(f"{A.shape[0]} {A.shape[1]}\n")
        # array format stores entries column by column
        for x in A.T.ravel():
            fh.write(repr(float(x)) + "\n")


def read_matrix(path, format: str | None = None) -> np.ndarray:
    fmt = _format_for(path, format)
    if fmt == "raw-binary":
        return _read_raw(path)
    return _read_mm(path)


def _read_raw(path) -> np.ndarray:
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise MatrixFormatError(
            f"truncated header: expected {_HEADER.size} bytes, found {len(data)}", path, offset=0
        )
    magic, version, rows, cols = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise MatrixFormatError(f"bad magic {magic!r}, expected {MAGIC!r}", path, offset=0)
    if version != VERSION:
        raise MatrixFormatError(f"unsupported version {version}", path, offset=4)
    if rows == 0 or cols == 0:
        raise MatrixFormatError(f"empty dimensions {rows}x{cols}", path, offset=8)
    if rows * cols > _MAX_ENTRIES:
        raise MatrixFormatError(f"dimension overflow: {rows}x{cols}", path, offset=8)
    expected = _HEADER.size + 8 * rows * cols
    if len(data) != expected:
        raise MatrixFormatError(
            f"payload size mismatch: expected {expected} bytes, found {len(data)}", path, offset=len(data)
        )
    A = np.frombuffer(data, dtype="<f8", offset=_HEADER.size).reshape(rows, cols)
    bad = np.flatnonzero(~np.isfinite(A))
    if bad.size:
        raise MatrixFormatError("non-finite entry", path, offset=_HEADER.size + 8 * int(bad[0]))
    return A.astype(np.float64)


def _read_mm(path) -> np.ndarray:
    with open(path, "r") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise MatrixFormatError("empty file", path, line=1)
    header = lines[0].split()
    if len(header) != 5 or header[0] != "%%MatrixMarket" or header[1].lower() != "matrix":
        raise MatrixFormatError("missing %%MatrixMarket matrix header", path, line=1)
    layout, field_, symmetry = (h.lower() for h in header[2:])
    if (layout, field_, symmetry) != ("array", "real", "general"):
        raise MatrixFormatError(f"unsupported variant {' '.join(header[2:])}; only array real general", path, line=1)
    body = [(i + 1, ln) for i, ln in enumerate(lines[1:], start=1) if ln.strip() and not ln.lstrip().startswith("%")]
    if not body:
        raise MatrixFormatError("missing size line", path, line=len(lines))
    size_line, size_text = body[0]
    try:
        rows, cols = (int(x) for x in size_text.split())
    except ValueError:
        raise MatrixFormatError(f"bad size line {size_text!r}", path, line=size_line) from None
    if rows < 1 or cols < 1:
        raise MatrixFormatError(f"empty dimensions {rows}x{cols}", path, line=size_line)
    if rows * cols > _MAX_ENTRIES:
        raise MatrixFormatError(f"dimension overflow: {rows}x{cols}", path, line=size_line)
    values = []
    for lineno, text in body[1:]:
        for tok in text.split():
            try:
                x = float(tok)
            except ValueError:
                raise MatrixFormatError(f"not a number: {tok!r}", path, line=lineno) from None
            if not math.isfinite(x):
                raise MatrixFormatError(f"non-finite entry {tok!r}", path, line=lineno)
            values.append(x)
    if len(values) != rows * cols:
        raise MatrixFormatError(
            f"expected {rows * cols} entries, found {len(values)}", path, line=len(lines)
        )
    return np.array(values, dtype=np.float64).reshape(cols, rows).T.copy()


def file_size(path) -> int:
    return os.stat(path).st_size
