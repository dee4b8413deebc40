"""Matrix file formats: a small binary container plus a CSV alternative.

Binary layout (little-endian): magic ``PPNM1``, a 3-byte dtype tag
(``f64``), two uint64 dimension fields, then rows*cols float64 values in
row-major order.  Round trips are bit-exact.

CSV layout: a ``# rows cols`` comment header followed by one comma-separated
line per row, written with 17 significant digits so float64 values survive
the text round trip exactly.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import MatrixFileError

__all__ = ["read_matrix", "write_matrix", "MAGIC"]

MAGIC = b"PPNM1"
_DTYPE_TAG = b"f64"
_HEADER = struct.Struct("<5s3sQQ")
# Sanity cap on rows*cols; declared dimensions beyond this are rejected.
MAX_ELEMENTS = 1 << 40


def write_matrix(matrix, path):
    """Write a 2-D float64 matrix; a ``.csv`` suffix selects the text form."""
    arr = np.ascontiguousarray(matrix, dtype=float)
    if arr.ndim != 2:
        raise ValueError(f"can only store 2-D matrices, got shape {arr.shape}")
    path = Path(path)
    if path.suffix.lower() == ".csv":
        _write_csv(arr, path)
    else:
        _write_binary(arr, path)


def read_matrix(path):
    """Read a matrix written by ``write_matrix``; the format is sniffed."""
    path = Path(path)
    try:
        head = path.open("rb").read(len(MAGIC))
    except OSError as exc:
        raise MatrixFileError("unreadable", f"{path}: {exc}") from exc
    if head == MAGIC:
        return _read_binary(path)
    return _read_csv(path)


def _write_binary(arr, path):
    rows, cols = arr.shape
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, _DTYPE_TAG, rows, cols))
        fh.write(arr.astype("<f8", copy=False).tobytes(order="C"))


def _read_binary(path):
    blob = path.read_bytes()
    if len(blob) < _HEADER.size:
        raise MatrixFileError("malformed-header", f"{path}: header truncated")
    magic, tag, rows, cols = _HEADER.unpack_from(blob)
    if magic != MAGIC or tag != _DTYPE_TAG:
        raise MatrixFileError(
            "malformed-header", f"{path}: bad magic/dtype {magic!r}/{tag!r}"
        )
    if rows * cols > MAX_ELEMENTS:
        raise MatrixFileError(
            "dimension-overflow", f"{path}: {rows} x {cols} exceeds the element cap"
        )
    need = rows * cols * 8
    payload = blob[_HEADER.size:]
    if len(payload) < need:
        raise MatrixFileError(
            "truncated-payload",
            f"{path}: payload holds {len(payload)} bytes, header promises {need}",
        )
    if len(payload) > need:
        raise MatrixFileError(
            "trailing-data", f"{path}: {len(payload) - need} bytes past the payload"
        )
    return np.frombuffer(payload, dtype="<f8").reshape(rows, cols).astype(float)


def _write_csv(arr, path):
    rows, cols = arr.shape
    with open(path, "w", encoding="ascii") as fh:
        fh.write(f"# {rows} {cols}\n")
        for row in arr:
            fh.write(",".join(format(v, ".17g") for v in row))
            fh.write("\n")


def _read_csv(path):
    try:
        lines = path.read_text(encoding="ascii").splitlines()
    except (OSError, UnicodeDecodeError) as exc:
        raise MatrixFileError("unreadable", f"{path}: {exc}") from exc
    if not lines or not lines[0].startswith("#"):
        raise MatrixFileError(
            "malformed-header", f"{path}:1: expected a '# rows cols' header"
        )
    parts = lines[0][1:].split()
    if len(parts) != 2:
        raise MatrixFileError(
            "malformed-header", f"{path}:1: expected a '# rows cols' header"
        )
    try:
        rows, cols = int(parts[0]), int(parts[1])
    except ValueError as exc:
        raise MatrixFileError(
            "malformed-header", f"{path}:1: non-integer dimensions"
        ) from exc
    if rows < 0 or cols < 0 or rows * cols > MAX_ELEMENTS:
        raise MatrixFileError(
            "dimension-overflow", f"{path}:1: {rows} x {cols} out of range"
        )
    data = [ln for ln in lines[1:] if ln.strip()]
    if len(data) != rows:
        raise MatrixFileError(
            "csv-parse",
            f"{path}:{len(lines)}: header promises {rows} rows, found {len(data)}",
        )
    out = np.empty((rows, cols))
    for i, line in enumerate(data):
        fields = line.split(",")
        if len(fields) != cols:
            raise MatrixFileError(
                "csv-parse",
                f"{path}:{i + 2}: expected {cols} fields, found {len(fields)}",
            )
        try:
            out[i] = [float(f) for f in fields]
        except ValueError as exc:
            raise MatrixFileError(
                "csv-parse", f"{path}:{i + 2}: non-numeric field"
            ) from exc
    return out
