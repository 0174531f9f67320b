"""16-bit binary PGM (P5) read/write.

Heightmaps and depth images are stored as 16-bit big-endian P5 files with
maxval 65535, encoding millimeters.  The format is deliberately minimal:
a three-line ASCII header followed by raw big-endian samples, so files
round-trip bit-exactly and can be inspected with standard image tools.
"""

from __future__ import annotations

import numpy as np


class PgmError(ValueError):
    pass


def write_pgm16(path, values_mm: np.ndarray) -> None:
    """Write a 2-D uint16 array (row-major, row 0 first) as big-endian P5."""
    arr = np.asarray(values_mm)
    if arr.ndim != 2:
        raise PgmError(f"expected 2-D array, got shape {arr.shape}")
    if arr.dtype != np.uint16:
        if np.any(arr < 0) or np.any(arr > 65535):
            raise PgmError("values out of uint16 range")
        arr = arr.astype(np.uint16)
    h, w = arr.shape
    with open(path, "wb") as f:
        f.write(f"P5\n{w} {h}\n65535\n".encode("ascii"))
        f.write(arr.astype(">u2").tobytes())


def read_pgm16(path) -> np.ndarray:
    """Read a 16-bit P5 file written by write_pgm16. Returns uint16 (h, w)."""
    with open(path, "rb") as f:
        data = f.read()
    # header: magic, dimensions, maxval, separated by whitespace; comments
    # (lines starting with '#') are permitted by the format.
    fields: list[bytes] = []
    pos = 0
    while len(fields) < 4:
        if pos >= len(data):
            raise PgmError(f"{path}: truncated header")
        c = data[pos : pos + 1]
        if c == b"#":
            while pos < len(data) and data[pos : pos + 1] != b"\n":
                pos += 1
        elif c.isspace():
            pos += 1
        else:
            start = pos
            while pos < len(data) and not data[pos : pos + 1].isspace():
                pos += 1
            fields.append(data[start:pos])
    if fields[0] != b"P5":
        raise PgmError(f"{path}: not a P5 file")
    w, h, maxval = int(fields[1]), int(fields[2]), int(fields[3])
    if maxval != 65535:
        raise PgmError(f"{path}: expected maxval 65535, got {maxval}")
    pos += 1  # single whitespace byte after maxval
    raw = data[pos : pos + 2 * w * h]
    if len(raw) != 2 * w * h:
        raise PgmError(f"{path}: truncated pixel data")
    return np.frombuffer(raw, dtype=">u2").reshape(h, w).astype(np.uint16)
