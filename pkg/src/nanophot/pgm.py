"""Minimal PGM (P2 ASCII / P5 binary) reader and writer for 8-bit grey images."""

from __future__ import annotations

from pathlib import Path

import numpy as np

_WS = b" \t\n\r\v\f"


class PgmError(ValueError):
    def __init__(self, msg: str, offset: int):
        super().__init__(f"{msg} (byte offset {offset})")
        self.offset = offset


def _token(data: bytes, pos: int) -> tuple[bytes, int, int]:
    """Next header token, skipping whitespace and ``#`` comments. Returns (token, start, end)."""
    n = len(data)
    while pos < n:
        c = data[pos:pos + 1]
        if c in (b"",):
            break
        if c == b"#":
            while pos < n and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
        elif c in _WS:
            pos += 1
        else:
            break
    start = pos
    while pos < n and data[pos:pos + 1] not in _WS and data[pos:pos + 1] != b"#":
        pos += 1
    if start == pos:
        raise PgmError("unexpected end of header", start)
    return data[start:pos], start, pos


def _int_token(data: bytes, pos: int, what: str) -> tuple[int, int, int]:
    tok, start, end = _token(data, pos)
    if not tok.isdigit():
        raise PgmError(f"malformed {what} {tok!r}", start)
    return int(tok), start, end


def parse_pgm(data: bytes) -> np.ndarray:
    """Decode PGM bytes into a ``(rows, cols)`` uint8 array."""
    magic, start, pos = _token(data, 0)
    if magic not in (b"P2", b"P5"):
        raise PgmError(f"unsupported magic {magic!r}, expected P2 or P5", start)
    cols, _, pos = _int_token(data, pos, "width")
    rows, _, pos = _int_token(data, pos, "height")
    maxval, maxval_start, pos = _int_token(data, pos, "maxval")
    if maxval != 255:
        raise PgmError(f"maxval {maxval} not supported, only 255", maxval_start)
    if rows == 0 or cols == 0:
        raise PgmError("image has zero size", start)
    count = rows * cols
    if magic == b"P5":
        if pos >= len(data) or data[pos:pos + 1] not in _WS:
            raise PgmError("missing whitespace before raster", pos)
        pos += 1
        raster = data[pos:pos + count]
        if len(raster) < count:
            raise PgmError(f"truncated raster: {len(raster)} of {count} bytes", pos + len(raster))
        return np.frombuffer(raster, dtype=np.uint8).reshape(rows, cols).copy()
    values = np.empty(count, dtype=np.uint8)
    for k in range(count):
        try:
            tok, s, pos = _token(data, pos)
        except PgmError as e:
            raise PgmError(f"truncated raster: {k} of {count} values", e.offset) from None
        if not tok.isdigit() or int(tok) > 255:
            raise PgmError(f"bad pixel value {tok!r}", s)
        values[k] = int(tok)
    return values.reshape(rows, cols)


def encode_pgm(pixels: np.ndarray, binary: bool = True) -> bytes:
    px = np.asarray(pixels)
    if px.ndim != 2:
        raise ValueError("PGM needs a 2-D array")
    if px.dtype != np.uint8:
        if px.min() < 0 or px.max() > 255:
            raise ValueError("pixel values must lie in 0..255")
        px = px.astype(np.uint8)
    rows, cols = px.shape
    header = f"{'P5' if binary else 'P2'}\n{cols} {rows}\n255\n".encode("ascii")
    if binary:
        return header + px.tobytes()
    lines = []
    for r in px:
        line: list[str] = []
        width = 0
        for v in r:
            s = str(int(v))
            if width + len(s) + 1 > 70 and line:
                lines.append(" ".join(line))
                line, width = [], 0
            line.append(s)
            width += len(s) + 1
        lines.append(" ".join(line))
    return header + ("\n".join(lines) + "\n").encode("ascii")


def read_pgm_array(path: str | Path) -> np.ndarray:
    return parse_pgm(Path(path).read_bytes())


def write_pgm_array(path: str | Path, pixels: np.ndarray, binary: bool = True) -> None:
    Path(path).write_bytes(encode_pgm(pixels, binary))
