"""Binary PPM (P6) and PFM (Pf / PF) readers and writers.

PFM stores rows bottom-up; a negative scale marks little-endian data. Arrays
in memory are always top-down, row-major.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .errors import FormatError


class _Cursor:
    def __init__(self, path, data: bytes):
        self.path = path
        self.data = data
        self.pos = 0

    def fail(self, message: str):
        raise FormatError(self.path, self.pos, message)

    def skip_ws_and_comments(self):
        d = self.data
        while self.pos < len(d):
            c = d[self.pos : self.pos + 1]
            if c == b"#":
                nl = d.find(b"\n", self.pos)
                self.pos = len(d) if nl < 0 else nl + 1
            elif c.isspace():
                self.pos += 1
            else:
                return

    def token(self) -> bytes:
        self.skip_ws_and_comments()
        start = self.pos
        d = self.data
        while self.pos < len(d) and not d[self.pos : self.pos + 1].isspace():
            self.pos += 1
        if start == self.pos:
            self.fail("unexpected end of header")
        return d[start : self.pos]

    def int_token(self, what: str) -> int:
        start = self.pos
        tok = self.token()
        try:
            value = int(tok)
        except ValueError:
            self.pos = start
            self.fail(f"expected integer {what}, got {tok!r}")
        if value <= 0:
            self.pos = start
            self.fail(f"{what} must be positive, got {value}")
        return value

    def single_whitespace(self):
        if self.pos >= len(self.data) or not self.data[self.pos : self.pos + 1].isspace():
            self.fail("expected whitespace before raster data")
        self.pos += 1

    def payload(self, nbytes: int) -> bytes:
        have = len(self.data) - self.pos
        if have < nbytes:
            self.pos = len(self.data)
            self.fail(f"truncated raster: need {nbytes} bytes, have {have}")
        out = self.data[self.pos : self.pos + nbytes]
        self.pos += nbytes
        return out


def write_ppm(path, image: np.ndarray) -> None:
    img = np.asarray(image)
    if img.ndim != 3 or img.shape[2] != 3 or img.dtype != np.uint8:
        raise ValueError("PPM writer expects an HxWx3 uint8 array")
    h, w, _ = img.shape
    with open(path, "wb") as f:
        f.write(b"P6\n%d %d\n255\n" % (w, h))
        f.write(np.ascontiguousarray(img).tobytes())


def read_ppm(path) -> np.ndarray:
    data = Path(path).read_bytes()
    cur = _Cursor(path, data)
    magic = cur.token()
    if magic != b"P6":
        cur.pos = 0
        cur.fail(f"not a binary PPM (magic {magic!r})")
    w = cur.int_token("width")
    h = cur.int_token("height")
    maxval = cur.int_token("maxval")
    if maxval != 255:
        cur.fail(f"only 8-bit PPM supported, maxval={maxval}")
    cur.single_whitespace()
    raw = cur.payload(w * h * 3)
    if cur.pos != len(data):
        cur.fail(f"{len(data) - cur.pos} trailing bytes after raster")
    return np.frombuffer(raw, dtype=np.uint8).reshape(h, w, 3).copy()


def write_pfm(path, array: np.ndarray) -> None:
    """Write an HxW (``Pf``) or HxWx3 (``PF``) float raster, little-endian."""
    arr = np.asarray(array, dtype=np.float32)
    if arr.ndim == 2:
        magic = b"Pf"
    elif arr.ndim == 3 and arr.shape[2] == 3:
        magic = b"PF"
    else:
        raise ValueError("PFM writer expects HxW or HxWx3 arrays")
    h, w = arr.shape[:2]
    with open(path, "wb") as f:
        f.write(magic + b"\n%d %d\n-1.0\n" % (w, h))
        f.write(np.ascontiguousarray(arr[::-1]).astype("<f4").tobytes())


def read_pfm(path) -> np.ndarray:
    data = Path(path).read_bytes()
    cur = _Cursor(path, data)
    magic = cur.token()
    if magic == b"Pf":
        channels = 1
    elif magic == b"PF":
        channels = 3
    else:
        cur.pos = 0
        cur.fail(f"not a PFM file (magic {magic!r})")
    w = cur.int_token("width")
    h = cur.int_token("height")
    start = cur.pos
    tok = cur.token()
    try:
        scale = float(tok)
    except ValueError:
        cur.pos = start
        cur.fail(f"bad scale {tok!r}")
    if scale == 0:
        cur.pos = start
        cur.fail("scale must be non-zero")
    cur.single_whitespace()
    dtype = "<f4" if scale < 0 else ">f4"
    raw = cur.payload(w * h * channels * 4)
    if cur.pos != len(data):
        cur.fail(f"{len(data) - cur.pos} trailing bytes after raster")
    arr = np.frombuffer(raw, dtype=dtype).astype(np.float32)
    shape = (h, w) if channels == 1 else (h, w, 3)
    return arr.reshape(shape)[::-1].copy()
