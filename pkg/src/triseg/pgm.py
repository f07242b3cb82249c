"""Binary PGM (P5) and PPM (P6) readers/writers.

8-bit and 16-bit grayscale are supported; 16-bit samples are big-endian
per the netpbm convention. Writers emit a fixed header layout so repeated
runs are byte-identical.
"""

from __future__ import annotations

import numpy as np


class PnmError(ValueError):
    pass


def _read_tokens(data: bytes, count: int):
    """Read `count` whitespace/comment-separated header tokens; return
    (tokens, offset just past the single whitespace after the last one)."""
    tokens = []
    i = 0
    while len(tokens) < count:
        if i >= len(data):
            raise PnmError("truncated header")
        ch = data[i:i + 1]
        if ch == b"#":
            while i < len(data) and data[i:i + 1] != b"\n":
                i += 1
        elif ch.isspace():
            i += 1
        else:
            j = i
            while j < len(data) and not data[j:j + 1].isspace() and data[j:j + 1] != b"#":
                j += 1
            tokens.append(data[i:j])
            i = j
    if i >= len(data) or not data[i:i + 1].isspace():
        raise PnmError("malformed header")
    return tokens, i + 1


def _read_pnm(path, magic: bytes, channels: int):
    with open(path, "rb") as fh:
        data = fh.read()
    tokens, offset = _read_tokens(data, 4)
    if tokens[0] != magic:
        raise PnmError(f"{path}: expected {magic.decode()} file, got {tokens[0]!r}")
    try:
        width, height, maxval = (int(t) for t in tokens[1:])
    except ValueError as e:
        raise PnmError(f"{path}: malformed header") from e
    if width <= 0 or height <= 0 or not (0 < maxval < 65536):
        raise PnmError(f"{path}: invalid dimensions or maxval")
    dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
    n = height * width * channels
    raster = data[offset:offset + n * dtype.itemsize]
    if len(raster) < n * dtype.itemsize:
        raise PnmError(f"{path}: truncated raster")
    arr = np.frombuffer(raster, dtype=dtype).reshape(height, width, channels)
    return arr.astype(np.uint16 if maxval > 255 else np.uint8), maxval


def read_pgm(path):
    """Read a binary PGM; returns (array (h, w), maxval)."""
    arr, maxval = _read_pnm(path, b"P5", 1)
    return arr[:, :, 0], maxval


def read_pgm_normalized(path) -> np.ndarray:
    """Read a binary PGM scaled to float32 in [0, 1], shape (h, w, 1)."""
    arr, maxval = read_pgm(path)
    return (arr.astype(np.float32) / maxval)[:, :, None]


def write_pgm(path, values: np.ndarray, maxval: int = 255):
    """Write values in [0, 1] (shape (h, w) or (h, w, 1)) as binary PGM."""
    if values.ndim == 3:
        if values.shape[2] != 1:
            raise PnmError("PGM output requires a single channel")
        values = values[:, :, 0]
    if values.ndim != 2:
        raise PnmError("PGM output requires a 2-D image")
    if not (0 < maxval < 65536):
        raise PnmError("maxval out of range")
    q = np.rint(np.clip(values, 0.0, 1.0).astype(np.float64) * maxval)
    dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
    h, w = values.shape
    with open(path, "wb") as fh:
        fh.write(b"P5\n%d %d\n%d\n" % (w, h, maxval))
        fh.write(q.astype(dtype).tobytes())


def write_ppm(path, rgb: np.ndarray):
    """Write an (h, w, 3) uint8 array as binary PPM."""
    if rgb.ndim != 3 or rgb.shape[2] != 3 or rgb.dtype != np.uint8:
        raise PnmError("PPM output requires an (h, w, 3) uint8 array")
    h, w, _ = rgb.shape
    with open(path, "wb") as fh:
        fh.write(b"P6\n%d %d\n255\n" % (w, h))
        fh.write(rgb.tobytes())


def read_ppm(path):
    """Read a binary PPM; returns an (h, w, 3) uint8 array."""
    arr, maxval = _read_pnm(path, b"P6", 3)
    if maxval != 255:
        raise PnmError(f"{path}: only 8-bit PPM supported")
    return arr.astype(np.uint8)
