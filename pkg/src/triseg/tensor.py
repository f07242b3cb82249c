"""Rank-3 (height, width, channels) tensor contract on top of numpy.

Arrays are kept in row-major (y, x, c) order with channels innermost so
per-pixel channel access stays contiguous for concatenation-heavy models.
All public operations validate shapes, bounds and finiteness; numpy's
silent negative-index wrapping is rejected.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Shape:
    height: int
    width: int
    channels: int

    def __post_init__(self):
        for name in ("height", "width", "channels"):
            v = getattr(self, name)
            if not isinstance(v, (int, np.integer)) or v <= 0:
                raise ValueError(f"{name} must be a positive integer, got {v!r}")

    @property
    def size(self) -> int:
        return self.height * self.width * self.channels


def shape_of(t: np.ndarray) -> Shape:
    require_rank3(t)
    return Shape(*t.shape)


def require_rank3(t: np.ndarray):
    if not isinstance(t, np.ndarray) or t.ndim != 3:
        raise ValueError(f"expected a rank-3 (h, w, c) array, got {getattr(t, 'shape', None)}")


def require_finite(t: np.ndarray):
    if not np.all(np.isfinite(t)):
        raise ValueError("tensor contains non-finite values")


def new(shape: Shape, fill: float = 0.0, dtype=np.float32) -> np.ndarray:
    if not np.isfinite(fill):
        raise ValueError("fill value must be finite")
    return np.full((shape.height, shape.width, shape.channels), fill, dtype=dtype)


def _check_index(t, y, x, c):
    require_rank3(t)
    h, w, ch = t.shape
    if not (0 <= y < h and 0 <= x < w and 0 <= c < ch):
        raise IndexError(f"index (y={y}, x={x}, c={c}) out of bounds for shape {t.shape}")


def get(t: np.ndarray, y: int, x: int, c: int) -> float:
    _check_index(t, y, x, c)
    return float(t[y, x, c])


def set_value(t: np.ndarray, y: int, x: int, c: int, v: float) -> np.ndarray:
    """Return a copy of `t` with element (y, x, c) replaced by `v`."""
    _check_index(t, y, x, c)
    if not np.isfinite(v):
        raise ValueError("value must be finite")
    out = t.copy()
    out[y, x, c] = v
    return out


def tmap(t: np.ndarray, f) -> np.ndarray:
    require_rank3(t)
    require_finite(t)
    out = np.asarray(f(t), dtype=t.dtype)
    if out.shape != t.shape:
        out = np.vectorize(f)(t).astype(t.dtype)
    require_finite(out)
    return out


def tzip(a: np.ndarray, b: np.ndarray, f) -> np.ndarray:
    require_rank3(a)
    require_rank3(b)
    if a.shape != b.shape:
        raise ValueError(f"zip shape mismatch: {a.shape} vs {b.shape}")
    require_finite(a)
    require_finite(b)
    out = np.asarray(f(a, b), dtype=a.dtype)
    if out.shape != a.shape:
        out = np.vectorize(f)(a, b).astype(a.dtype)
    require_finite(out)
    return out


def concat_channels(parts: list[np.ndarray]) -> np.ndarray:
    if not parts:
        raise ValueError("concat_channels requires a non-empty list")
    for p in parts:
        require_rank3(p)
    hw = {(p.shape[0], p.shape[1]) for p in parts}
    if len(hw) != 1:
        raise ValueError(f"spatial dimensions differ across parts: {sorted(hw)}")
    return np.concatenate(parts, axis=2)
