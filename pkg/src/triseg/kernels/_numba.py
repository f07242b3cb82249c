"""Numba kernel backend: jit-compiled im2col feeding BLAS matmul."""

import numpy as np
from numba import njit


@njit(cache=True)
def _im2col(x, kh, kw, pad_top, pad_left, out_h, out_w):
    h, w, c = x.shape
    cols = np.zeros((out_h * out_w, kh * kw * c), dtype=x.dtype)
    for y in range(out_h):
        for xx in range(out_w):
            row = y * out_w + xx
            for dy in range(kh):
                sy = y + dy - pad_top
                if sy < 0 or sy >= h:
                    continue
                for dx in range(kw):
                    sx = xx + dx - pad_left
                    if sx < 0 or sx >= w:
                        continue
                    base = (dy * kw + dx) * c
                    for ch in range(c):
                        cols[row, base + ch] = x[sy, sx, ch]
    return cols


@njit(cache=True)
def conv2d_core(x, w, pad_top, pad_left, out_h, out_w):
    f, kh, kw, c = w.shape
    cols = _im2col(x, kh, kw, pad_top, pad_left, out_h, out_w)
    wmat = np.ascontiguousarray(w.reshape(f, kh * kw * c).T)
    out = np.dot(cols, wmat)
    return out.reshape(out_h, out_w, f)


@njit(cache=True)
def conv2d_grad_w(x, g, pad_top, pad_left, kh, kw):
    out_h, out_w, f = g.shape
    c = x.shape[2]
    cols = _im2col(x, kh, kw, pad_top, pad_left, out_h, out_w)
    gmat = np.ascontiguousarray(g.reshape(out_h * out_w, f))
    gw = np.dot(cols.T, gmat)  # (kh*kw*c, f)
    return np.ascontiguousarray(gw.T).reshape(f, kh, kw, c)


@njit(cache=True)
def maxpool2x2(x):
    h, w, c = x.shape
    h2, w2 = h // 2, w // 2
    out = np.empty((h2, w2, c), dtype=x.dtype)
    codes = np.zeros((h2, w2, c), dtype=np.uint8)
    for y in range(h2):
        for xx in range(w2):
            for ch in range(c):
                best = x[2 * y, 2 * xx, ch]
                code = 0
                k = 0
                for dy in range(2):
                    for dx in range(2):
                        v = x[2 * y + dy, 2 * xx + dx, ch]
                        if v > best:  # strict: first max wins ties
                            best = v
                            code = k
                        k += 1
                out[y, xx, ch] = best
                codes[y, xx, ch] = code
    return out, codes


@njit(cache=True)
def maxpool2x2_grad(codes, g):
    h2, w2, c = g.shape
    out = np.zeros((h2 * 2, w2 * 2, c), dtype=g.dtype)
    for y in range(h2):
        for xx in range(w2):
            for ch in range(c):
                code = codes[y, xx, ch]
                out[2 * y + code // 2, 2 * xx + code % 2, ch] = g[y, xx, ch]
    return out
