"""Pure-numpy kernel backend (stride-trick windows + tensordot)."""

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def _windows(x, kh, kw, pad_top, pad_left, out_h, out_w):
    """View of kernel-sized windows, one per output cell.

    Window for output (y, x) covers source rows y+dy-pad_top, dy in [0, kh),
    and likewise for columns. Out-of-image positions read zero. Negative
    pads (crop-side geometry of transposed conv) are allowed.
    """
    h, w, _ = x.shape
    top = max(pad_top, 0)
    left = max(pad_left, 0)
    bottom = max(0, out_h + kh - 1 - pad_top - h)
    right = max(0, out_w + kw - 1 - pad_left - w)
    xp = np.pad(x, ((top, bottom), (left, right), (0, 0)))
    win = sliding_window_view(xp, (kh, kw), axis=(0, 1))  # (Y, X, C, kh, kw)
    sy = max(-pad_top, 0)
    sx = max(-pad_left, 0)
    return win[sy:sy + out_h, sx:sx + out_w]


def conv2d_core(x, w, pad_top, pad_left, out_h, out_w):
    """out(y,x,f) = sum_{dy,dx,c} w[f,dy,dx,c] * x(y+dy-pad_top, x+dx-pad_left, c)."""
    kh, kw = w.shape[1], w.shape[2]
    win = _windows(x, kh, kw, pad_top, pad_left, out_h, out_w)
    return np.tensordot(win, w, axes=((3, 4, 2), (1, 2, 3)))


def conv2d_grad_w(x, g, pad_top, pad_left, kh, kw):
    """gw[f,dy,dx,c] = sum_{y,x} g(y,x,f) * x(y+dy-pad_top, x+dx-pad_left, c)."""
    out_h, out_w, _ = g.shape
    win = _windows(x, kh, kw, pad_top, pad_left, out_h, out_w)
    return np.einsum("yxf,yxcde->fdec", g, win, optimize=True)


def maxpool2x2(x):
    """Disjoint 2x2 max pooling; returns (pooled, codes).

    codes[y,x,c] in {0..3} is the argmax position in row-major window
    order (0,0),(0,1),(1,0),(1,1); ties take the first.
    """
    h, w, c = x.shape
    win = x.reshape(h // 2, 2, w // 2, 2, c).transpose(0, 2, 1, 3, 4)
    win = win.reshape(h // 2, w // 2, 4, c)
    codes = win.argmax(axis=2).astype(np.uint8)
    out = np.take_along_axis(win, codes[:, :, None, :].astype(np.intp), axis=2)[:, :, 0, :]
    return out, codes


def maxpool2x2_grad(codes, g):
    """Route each pooled gradient to its recorded argmax position."""
    h2, w2, c = g.shape
    buf = np.zeros((h2, w2, 4, c), dtype=g.dtype)
    np.put_along_axis(buf, codes[:, :, None, :].astype(np.intp), g[:, :, None, :], axis=2)
    return buf.reshape(h2, w2, 2, 2, c).transpose(0, 2, 1, 3, 4).reshape(h2 * 2, w2 * 2, c)
