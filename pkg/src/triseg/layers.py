"""Differentiable layer primitives: stride-1 convolution (same padding),
2x2 max pooling with argmax routing, zero-insertion upsampling, stride-1
transposed convolution (exact adjoint of the forward convolution), and
relu/sigmoid activations. Each primitive has a forward and an exact
analytic backward; heavy lifting dispatches to the selected kernel
backend.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels


@dataclass
class ConvParams:
    """Weights (filters, kh, kw, in_channels) and per-filter bias."""

    weights: np.ndarray
    bias: np.ndarray

    def __post_init__(self):
        if self.weights.ndim != 4:
            raise ValueError("weights must have shape (filters, kh, kw, in_channels)")
        if self.bias.shape != (self.weights.shape[0],):
            raise ValueError("bias length must equal filter count")

    @property
    def filters(self) -> int:
        return self.weights.shape[0]

    @property
    def kernel_h(self) -> int:
        return self.weights.shape[1]

    @property
    def kernel_w(self) -> int:
        return self.weights.shape[2]

    @property
    def in_channels(self) -> int:
        return self.weights.shape[3]

    @classmethod
    def init(cls, filters, kernel_h, kernel_w, in_channels, rng, dtype=np.float32):
        """Fan-balanced uniform init in +-sqrt(6/(fan_in+fan_out)), zero bias."""
        fan_in = kernel_h * kernel_w * in_channels
        fan_out = kernel_h * kernel_w * filters
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        w = rng.uniform(-limit, limit, size=(filters, kernel_h, kernel_w, in_channels))
        return cls(w.astype(dtype), np.zeros(filters, dtype=dtype))

    @classmethod
    def zeros(cls, filters, kernel_h, kernel_w, in_channels, dtype=np.float32):
        return cls(np.zeros((filters, kernel_h, kernel_w, in_channels), dtype=dtype),
                   np.zeros(filters, dtype=dtype))


@dataclass
class PoolIndices:
    """Argmax bookkeeping for 2x2 pooling: codes[y,x,c] in {0..3} encodes
    the winning in-window offset in row-major order."""

    codes: np.ndarray

    def window_offset(self, y, x, c):
        code = int(self.codes[y, x, c])
        return code // 2, code % 2


@dataclass
class LayerIO:
    """Forward cache consumed by the matching backward call."""

    input: np.ndarray
    output: np.ndarray
    aux: object = field(default=None)


def _same_pads(kh, kw):
    # extra zero row/column goes to the bottom/right for even kernels
    return (kh - 1) // 2, (kw - 1) // 2


def _check_channels(x, p: ConvParams):
    if x.shape[2] != p.in_channels:
        raise ValueError(f"input has {x.shape[2]} channels, params expect {p.in_channels}")


def conv2d_forward(x: np.ndarray, p: ConvParams) -> tuple[np.ndarray, LayerIO]:
    """Stride-1 same-padded convolution; output (h, w, filters)."""
    _check_channels(x, p)
    pt, pl = _same_pads(p.kernel_h, p.kernel_w)
    k = kernels.get()
    out = k.conv2d_core(x, p.weights, pt, pl, x.shape[0], x.shape[1])
    out += p.bias
    return out, LayerIO(x, out)


def conv2d_backward(io: LayerIO, p: ConvParams, grad_out: np.ndarray):
    if grad_out.shape != io.output.shape:
        raise ValueError(f"grad_out shape {grad_out.shape} != output shape {io.output.shape}")
    pt, pl = _same_pads(p.kernel_h, p.kernel_w)
    k = kernels.get()
    grad_b = grad_out.sum(axis=(0, 1))
    grad_w = k.conv2d_grad_w(io.input, grad_out, pt, pl, p.kernel_h, p.kernel_w)
    # input gradient is a correlation with the spatially flipped,
    # channel-transposed kernel and complementary padding
    w_flip = np.ascontiguousarray(p.weights[:, ::-1, ::-1, :].transpose(3, 1, 2, 0))
    grad_in = k.conv2d_core(grad_out, w_flip, p.kernel_h - 1 - pt, p.kernel_w - 1 - pl,
                            io.input.shape[0], io.input.shape[1])
    return grad_in, (grad_w, grad_b)


def maxpool2x2_forward(x: np.ndarray) -> tuple[np.ndarray, PoolIndices]:
    h, w, _ = x.shape
    if h % 2 or w % 2:
        raise ValueError(f"maxpool2x2 requires even spatial dims, got {h}x{w}")
    out, codes = kernels.get().maxpool2x2(x)
    return out, PoolIndices(codes)


def maxpool2x2_backward(indices: PoolIndices, grad_out: np.ndarray) -> np.ndarray:
    if grad_out.shape != indices.codes.shape:
        raise ValueError(f"grad_out shape {grad_out.shape} != pooled shape {indices.codes.shape}")
    return kernels.get().maxpool2x2_grad(indices.codes, grad_out)


def zero_upsample(x: np.ndarray, factor: int) -> np.ndarray:
    """Zero-insertion upsampling: values land at stride-`factor` grid points."""
    if factor not in (2, 4):
        raise ValueError(f"unsupported upsampling factor {factor}")
    h, w, c = x.shape
    out = np.zeros((h * factor, w * factor, c), dtype=x.dtype)
    out[::factor, ::factor] = x
    return out


def zero_upsample_backward(grad_out: np.ndarray, factor: int) -> np.ndarray:
    if factor not in (2, 4):
        raise ValueError(f"unsupported upsampling factor {factor}")
    h, w, _ = grad_out.shape
    if h % factor or w % factor:
        raise ValueError(f"grad_out dims {h}x{w} not divisible by factor {factor}")
    return np.ascontiguousarray(grad_out[::factor, ::factor])


def _transpose_offsets(h, w, kh, kw, target_h, target_w):
    """Center-crop (or center-pad) offsets of the full scatter output."""
    def off(full, tgt):
        return (full - tgt) // 2 if full >= tgt else -((tgt - full) // 2)
    return off(h + kh - 1, target_h), off(w + kw - 1, target_w)


def conv2d_transpose_forward(x, p: ConvParams, target_h, target_w):
    """Stride-1 full transposed convolution, center-cropped/padded to target.

    Exact adjoint of conv2d_forward: with conv weights transposed
    (c <-> f) here and target == the conv input size,
    <conv(x), y> == <x, convT(y)>.
    """
    _check_channels(x, p)
    if target_h < 1 or target_w < 1:
        raise ValueError("target must be at least 1x1")
    kh, kw = p.kernel_h, p.kernel_w
    oy, ox = _transpose_offsets(x.shape[0], x.shape[1], kh, kw, target_h, target_w)
    w_flip = np.ascontiguousarray(p.weights[:, ::-1, ::-1, :])
    out = kernels.get().conv2d_core(x, w_flip, kh - 1 - oy, kw - 1 - ox, target_h, target_w)
    out += p.bias
    return out, LayerIO(x, out)


def conv2d_transpose_backward(io: LayerIO, p: ConvParams, grad_out: np.ndarray):
    if grad_out.shape != io.output.shape:
        raise ValueError(f"grad_out shape {grad_out.shape} != output shape {io.output.shape}")
    kh, kw = p.kernel_h, p.kernel_w
    x = io.input
    oy, ox = _transpose_offsets(x.shape[0], x.shape[1], kh, kw,
                                grad_out.shape[0], grad_out.shape[1])
    k = kernels.get()
    grad_b = grad_out.sum(axis=(0, 1))
    w_t = np.ascontiguousarray(p.weights.transpose(3, 1, 2, 0))
    grad_in = k.conv2d_core(grad_out, w_t, oy, ox, x.shape[0], x.shape[1])
    gw = k.conv2d_grad_w(grad_out, x, oy, ox, kh, kw)  # (in_c, kh, kw, filters)
    grad_w = np.ascontiguousarray(gw.transpose(3, 1, 2, 0))
    return grad_in, (grad_w, grad_b)


def relu(x: np.ndarray) -> tuple[np.ndarray, LayerIO]:
    out = np.maximum(x, 0)
    return out, LayerIO(x, out)


def relu_backward(io: LayerIO, grad_out: np.ndarray) -> np.ndarray:
    return grad_out * (io.input > 0)


def sigmoid(x: np.ndarray) -> tuple[np.ndarray, LayerIO]:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    # keep the output strictly inside (0, 1) even when saturated
    one = x.dtype.type(1)
    np.clip(out, np.finfo(x.dtype).tiny, np.nextafter(one, x.dtype.type(0)), out=out)
    return out, LayerIO(x, out)


def sigmoid_backward(io: LayerIO, grad_out: np.ndarray) -> np.ndarray:
    s = io.output
    return grad_out * s * (1.0 - s)


def activation_forward(x, kind: str):
    if kind == "relu":
        return relu(x)
    if kind == "sigmoid":
        return sigmoid(x)
    raise ValueError(f"unknown activation {kind!r}")


def activation_backward(io, grad_out, kind: str):
    if kind == "relu":
        return relu_backward(io, grad_out)
    if kind == "sigmoid":
        return sigmoid_backward(io, grad_out)
    raise ValueError(f"unknown activation {kind!r}")
