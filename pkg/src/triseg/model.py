"""Three-branch multi-resolution segmentation network.

Branch 1: conv 25@9x9.
Branch 2: conv 45@4x4 -> maxpool 2x2 -> conv 35@3x3 -> zero-upsample x2.
Branch 3: conv 35@2x2 -> maxpool 2x2 -> conv 50@2x2 -> maxpool 2x2
          -> conv 35@2x2 -> zero-upsample x4.
The branch outputs (25+35+35 = 95 channels at full resolution) are
concatenated in order 1,2,3 and decoded by two stride-1 transposed
convolutions (5@7x7, 7@7x7) and a final 1-filter 5x5 convolution with a
sigmoid producing a probability mask.

Hidden activations are relu; the production input size is 100x100x1, with
a geometry hook (any size divisible by 4) for small gradient checks.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import layers as L
from . import tensor
from .layers import ConvParams, LayerIO


class _Conv:
    kind = "conv"

    def __init__(self, params: ConvParams, activation: str | None = "relu"):
        self.params = params
        self.activation = activation

    def descriptor(self):
        p = self.params
        act = self.activation or "linear"
        return f"conv:{p.filters}x{p.kernel_h}x{p.kernel_w}x{p.in_channels}:{act}"

    def forward(self, x):
        out, io = L.conv2d_forward(x, self.params)
        if self.activation:
            out, act_io = L.activation_forward(out, self.activation)
            io = LayerIO(io.input, out, aux=(io, act_io))
        return out, io

    def backward(self, io, g):
        if self.activation:
            conv_io, act_io = io.aux
            g = L.activation_backward(act_io, g, self.activation)
            return L.conv2d_backward(conv_io, self.params, g)
        return L.conv2d_backward(io, self.params, g)


class _ConvTranspose:
    kind = "convT"

    def __init__(self, params: ConvParams, target: int, activation: str | None = "relu"):
        self.params = params
        self.target = target
        self.activation = activation

    def descriptor(self):
        p = self.params
        act = self.activation or "linear"
        return f"convT:{p.filters}x{p.kernel_h}x{p.kernel_w}x{p.in_channels}@{self.target}:{act}"

    def forward(self, x):
        out, io = L.conv2d_transpose_forward(x, self.params, self.target, self.target)
        if self.activation:
            out, act_io = L.activation_forward(out, self.activation)
            io = LayerIO(io.input, out, aux=(io, act_io))
        return out, io

    def backward(self, io, g):
        if self.activation:
            conv_io, act_io = io.aux
            g = L.activation_backward(act_io, g, self.activation)
            return L.conv2d_transpose_backward(conv_io, self.params, g)
        return L.conv2d_transpose_backward(io, self.params, g)


class _MaxPool:
    kind = "pool"
    params = None

    def descriptor(self):
        return "maxpool:2x2"

    def forward(self, x):
        out, idx = L.maxpool2x2_forward(x)
        return out, LayerIO(x, out, aux=idx)

    def backward(self, io, g):
        return L.maxpool2x2_backward(io.aux, g), None


class _Upsample:
    kind = "upsample"
    params = None

    def __init__(self, factor):
        self.factor = factor

    def descriptor(self):
        return f"upsample:{self.factor}"

    def forward(self, x):
        out = L.zero_upsample(x, self.factor)
        return out, LayerIO(x, out)

    def backward(self, io, g):
        return L.zero_upsample_backward(g, self.factor), None


@dataclass
class ForwardTrace:
    """Per-layer caches from one forward pass, in evaluation order."""

    branch_ios: list  # one list of LayerIO per branch
    branch_outputs: list
    concat: np.ndarray
    decoder_ios: list
    output: np.ndarray


class TriChannelNet:
    def __init__(self, seed: int, input_size: int = 100, dtype=np.float32):
        if input_size < 4 or input_size % 4:
            raise ValueError("input_size must be a positive multiple of 4")
        self.input_size = input_size
        self.dtype = dtype
        rng = np.random.default_rng(seed)

        def conv(f, k, cin, act="relu"):
            return _Conv(ConvParams.init(f, k, k, cin, rng, dtype), act)

        s = input_size
        self.branches = [
            [conv(25, 9, 1)],
            [conv(45, 4, 1), _MaxPool(), conv(35, 3, 45), _Upsample(2)],
            [conv(35, 2, 1), _MaxPool(), conv(50, 2, 35), _MaxPool(),
             conv(35, 2, 50), _Upsample(4)],
        ]
        self.decoder = [
            _ConvTranspose(ConvParams.init(5, 7, 7, 95, rng, dtype), s),
            _ConvTranspose(ConvParams.init(7, 7, 7, 5, rng, dtype), s),
            _Conv(ConvParams.init(1, 5, 5, 7, rng, dtype), activation="sigmoid"),
        ]

    # -- parameter access -------------------------------------------------

    def param_layers(self):
        out = []
        for branch in self.branches:
            out.extend(l for l in branch if l.params is not None)
        out.extend(l for l in self.decoder if l.params is not None)
        return out

    def parameters(self):
        """Flat ordered list of parameter buffers (weights, bias, ...)."""
        bufs = []
        for layer in self.param_layers():
            bufs.append(layer.params.weights)
            bufs.append(layer.params.bias)
        return bufs

    def parameter_count(self):
        return sum(b.size for b in self.parameters())

    def fingerprint(self) -> str:
        parts = [f"input:{self.input_size}x{self.input_size}x1"]
        for i, branch in enumerate(self.branches, start=1):
            parts.append(f"branch{i}=" + ",".join(l.descriptor() for l in branch))
        parts.append("decoder=" + ",".join(l.descriptor() for l in self.decoder))
        return ";".join(parts)

    # -- forward / backward ------------------------------------------------

    def forward(self, image: np.ndarray) -> tuple[np.ndarray, ForwardTrace]:
        s = self.input_size
        if image.shape != (s, s, 1):
            raise ValueError(f"expected input shape {(s, s, 1)}, got {image.shape}")
        tensor.require_finite(image)
        image = image.astype(self.dtype, copy=False)

        branch_ios, branch_outputs = [], []
        for branch in self.branches:
            x, ios = image, []
            for layer in branch:
                x, io = layer.forward(x)
                ios.append(io)
            branch_ios.append(ios)
            branch_outputs.append(x)

        cat = tensor.concat_channels(branch_outputs)
        x, decoder_ios = cat, []
        for layer in self.decoder:
            x, io = layer.forward(x)
            decoder_ios.append(io)
        return x, ForwardTrace(branch_ios, branch_outputs, cat, decoder_ios, x)

    def backward(self, trace: ForwardTrace, grad_out: np.ndarray, *, from_logits=False):
        """Gradients of sum(grad_out * output) w.r.t. every parameter buffer.

        With from_logits=True, grad_out is taken w.r.t. the final
        pre-sigmoid map (the numerically stable path for bce training).

        Returns a list of (grad_weights, grad_bias) aligned with
        param_layers().
        """
        if grad_out.shape != trace.output.shape:
            raise ValueError(f"grad_out shape {grad_out.shape} != output {trace.output.shape}")
        grads = {}

        g = grad_out.astype(trace.output.dtype, copy=False)
        for layer, io in zip(reversed(self.decoder), reversed(trace.decoder_ios)):
            if from_logits and layer is self.decoder[-1]:
                conv_io, _ = io.aux
                g, pg = L.conv2d_backward(conv_io, layer.params, g)
            else:
                g, pg = layer.backward(io, g)
            if pg is not None:
                grads[id(layer)] = pg

        # split the concatenation gradient back into branch gradients
        offsets = np.cumsum([0] + [o.shape[2] for o in trace.branch_outputs])
        for branch, ios, lo, hi in zip(self.branches, trace.branch_ios,
                                       offsets[:-1], offsets[1:]):
            gb = np.ascontiguousarray(g[:, :, lo:hi])
            for layer, io in zip(reversed(branch), reversed(ios)):
                gb, pg = layer.backward(io, gb)
                if pg is not None:
                    grads[id(layer)] = pg

        return [grads[id(layer)] for layer in self.param_layers()]

    def apply_update(self, gradients, optimizer):
        """Apply one optimizer step; `gradients` aligns with param_layers()."""
        layers_ = self.param_layers()
        if len(gradients) != len(layers_):
            raise ValueError("gradient list does not match parameter layers")
        flat_params, flat_grads = [], []
        for layer, (gw, gb) in zip(layers_, gradients):
            if gw.shape != layer.params.weights.shape or gb.shape != layer.params.bias.shape:
                raise ValueError("gradient shape mismatch")
            flat_params += [layer.params.weights, layer.params.bias]
            flat_grads += [gw, gb]
        optimizer.step(flat_params, flat_grads)


def build(seed: int, input_size: int = 100, dtype=np.float32) -> TriChannelNet:
    return TriChannelNet(seed, input_size, dtype)
