"""Compare the numba and numpy kernel backends.

Times the hot kernels (conv forward/backward, maxpool) and a full-model
forward+backward at production geometry, then prints a table.

    python3 benchmarks/bench_backends.py [--repeats N]
"""

import argparse
import os
import time

import numpy as np


def timeit(fn, repeats):
    fn()  # warm-up (jit compile / cache touch)
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def benchmarks():
    from triseg import layers as L
    from triseg.layers import ConvParams
    from triseg.model import build

    rng = np.random.default_rng(0)
    x95 = rng.standard_normal((100, 100, 95)).astype(np.float32)
    p_decoder = ConvParams.init(5, 7, 7, 95, rng)
    x1 = rng.standard_normal((100, 100, 1)).astype(np.float32)
    p_entry = ConvParams.init(25, 9, 9, 1, rng)
    net = build(0)
    img = rng.random((100, 100, 1)).astype(np.float32)

    def conv_entry():
        L.conv2d_forward(x1, p_entry)

    def conv_decoder_fwd_bwd():
        out, io = L.conv2d_forward(x95, p_decoder)
        L.conv2d_backward(io, p_decoder, np.ones_like(out))

    def pool():
        L.maxpool2x2_forward(x95)

    def model_fwd_bwd():
        probs, trace = net.forward(img)
        net.backward(trace, np.ones_like(probs) / probs.size, from_logits=True)

    return [
        ("conv 25@9x9 on 100x100x1 (forward)", conv_entry),
        ("conv 5@7x7 on 100x100x95 (fwd+bwd)", conv_decoder_fwd_bwd),
        ("maxpool 2x2 on 100x100x95", pool),
        ("full model forward+backward", model_fwd_bwd),
    ]


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--repeats", type=int, default=5)
    args = parser.parse_args()

    results = {}
    for backend in ("numpy", "numba"):
        os.environ["TRISEG_BACKEND"] = backend
        for name, fn in benchmarks():
            results.setdefault(name, {})[backend] = timeit(fn, args.repeats)

    width = max(len(n) for n in results) + 2
    print(f"{'kernel':<{width}}{'numpy':>12}{'numba':>12}{'speedup':>10}")
    for name, t in results.items():
        ratio = t["numpy"] / t["numba"]
        print(f"{name:<{width}}{t['numpy'] * 1e3:>10.2f}ms{t['numba'] * 1e3:>10.2f}ms"
              f"{ratio:>9.2f}x")


if __name__ == "__main__":
    main()
