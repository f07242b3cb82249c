"""Acceptance gate: one test per criterion, each printing a PASS line.

Run with `pytest tests/test_acceptance.py -v -s`. The desk-scale training
criterion performs a real 40-sample training run and dominates runtime.
"""

import time

import numpy as np
import pytest

from triseg import cli
from triseg import data as D
from triseg import layers as L
from triseg import metrics as M
from triseg import tensor
from triseg import train as T
from triseg.layers import ConvParams
from triseg.model import build
from triseg.tensor import Shape

from gradcheck import max_rel_error
from test_layers import brute_force_conv
from test_metrics import recount_overlay

GRAD_TOL = 1e-4
NET_GRAD_TOL = 1e-3
STEP = 1e-5


def _report(num, label):
    print(f"\nACCEPTANCE {num}: PASS - {label}")


def _fd(loss, buf, idx, step=STEP):
    orig = buf[idx]
    buf[idx] = orig + step
    lp = loss()
    buf[idx] = orig - step
    lm = loss()
    buf[idx] = orig
    return (lp - lm) / (2 * step)


def _check_all(loss, buf, analytic, tol=GRAD_TOL):
    for idx in np.ndindex(buf.shape):
        num = _fd(loss, buf, idx)
        assert max_rel_error(np.array(analytic[idx]), np.array(num)) < tol


def test_criterion_1_gradient_correctness():
    start = time.perf_counter()
    n_instances = 100

    for seed in range(n_instances):
        r = np.random.default_rng(seed)

        # conv
        x = r.standard_normal((4, 4, 2))
        p = ConvParams(r.standard_normal((2, 3, 3, 2)), r.standard_normal(2))
        out, io = L.conv2d_forward(x, p)
        g = r.standard_normal(out.shape)
        gin, (gw, gb) = L.conv2d_backward(io, p, g)
        _check_all(lambda: float((L.conv2d_forward(x, p)[0] * g).sum()), x, gin)
        _check_all(lambda: float((L.conv2d_forward(x, p)[0] * g).sum()), p.weights, gw)
        _check_all(lambda: float((L.conv2d_forward(x, p)[0] * g).sum()), p.bias, gb)

        # transposed conv
        tx = r.standard_normal((3, 3, 2))
        tp = ConvParams(r.standard_normal((2, 3, 3, 2)), r.standard_normal(2))
        tout, tio = L.conv2d_transpose_forward(tx, tp, 5, 5)
        tg = r.standard_normal(tout.shape)
        tgin, (tgw, tgb) = L.conv2d_transpose_backward(tio, tp, tg)
        tl = lambda: float((L.conv2d_transpose_forward(tx, tp, 5, 5)[0] * tg).sum())
        _check_all(tl, tx, tgin)
        _check_all(tl, tp.weights, tgw)
        _check_all(tl, tp.bias, tgb)

        # maxpool (tie-free input: a shuffled integer grid)
        mx = r.permutation(np.arange(4 * 4 * 2, dtype=np.float64)).reshape(4, 4, 2)
        _, idx = L.maxpool2x2_forward(mx)
        mg = r.standard_normal((2, 2, 2))
        mgin = L.maxpool2x2_backward(idx, mg)
        _check_all(lambda: float((L.maxpool2x2_forward(mx)[0] * mg).sum()), mx, mgin)

        # zero upsample
        ux = r.standard_normal((2, 3, 2))
        ug = r.standard_normal((4, 6, 2))
        ugin = L.zero_upsample_backward(ug, 2)
        _check_all(lambda: float((L.zero_upsample(ux, 2) * ug).sum()), ux, ugin)

        # activations (relu off the kink)
        for kind in ("relu", "sigmoid"):
            ax = r.standard_normal((3, 3, 2))
            ax[np.abs(ax) < 0.05] = 0.1
            aout, aio = L.activation_forward(ax, kind)
            ag = r.standard_normal(aout.shape)
            agin = L.activation_backward(aio, ag, kind)
            _check_all(lambda: float((L.activation_forward(ax, kind)[0] * ag).sum()),
                       ax, agin)

    # whole reduced-geometry network
    r = np.random.default_rng(7)
    net = build(7, input_size=12, dtype=np.float64)
    img = r.random((12, 12, 1))
    target = (r.random((12, 12, 1)) > 0.5).astype(np.float64)

    def net_loss():
        probs, _ = net.forward(img)
        return T.bce_loss(probs, target)[0]

    probs, trace = net.forward(img)
    _, grad_pred = T.bce_loss(probs, target)
    grads = net.backward(trace, grad_pred)
    checked = 0
    for (gw, gb), layer in zip(grads, net.param_layers()):
        for analytic, buf in ((gw, layer.params.weights), (gb, layer.params.bias)):
            picks = r.choice(buf.size, size=min(4, buf.size), replace=False)
            for fi in picks:
                idx = np.unravel_index(fi, buf.shape)
                n1 = _fd(net_loss, buf, idx)
                n2 = _fd(net_loss, buf, idx, step=STEP / 2)
                if max_rel_error(np.array(n1), np.array(n2)) > 1e-4:
                    continue  # kink/tie crossed within the step: excluded
                assert max_rel_error(np.array(analytic[idx]), np.array(n1)) < NET_GRAD_TOL
                checked += 1
    assert checked > 40

    elapsed = time.perf_counter() - start
    assert elapsed < 120
    _report(1, f"layer + whole-net gradient checks ({n_instances} instances/layer, "
               f"{elapsed:.1f}s)")


def test_criterion_2_convolution_oracle():
    start = time.perf_counter()
    for seed in range(500):
        r = np.random.default_rng(seed)
        h, w = r.integers(1, 9, size=2)
        c = int(r.integers(1, 4))
        f = int(r.integers(1, 5))
        kh, kw = (int(v) for v in r.integers(1, 5, size=2))
        x = r.standard_normal((h, w, c))
        p = ConvParams(r.standard_normal((f, kh, kw, c)), r.standard_normal(f))
        out, _ = L.conv2d_forward(x, p)
        np.testing.assert_allclose(out, brute_force_conv(x, p.weights, p.bias),
                                   atol=1e-6)
    elapsed = time.perf_counter() - start
    assert elapsed < 30
    _report(2, f"conv2d matches brute-force oracle on 500 instances ({elapsed:.1f}s)")


def test_criterion_3_shape_audit():
    start = time.perf_counter()
    net = build(0)
    img = np.random.default_rng(0).random((100, 100, 1)).astype(np.float32)
    _, trace = net.forward(img)
    expected_branches = [
        [(100, 100, 25)],
        [(100, 100, 45), (50, 50, 45), (50, 50, 35), (100, 100, 35)],
        [(100, 100, 35), (50, 50, 35), (50, 50, 50), (25, 25, 50),
         (25, 25, 35), (100, 100, 35)],
    ]
    for ios, expected in zip(trace.branch_ios, expected_branches):
        assert [io.output.shape for io in ios] == expected
    assert trace.concat.shape == (100, 100, 95)
    assert [io.output.shape for io in trace.decoder_ios] == \
        [(100, 100, 5), (100, 100, 7), (100, 100, 1)]
    assert np.all(trace.output > 0) and np.all(trace.output < 1)
    elapsed = time.perf_counter() - start
    assert elapsed < 5
    _report(3, f"all intermediate shape checkpoints hold ({elapsed:.2f}s)")


def test_criterion_4_metric_identities():
    cases = [((1053, 79, 57), 0.8856, 0.89),
             ((1220, 124, 56), 0.8714, 0.87),
             ((1181, 14, 136), 0.8874, 0.89)]
    for (tp, fp, fn), exact, reported in cases:
        v = M.iou(tp, fp, fn)
        assert v == pytest.approx(exact, abs=5e-4)
        assert abs(v - reported) < 0.005
    _report(4, "published confusion counts reproduce their IoU values")


def test_criterion_5_desk_scale_training():
    start = time.perf_counter()
    samples = D.generate_phantoms(D.PhantomSpec(seed=1), 40)
    ds = D.split(samples, ratio=0.8, seed=1)
    assert len(ds.train) == 32 and len(ds.test) == 8
    net = build(1)
    net, reports = T.train(net, ds, T.TrainConfig(seed=1, epochs=50))
    records = T.evaluate_samples(net, ds.test)
    median_iou = float(np.median([r.iou for r in records]))
    median_tpr = float(np.median([r.tpr for r in records]))
    elapsed = time.perf_counter() - start
    assert median_iou >= 0.80
    assert median_tpr >= 0.85
    assert elapsed < 1200
    _report(5, f"phantom training: median IoU {median_iou:.3f}, "
               f"median TPR {median_tpr:.3f} in {elapsed / 60:.1f} min "
               f"({len(reports)} epochs)")


def test_criterion_6_end_to_end_determinism(tmp_path, monkeypatch, capsys):
    monkeypatch.setenv("TRISEG_THREADS", "1")

    def pipeline(root):
        data = root / "ds"
        ckpt = root / "model.ckpt"
        csv = root / "metrics.csv"
        assert cli.main(["synth", "--out", str(data), "--n", "6",
                         "--size", "160", "--seed", "3"]) == 0
        assert cli.main(["train", "--data", str(data), "--out", str(ckpt),
                         "--epochs", "2", "--seed", "3"]) == 0
        assert cli.main(["eval", "--data", str(data), "--ckpt", str(ckpt),
                         "--out-csv", str(csv)]) == 0
        return ckpt.read_bytes(), csv.read_bytes()

    ckpt_a, csv_a = pipeline(tmp_path / "run_a")
    ckpt_b, csv_b = pipeline(tmp_path / "run_b")
    capsys.readouterr()
    assert ckpt_a == ckpt_b
    assert csv_a == csv_b
    _report(6, "synth -> train -> eval twice: byte-identical CSV and checkpoint")


def test_criterion_7_checkpoint_roundtrip(tmp_path):
    net = build(9)
    p1, p2 = tmp_path / "a.ckpt", tmp_path / "b.ckpt"
    T.save_checkpoint(net, {"seed": 9}, p1)
    loaded, _ = T.load_checkpoint(p1)
    T.save_checkpoint(loaded, {"seed": 9}, p2)
    assert p1.read_bytes() == p2.read_bytes()

    blob = bytearray(p1.read_bytes())
    bad_magic = tmp_path / "m.ckpt"
    bad_magic.write_bytes(b"XXXX" + bytes(blob[4:]))
    with pytest.raises(T.BadMagicError):
        T.load_checkpoint(bad_magic)

    truncated = tmp_path / "t.ckpt"
    truncated.write_bytes(bytes(blob[:100]))
    with pytest.raises(T.TruncatedCheckpointError):
        T.load_checkpoint(truncated)
    _report(7, "checkpoint round-trip byte-exact; magic/truncation rejected distinctly")


def test_criterion_8_property_suites():
    n = 1000

    # tensor set/get round-trip
    r = np.random.default_rng(0)
    for _ in range(n):
        h, w, c = (int(v) for v in r.integers(1, 7, size=3))
        t = tensor.new(Shape(h, w, c), float(r.uniform(-10, 10)))
        y, x, ch = int(r.integers(h)), int(r.integers(w)), int(r.integers(c))
        v = float(r.uniform(-1e3, 1e3))
        assert tensor.get(tensor.set_value(t, y, x, ch, v), y, x, ch) == np.float32(v)

    # concat associativity
    for _ in range(n):
        h, w = (int(v) for v in r.integers(1, 6, size=2))
        parts = [r.random((h, w, int(r.integers(1, 5)))).astype(np.float32)
                 for _ in range(3)]
        left = tensor.concat_channels([tensor.concat_channels(parts[:2]), parts[2]])
        np.testing.assert_array_equal(tensor.concat_channels(parts), left)

    # zero-upsample / subsample inverse
    for _ in range(n):
        h, w, c = (int(v) for v in r.integers(1, 6, size=3))
        factor = int(r.choice((2, 4)))
        x = r.standard_normal((h, w, c))
        np.testing.assert_array_equal(L.zero_upsample(x, factor)[::factor, ::factor], x)

    # IoU bounded by TPR and PPV
    for _ in range(n):
        h, w = (int(v) for v in r.integers(1, 10, size=2))
        pred = (r.random((h, w, 1)) > 0.5).astype(np.float32)
        truth = (r.random((h, w, 1)) > 0.5).astype(np.float32)
        rec = M.evaluate("p", pred, truth)
        assert rec.iou <= min(rec.tpr, rec.ppv) + 1e-12

    # overlay recount equals confusion
    for _ in range(n):
        h, w = (int(v) for v in r.integers(1, 10, size=2))
        pred = (r.random((h, w, 1)) > 0.5).astype(np.float32)
        truth = (r.random((h, w, 1)) > 0.5).astype(np.float32)
        rgb = M.render_overlay(np.full((h, w, 1), 0.42), pred, truth)
        tp, fp, fn, _ = M.confusion(pred, truth)
        assert recount_overlay(rgb) == (tp, fp, fn)

    _report(8, f"five property suites passed at {n} cases each")
