"""Command-line pipeline: synth, train, eval, predict, report.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric/runtime
error. TRISEG_THREADS=1 pins BLAS/numba to one thread for strictly
deterministic runs (it is applied before numpy loads).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3


class UsageError(ValueError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _apply_thread_cap():
    threads = os.environ.get("TRISEG_THREADS")
    if not threads:
        return
    if not threads.isdigit() or int(threads) < 1:
        raise UsageError("TRISEG_THREADS must be a positive integer")
    for var in ("OPENBLAS_NUM_THREADS", "OMP_NUM_THREADS",
                "MKL_NUM_THREADS", "NUMBA_NUM_THREADS"):
        os.environ.setdefault(var, threads)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="triseg",
                     description="Three-channel CNN segmentation pipeline")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic phantom dataset")
    p.add_argument("--out", required=True, help="dataset directory to create")
    p.add_argument("--n", type=int, required=True, help="number of image/mask pairs")
    p.add_argument("--size", type=int, default=512, help="source image size in pixels")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--contrast", type=float, default=0.6)
    p.add_argument("--noise", type=float, default=0.05)

    p = sub.add_parser("train", help="preprocess, split 80/20 and train")
    p.add_argument("--data", required=True, help="dataset directory (images/ + masks/)")
    p.add_argument("--out", required=True, help="checkpoint output path")
    p.add_argument("--epochs", type=int, default=50)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--loss", choices=("bce", "dice"), default="bce")
    p.add_argument("--optimizer", choices=("adam", "sgd"), default="adam")
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--batch", type=int, default=8)
    p.add_argument("--patience", type=int, default=10)
    p.add_argument("--roi", default="auto",
                   help="'auto' or 'manifest:FILE' with 'id y x' lines")
    p.add_argument("--log-csv", default=None,
                   help="epoch CSV path (default: <out>.train.csv)")

    p = sub.add_parser("eval", help="evaluate a checkpoint on the test partition")
    p.add_argument("--data", required=True)
    p.add_argument("--ckpt", required=True)
    p.add_argument("--out-csv", required=True)
    p.add_argument("--overlays", default=None, help="directory for PPM overlays")
    p.add_argument("--roi", default="auto")

    p = sub.add_parser("predict", help="segment a single PGM image")
    p.add_argument("--image", required=True)
    p.add_argument("--ckpt", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--prob", action="store_true",
                   help="write a 16-bit probability map instead of a binary mask")
    p.add_argument("--roi-origin", default=None, help="Y,X crop origin (default: center)")

    p = sub.add_parser("report", help="five-number summaries from a metrics CSV")
    p.add_argument("--csv", required=True)
    p.add_argument("--out", required=True, help="output directory")
    return parser


def _log_config(args, seed):
    resolved = {k: v for k, v in sorted(vars(args).items()) if k != "command"}
    print(f"[triseg {args.command}] seed={seed} config={resolved}", file=sys.stderr)


def _load_samples(data_dir, roi_arg):
    from . import data as D
    origins = None
    if roi_arg != "auto":
        if not roi_arg.startswith("manifest:"):
            raise UsageError("--roi must be 'auto' or 'manifest:FILE'")
        origins = D.read_roi_manifest(roi_arg.split(":", 1)[1])
    return D.preprocess(D.load_dataset(data_dir), origins)


def cmd_synth(args):
    from . import data as D
    from . import pgm
    if args.n < 1:
        raise UsageError("--n must be >= 1")
    spec = D.PhantomSpec(image_size=args.size, contrast=args.contrast,
                         noise_amplitude=args.noise, seed=args.seed).validate()
    _log_config(args, args.seed)
    out = Path(args.out)
    try:
        (out / "images").mkdir(parents=True, exist_ok=True)
        (out / "masks").mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise D.DatasetError(f"cannot create {out}: {e}") from e
    import numpy as np
    rng = np.random.default_rng(spec.seed)
    for i in range(args.n):
        image, mask = D.generate_phantom_raw(spec, rng)
        name = f"phantom{i:04d}.pgm"
        pgm.write_pgm(out / "images" / name, image)
        pgm.write_pgm(out / "masks" / name, mask)
    print(f"wrote {args.n} image/mask pairs to {out}")


def cmd_train(args):
    from . import data as D
    from . import train as T
    from .model import build
    if args.epochs < 1:
        raise UsageError("--epochs must be >= 1")
    if args.batch < 1:
        raise UsageError("--batch must be >= 1")
    _log_config(args, args.seed)
    samples = _load_samples(args.data, args.roi)
    dataset = D.split(samples, ratio=0.8, seed=args.seed)
    cfg = T.TrainConfig(
        epochs=args.epochs, batch_size=args.batch, learning_rate=args.lr,
        optimizer="adam" if args.optimizer == "adam" else "sgd_momentum",
        seed=args.seed, loss=args.loss, early_stop_patience=args.patience,
        checkpoint_path=args.out,
    )
    log_path = Path(args.log_csv) if args.log_csv else Path(str(args.out) + ".train.csv")
    lines = ["epoch,train_loss,test_iou,seconds"]

    def progress(report):
        lines.append(report.csv_line())
        print(report.csv_line(), file=sys.stderr)

    net = build(cfg.seed)
    net, reports = T.train(net, dataset, cfg, progress)
    log_path.write_text("\n".join(lines) + "\n")
    records = T.evaluate_samples(net, dataset.test)
    from . import metrics as M
    summary = M.summarize(records)
    print(f"final test IoU: median={summary.iou.median:.4f} mean={summary.iou.mean:.4f} "
          f"(n={summary.n}); best checkpoint: {args.out}")


def cmd_eval(args):
    from . import data as D
    from . import metrics as M
    from . import pgm
    from . import train as T
    net, meta = T.load_checkpoint(args.ckpt)
    seed = int(meta.get("seed", 0))
    _log_config(args, seed)
    samples = _load_samples(args.data, args.roi)
    dataset = D.split(samples, ratio=0.8, seed=seed)
    records = []
    overlays = Path(args.overlays) if args.overlays else None
    if overlays:
        overlays.mkdir(parents=True, exist_ok=True)
    for sample in dataset.test:
        pred, _ = T.predict_mask(net, sample.image)
        records.append(M.evaluate(sample.id, pred, sample.mask))
        if overlays:
            pgm.write_ppm(overlays / f"{sample.id}.ppm",
                          M.render_overlay(sample.image, pred, sample.mask))
    Path(args.out_csv).write_text(M.records_to_csv(records))
    print(M.summarize(records).to_json())


def cmd_predict(args):
    import numpy as np
    from . import data as D
    from . import pgm
    from . import train as T
    net, meta = T.load_checkpoint(args.ckpt)
    _log_config(args, int(meta.get("seed", 0)))
    image = pgm.read_pgm_normalized(args.image)
    h, w = image.shape[:2]
    win = net.input_size
    if h < win or w < win:
        raise D.DatasetError(f"input image {h}x{w} smaller than {win}x{win}")
    if args.roi_origin is not None:
        try:
            oy, ox = (int(v) for v in args.roi_origin.split(","))
        except ValueError as e:
            raise UsageError("--roi-origin must be 'Y,X'") from e
    else:
        oy, ox = (h - win) // 2, (w - win) // 2
    if not (0 <= oy <= h - win and 0 <= ox <= w - win):
        raise D.DatasetError(f"crop origin ({oy}, {ox}) exceeds {h}x{w} source")
    crop = np.ascontiguousarray(image[oy:oy + win, ox:ox + win])
    mask, probs = T.predict_mask(net, crop)
    if args.prob:
        pgm.write_pgm(args.out, probs, maxval=65535)
    else:
        pgm.write_pgm(args.out, mask, maxval=255)
    print(f"wrote {'probability map' if args.prob else 'mask'} to {args.out}")


def cmd_report(args):
    from . import metrics as M
    try:
        text = Path(args.csv).read_text()
    except OSError as e:
        raise ValueError(f"cannot read {args.csv}: {e}") from e
    records = M.records_from_csv(text)
    summary = M.summarize(records)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "summary.json").write_text(summary.to_json() + "\n")
    lines = ["metric min q1 median q3 max mean"]
    for name in M.METRIC_NAMES:
        f = getattr(summary, name)
        lines.append(f"{name} {f.min:.6f} {f.q1:.6f} {f.median:.6f} "
                     f"{f.q3:.6f} {f.max:.6f} {f.mean:.6f}")
    (out / "boxplot.txt").write_text("\n".join(lines) + "\n")
    print("\n".join(lines))


def main(argv=None) -> int:
    try:
        _apply_thread_cap()
        parser = build_parser()
        args = parser.parse_args(argv)
    except UsageError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE

    from . import data as D
    from . import pgm
    from . import train as T
    try:
        {
            "synth": cmd_synth,
            "train": cmd_train,
            "eval": cmd_eval,
            "predict": cmd_predict,
            "report": cmd_report,
        }[args.command](args)
        return EXIT_OK
    except UsageError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except T.NumericError as e:
        print(f"numeric error: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    except (D.DatasetError, T.CheckpointError, pgm.PnmError, ValueError, OSError) as e:
        print(f"data error: {e}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
