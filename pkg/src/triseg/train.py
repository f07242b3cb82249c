"""Losses, optimizers, the mini-batch training loop with early stopping,
and binary checkpoint persistence.

The bce path trains through the pre-sigmoid map (fused formulation) so
saturated predictions cannot overflow; dice gradients are converted to
the same space via the sigmoid derivative.
"""

from __future__ import annotations

import json
import struct
import time
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

from . import metrics
from .data import SplitDataset
from .model import TriChannelNet, build

CHECKPOINT_MAGIC = b"TSEG"
CHECKPOINT_VERSION = 1


class NumericError(RuntimeError):
    """Non-finite loss or activation during training."""


class CheckpointError(ValueError):
    pass


class BadMagicError(CheckpointError):
    pass


class TruncatedCheckpointError(CheckpointError):
    pass


class FingerprintMismatchError(CheckpointError):
    pass


@dataclass
class TrainConfig:
    epochs: int = 50
    batch_size: int = 8
    learning_rate: float = 1e-3
    optimizer: str = "adam"       # adam | sgd_momentum
    momentum: float = 0.9
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    loss: str = "bce"             # bce | dice
    early_stop_patience: int = 10
    checkpoint_path: str | None = None

    def validate(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.optimizer not in ("adam", "sgd_momentum"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if self.loss not in ("bce", "dice"):
            raise ValueError(f"unknown loss {self.loss!r}")
        return self


@dataclass
class EpochReport:
    epoch: int
    train_loss: float
    test_iou: float
    seconds: float

    def csv_line(self) -> str:
        return f"{self.epoch},{self.train_loss:.6f},{self.test_iou:.6f},{self.seconds:.3f}"


# -- losses ----------------------------------------------------------------

def bce_loss(pred, target):
    """Mean binary cross-entropy over pixels and its gradient w.r.t. pred.

    Predictions are clamped away from {0, 1} before the logs; use
    bce_loss_from_logits for the saturation-proof training path.
    """
    if pred.shape != target.shape:
        raise ValueError("pred/target shape mismatch")
    eps = np.finfo(pred.dtype).tiny if pred.dtype == np.float64 else 1e-7
    p = np.clip(pred, eps, 1.0 - eps)
    n = p.size
    loss = float(-(target * np.log(p) + (1 - target) * np.log1p(-p)).mean())
    grad = ((p - target) / (p * (1 - p))) / n
    return loss, grad.astype(pred.dtype)


def bce_loss_from_logits(logits, target):
    """Fused bce: loss from the pre-sigmoid map and gradient w.r.t. logits."""
    if logits.shape != target.shape:
        raise ValueError("logits/target shape mismatch")
    n = logits.size
    # log(1 + e^z) evaluated without overflow
    loss = float((np.maximum(logits, 0) - logits * target
                  + np.log1p(np.exp(-np.abs(logits)))).mean())
    p = np.empty_like(logits)
    pos = logits >= 0
    p[pos] = 1.0 / (1.0 + np.exp(-logits[pos]))
    ex = np.exp(logits[~pos])
    p[~pos] = ex / (1.0 + ex)
    grad = (p - target) / n
    return loss, grad.astype(logits.dtype)


def dice_loss(pred, target, smooth=1.0):
    """Soft dice loss 1 - (2*sum(pt)+s)/(sum(p)+sum(t)+s) with exact gradient."""
    if pred.shape != target.shape:
        raise ValueError("pred/target shape mismatch")
    inter = float((pred * target).sum())
    denom = float(pred.sum() + target.sum()) + smooth
    num = 2.0 * inter + smooth
    loss = 1.0 - num / denom
    grad = -(2.0 * target * denom - num) / denom ** 2
    return loss, grad.astype(pred.dtype)


# -- optimizers ------------------------------------------------------------

class SGDMomentum:
    def __init__(self, learning_rate, momentum=0.9):
        self.lr = learning_rate
        self.momentum = momentum
        self.velocity = None

    def step(self, params, grads):
        if self.velocity is None:
            self.velocity = [np.zeros_like(p) for p in params]
        for p, g, v in zip(params, grads, self.velocity):
            v *= self.momentum
            v += g.astype(p.dtype)
            p -= (self.lr * v).astype(p.dtype)


class Adam:
    def __init__(self, learning_rate, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = None
        self.v = None

    def step(self, params, grads):
        if self.m is None:
            self.m = [np.zeros_like(p) for p in params]
            self.v = [np.zeros_like(p) for p in params]
        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            g = g.astype(p.dtype)
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= (self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)).astype(p.dtype)


def make_optimizer(cfg: TrainConfig):
    if cfg.optimizer == "adam":
        return Adam(cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.eps)
    return SGDMomentum(cfg.learning_rate, cfg.momentum)


# -- evaluation helpers ----------------------------------------------------

def predict_mask(net: TriChannelNet, image, threshold=0.5):
    probs, _ = net.forward(image)
    return (probs >= threshold).astype(np.float32), probs


def evaluate_samples(net, samples, threshold=0.5):
    return [metrics.evaluate(s.id, predict_mask(net, s.image, threshold)[0], s.mask)
            for s in samples]


# -- training loop ---------------------------------------------------------

def _sample_loss_grads(net, sample, loss_kind):
    probs, trace = net.forward(sample.image)
    if loss_kind == "bce":
        logits = trace.decoder_ios[-1].aux[0].output
        loss, glogits = bce_loss_from_logits(logits, sample.mask)
    else:
        loss, gp = dice_loss(probs, sample.mask)
        glogits = gp * probs * (1.0 - probs)
    grads = net.backward(trace, glogits, from_logits=True)
    return loss, grads


def _accumulate(total, grads, scale):
    if total is None:
        return [(gw * scale, gb * scale) for gw, gb in grads]
    return [(tw + gw * scale, tb + gb * scale)
            for (tw, tb), (gw, gb) in zip(total, grads)]


def train(net: TriChannelNet, dataset: SplitDataset, cfg: TrainConfig,
          progress=None) -> tuple[TriChannelNet, list[EpochReport]]:
    """Mini-batch training with per-epoch test IoU tracking.

    Writes the best-IoU checkpoint to cfg.checkpoint_path (when set),
    stops on the epoch limit or after early_stop_patience epochs without
    test-IoU improvement. Deterministic for a fixed seed in
    single-threaded mode.
    """
    cfg.validate()
    if not dataset.train:
        raise ValueError("training set is empty")
    optimizer = make_optimizer(cfg)
    rng = np.random.default_rng(cfg.seed)
    reports = []
    best_iou = -1.0
    stale = 0

    for epoch in range(1, cfg.epochs + 1):
        t0 = time.perf_counter()
        order = rng.permutation(len(dataset.train))
        losses = []
        for start in range(0, len(order), cfg.batch_size):
            batch = [dataset.train[i] for i in order[start:start + cfg.batch_size]]
            total = None
            for sample in batch:
                loss, grads = _sample_loss_grads(net, sample, cfg.loss)
                if not np.isfinite(loss):
                    raise NumericError(
                        f"non-finite loss at epoch {epoch}, batch {start // cfg.batch_size}")
                losses.append(loss)
                total = _accumulate(total, grads, 1.0 / len(batch))
            net.apply_update(total, optimizer)

        test_records = evaluate_samples(net, dataset.test)
        test_iou = float(np.mean([r.iou for r in test_records])) if test_records else 0.0
        report = EpochReport(epoch, float(np.mean(losses)), test_iou,
                             time.perf_counter() - t0)
        reports.append(report)
        if progress:
            progress(report)

        if test_iou > best_iou:
            best_iou = test_iou
            stale = 0
            if cfg.checkpoint_path:
                # run-local output path stays out of the echo so identical
                # configs yield byte-identical checkpoints
                config_echo = {k: v for k, v in asdict(cfg).items()
                               if k != "checkpoint_path"}
                save_checkpoint(net, {
                    "epoch": epoch,
                    "best_test_iou": best_iou,
                    "seed": cfg.seed,
                    "config": config_echo,
                }, cfg.checkpoint_path)
        else:
            stale += 1
            if stale >= cfg.early_stop_patience:
                break
    return net, reports


# -- checkpoints -----------------------------------------------------------

def _pack_block(payload: bytes) -> bytes:
    return struct.pack("<I", len(payload)) + payload


def save_checkpoint(net: TriChannelNet, meta: dict, path):
    """Binary format: magic, version, fingerprint, metadata JSON, then
    every parameter buffer as little-endian float32 in layer order."""
    meta = dict(meta)
    meta.setdefault("input_size", net.input_size)
    meta["input_size"] = net.input_size
    blob = bytearray()
    blob += CHECKPOINT_MAGIC
    blob += struct.pack("<I", CHECKPOINT_VERSION)
    blob += _pack_block(net.fingerprint().encode())
    blob += _pack_block(json.dumps(meta, sort_keys=True, separators=(",", ":")).encode())
    for buf in net.parameters():
        flat = np.ascontiguousarray(buf, dtype="<f4").ravel()
        blob += struct.pack("<I", flat.size)
        blob += flat.tobytes()
    Path(path).write_bytes(bytes(blob))


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise TruncatedCheckpointError("checkpoint file is truncated")
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]


def load_checkpoint(path) -> tuple[TriChannelNet, dict]:
    r = _Reader(Path(path).read_bytes())
    if r.take(4) != CHECKPOINT_MAGIC:
        raise BadMagicError(f"{path}: not a TSEG checkpoint")
    version = r.u32()
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
    fingerprint = r.take(r.u32()).decode()
    meta = json.loads(r.take(r.u32()).decode())
    net = build(seed=0, input_size=int(meta.get("input_size", 100)))
    if net.fingerprint() != fingerprint:
        raise FingerprintMismatchError(
            f"{path}: checkpoint architecture does not match this model")
    for buf in net.parameters():
        count = r.u32()
        if count != buf.size:
            raise FingerprintMismatchError(f"{path}: parameter buffer size mismatch")
        flat = np.frombuffer(r.take(4 * count), dtype="<f4")
        buf[...] = flat.reshape(buf.shape)
    if r.pos != len(r.data):
        raise CheckpointError(f"{path}: trailing bytes after parameters")
    return net, meta
