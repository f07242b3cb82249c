"""Segmentation evaluation: pixel confusion counts, IoU / TPR / PPV,
distribution summaries for boxplot-style reporting, and diagnostic RGB
overlays (green TP, red FP, blue FN over the grayscale input).
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, asdict

import numpy as np

METRIC_NAMES = ("iou", "tpr", "ppv")
CSV_HEADER = ("id", "tp", "fp", "fn", "tn", "iou", "tpr", "ppv")


@dataclass
class MetricsRecord:
    id: str
    tp: int
    fp: int
    fn: int
    tn: int
    iou: float
    tpr: float
    ppv: float


@dataclass
class FiveNumber:
    min: float
    q1: float
    median: float
    q3: float
    max: float
    mean: float


@dataclass
class DistributionSummary:
    n: int
    iou: FiveNumber
    tpr: FiveNumber
    ppv: FiveNumber

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)


def _require_binary(t, name):
    if not np.isin(t, (0.0, 1.0)).all():
        raise ValueError(f"{name} mask is not binary")


def confusion(pred, truth) -> tuple[int, int, int, int]:
    """Exact (tp, fp, fn, tn) pixel counts for binary masks."""
    if pred.shape != truth.shape:
        raise ValueError(f"shape mismatch: {pred.shape} vs {truth.shape}")
    _require_binary(pred, "pred")
    _require_binary(truth, "truth")
    p = pred.astype(bool)
    t = truth.astype(bool)
    tp = int(np.count_nonzero(p & t))
    fp = int(np.count_nonzero(p & ~t))
    fn = int(np.count_nonzero(~p & t))
    tn = p.size - tp - fp - fn
    return tp, fp, fn, tn


def iou(tp, fp, fn) -> float:
    """tp/(tp+fp+fn); two empty masks count as perfect agreement."""
    denom = tp + fp + fn
    return tp / denom if denom else 1.0


def rates(tp, fp, fn) -> tuple[float, float]:
    """(TPR, PPV) with empty denominators scoring 1.0."""
    tpr = tp / (tp + fn) if tp + fn else 1.0
    ppv = tp / (tp + fp) if tp + fp else 1.0
    return tpr, ppv


def evaluate(sample_id, pred, truth) -> MetricsRecord:
    tp, fp, fn, tn = confusion(pred, truth)
    tpr, ppv = rates(tp, fp, fn)
    return MetricsRecord(sample_id, tp, fp, fn, tn, iou(tp, fp, fn), tpr, ppv)


def summarize(records) -> DistributionSummary:
    """Five-number summary per metric; quartiles use linear interpolation
    between closest ranks (numpy's default)."""
    records = list(records)
    if not records:
        raise ValueError("cannot summarize an empty record list")
    summaries = {}
    for name in METRIC_NAMES:
        vals = np.array([getattr(r, name) for r in records], dtype=np.float64)
        q = np.quantile(vals, [0.0, 0.25, 0.5, 0.75, 1.0])
        summaries[name] = FiveNumber(*(float(v) for v in q), float(vals.mean()))
    return DistributionSummary(len(records), **summaries)


def render_overlay(image, pred, truth) -> np.ndarray:
    """RGB diagnostic view: TP pure green, FP pure red, FN pure blue,
    true negatives keep the grayscale base."""
    if not (image.shape[:2] == pred.shape[:2] == truth.shape[:2]):
        raise ValueError("image/pred/truth spatial shapes differ")
    gray = np.clip(image[:, :, 0] if image.ndim == 3 else image, 0.0, 1.0)
    base = np.rint(gray * 255).astype(np.uint8)
    rgb = np.stack([base, base, base], axis=2)
    p = (pred[:, :, 0] if pred.ndim == 3 else pred).astype(bool)
    t = (truth[:, :, 0] if truth.ndim == 3 else truth).astype(bool)
    rgb[p & t] = (0, 255, 0)
    rgb[p & ~t] = (255, 0, 0)
    rgb[~p & t] = (0, 0, 255)
    return rgb


def records_to_csv(records) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for r in records:
        writer.writerow([r.id, r.tp, r.fp, r.fn, r.tn,
                         f"{r.iou:.6f}", f"{r.tpr:.6f}", f"{r.ppv:.6f}"])
    return buf.getvalue()


def records_from_csv(text: str) -> list[MetricsRecord]:
    reader = csv.reader(io.StringIO(text))
    rows = list(reader)
    if not rows or tuple(rows[0]) != CSV_HEADER:
        raise ValueError("malformed metrics CSV: bad or missing header")
    out = []
    for row in rows[1:]:
        if len(row) != len(CSV_HEADER):
            raise ValueError("malformed metrics CSV row")
        out.append(MetricsRecord(row[0], *(int(v) for v in row[1:5]),
                                 *(float(v) for v in row[5:8])))
    if not out:
        raise ValueError("metrics CSV contains no records")
    return out
