"""Dataset ingestion and preprocessing: PGM pair loading, 100x100 ROI
cropping, nearest-neighbor mask resizing, seeded train/test splitting,
and a synthetic phantom generator (bright ellipse on a textured noisy
background) with exact ground truth.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import pgm

WINDOW = 100


class DatasetError(ValueError):
    pass


@dataclass
class Sample:
    image: np.ndarray  # (100, 100, 1) float32 in [0, 1]
    mask: np.ndarray   # (100, 100, 1) float32 in {0, 1}
    id: str
    roi_origin: tuple[int, int] = (0, 0)

    def validate(self):
        if self.image.shape != (WINDOW, WINDOW, 1) or self.mask.shape != (WINDOW, WINDOW, 1):
            raise DatasetError(f"{self.id}: sample must be {WINDOW}x{WINDOW}x1")
        if self.image.min() < 0 or self.image.max() > 1:
            raise DatasetError(f"{self.id}: image intensities outside [0, 1]")
        if not np.isin(self.mask, (0.0, 1.0)).all():
            raise DatasetError(f"{self.id}: mask is not binary")
        return self


@dataclass
class SplitDataset:
    train: list[Sample]
    test: list[Sample]
    seed: int
    ratio: float


@dataclass
class PhantomSpec:
    image_size: int = 160
    tumor_count: int = 1
    axes_range: tuple[float, float] = (12.0, 30.0)
    contrast: float = 0.6
    noise_amplitude: float = 0.05
    texture_scale: int = 16
    seed: int = 0

    def validate(self):
        lo, hi = self.axes_range
        if not (0 < lo <= hi):
            raise DatasetError("ellipse axes range must be positive and ordered")
        if 2 * hi >= self.image_size - 4:
            raise DatasetError("ellipse axes exceed image size")
        if self.contrast <= self.noise_amplitude:
            raise DatasetError("contrast must exceed noise amplitude")
        if self.tumor_count != 1:
            raise DatasetError("only single-tumor phantoms are supported")
        return self


def load_dataset(root_path) -> list[tuple[np.ndarray, np.ndarray, str]]:
    """Load `root/images/<id>.pgm` + `root/masks/<id>.pgm` pairs.

    Images are scaled to [0, 1]; masks binarized at half their maxval.
    Ids are returned in lexicographic order.
    """
    root = Path(root_path)
    images_dir = root / "images"
    masks_dir = root / "masks"
    if not images_dir.is_dir():
        raise DatasetError(f"missing images directory: {images_dir}")
    out = []
    for img_path in sorted(images_dir.glob("*.pgm")):
        sample_id = img_path.stem
        mask_path = masks_dir / img_path.name
        if not mask_path.is_file():
            raise DatasetError(f"{sample_id}: missing mask {mask_path}")
        try:
            image = pgm.read_pgm_normalized(img_path)
            mask_raw, mask_max = pgm.read_pgm(mask_path)
        except pgm.PnmError as e:
            raise DatasetError(f"{sample_id}: {e}") from e
        if mask_raw.shape != image.shape[:2]:
            raise DatasetError(
                f"{sample_id}: image {image.shape[:2]} and mask {mask_raw.shape} differ")
        mask = (mask_raw.astype(np.float32) >= 0.5 * mask_max).astype(np.float32)[:, :, None]
        out.append((image, mask, sample_id))
    return out


def mask_centroid(mask: np.ndarray) -> tuple[int, int]:
    """Center of the mask's bounding box; error if the mask is empty."""
    ys, xs = np.nonzero(mask[:, :, 0] if mask.ndim == 3 else mask)
    if ys.size == 0:
        raise DatasetError("mask is empty; cannot locate ROI automatically")
    cy = int(round((ys.min() + ys.max()) / 2))
    cx = int(round((xs.min() + xs.max()) / 2))
    return cy, cx


def crop_roi(image, mask, sample_id="sample", origin=None) -> Sample:
    """Cut the 100x100 tumor window from an image/mask pair.

    With origin=None the window is centered on the mask's bounding-box
    centroid and clamped to the image bounds; an explicit (y, x) origin
    must keep the window inside the source.
    """
    h, w = image.shape[:2]
    if h < WINDOW or w < WINDOW:
        raise DatasetError(f"{sample_id}: source {h}x{w} smaller than the {WINDOW} window")
    if origin is None:
        cy, cx = mask_centroid(mask)
        oy = min(max(cy - WINDOW // 2, 0), h - WINDOW)
        ox = min(max(cx - WINDOW // 2, 0), w - WINDOW)
    else:
        oy, ox = origin
        if not (0 <= oy <= h - WINDOW and 0 <= ox <= w - WINDOW):
            raise DatasetError(f"{sample_id}: window at ({oy}, {ox}) exceeds {h}x{w} source")
    img_c = np.ascontiguousarray(image[oy:oy + WINDOW, ox:ox + WINDOW]).astype(np.float32)
    mask_c = np.ascontiguousarray(mask[oy:oy + WINDOW, ox:ox + WINDOW]).astype(np.float32)
    return Sample(img_c, mask_c, sample_id, (oy, ox)).validate()


def resize_mask(mask: np.ndarray, target=(WINDOW, WINDOW)) -> np.ndarray:
    """Nearest-neighbor resample of a binary mask; output stays binary."""
    if not np.isin(mask, (0.0, 1.0)).all():
        raise DatasetError("resize_mask requires a binary mask")
    h, w = mask.shape[:2]
    th, tw = target
    if (h, w) == (th, tw):
        return mask.astype(np.float32, copy=True)
    ys = np.minimum((np.arange(th) * h // th), h - 1)
    xs = np.minimum((np.arange(tw) * w // tw), w - 1)
    out = mask[np.ix_(ys, xs)]
    return np.ascontiguousarray(out).astype(np.float32)


def split(samples: list[Sample], ratio: float = 0.8, seed: int = 0) -> SplitDataset:
    """Seeded shuffle then partition into disjoint train/test sets."""
    if len(samples) < 2:
        raise DatasetError("split requires at least 2 samples")
    if not (0 < ratio < 1):
        raise DatasetError("split ratio must be in (0, 1)")
    order = np.random.default_rng(seed).permutation(len(samples))
    n_train = int(round(len(samples) * ratio))
    n_train = min(max(n_train, 1), len(samples) - 1)
    train = [samples[i] for i in order[:n_train]]
    test = [samples[i] for i in order[n_train:]]
    return SplitDataset(train, test, seed, ratio)


def _smooth_texture(size, scale, rng):
    """Low-frequency texture in [0, 1]: coarse noise, bilinearly upsampled."""
    g = max(2, size // scale)
    coarse = rng.random((g + 1, g + 1))
    t = np.linspace(0.0, g, size)
    i0 = np.minimum(t.astype(int), g - 1)
    frac = t - i0
    rows = coarse[i0] * (1 - frac)[:, None] + coarse[i0 + 1] * frac[:, None]
    return rows[:, i0] * (1 - frac)[None, :] + rows[:, i0 + 1] * frac[None, :]


def rasterize_ellipse(size, cy, cx, a, b, theta) -> np.ndarray:
    """Binary mask of the filled ellipse with semi-axes (a, b) rotated by theta."""
    yy, xx = np.mgrid[0:size, 0:size]
    dy = yy - cy
    dx = xx - cx
    u = dx * np.cos(theta) + dy * np.sin(theta)
    v = -dx * np.sin(theta) + dy * np.cos(theta)
    inside = (u / a) ** 2 + (v / b) ** 2 <= 1.0
    return inside.astype(np.float32)


def generate_phantom_raw(spec: PhantomSpec, rng) -> tuple[np.ndarray, np.ndarray]:
    """One full-size phantom (image, mask) pair, both (size, size, 1)."""
    s = spec.image_size
    lo, hi = spec.axes_range
    a = rng.uniform(lo, hi)
    b = rng.uniform(lo, hi)
    margin = max(a, b) + 2
    cy = rng.uniform(margin, s - margin)
    cx = rng.uniform(margin, s - margin)
    theta = rng.uniform(0.0, np.pi)
    mask = rasterize_ellipse(s, cy, cx, a, b, theta)

    background = 0.15 + 0.1 * _smooth_texture(s, spec.texture_scale, rng)
    noise = rng.uniform(-spec.noise_amplitude, spec.noise_amplitude, size=(s, s))
    image = np.clip(background + spec.contrast * mask + noise, 0.0, 1.0)
    return image.astype(np.float32)[:, :, None], mask[:, :, None]


def generate_phantoms(spec: PhantomSpec, n: int) -> list[Sample]:
    """Generate `n` ROI-cropped phantom samples, deterministic under seed."""
    if n < 1:
        raise DatasetError("phantom count must be >= 1")
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    out = []
    for i in range(n):
        image, mask = generate_phantom_raw(spec, rng)
        out.append(crop_roi(image, mask, sample_id=f"phantom{i:04d}"))
    return out


def preprocess(raw_pairs, roi_origins=None) -> list[Sample]:
    """Turn loaded full-size pairs into 100x100 samples.

    `roi_origins` maps id -> (y, x) for manual window placement; pairs
    without an entry use automatic centroid placement. Pairs already at
    100x100 pass through unchanged.
    """
    roi_origins = roi_origins or {}
    samples = []
    for image, mask, sample_id in raw_pairs:
        if image.shape[:2] == (WINDOW, WINDOW):
            samples.append(Sample(image.astype(np.float32), mask.astype(np.float32),
                                  sample_id).validate())
        else:
            samples.append(crop_roi(image, mask, sample_id,
                                    origin=roi_origins.get(sample_id)))
    return samples


def read_roi_manifest(path) -> dict[str, tuple[int, int]]:
    """Parse `id y x` lines into a manual ROI origin map."""
    origins = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 3:
            raise DatasetError(f"{path}:{lineno}: expected 'id y x'")
        try:
            origins[parts[0]] = (int(parts[1]), int(parts[2]))
        except ValueError as e:
            raise DatasetError(f"{path}:{lineno}: non-integer origin") from e
    return origins
