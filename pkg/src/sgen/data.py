"""Degradation protocol, synthetic corpus, resizing, and batching.

Degradation reproduces the evaluation recipe: box-average downsample by a
factor (default 4), add white Gaussian noise (default sigma 30) in the
low-resolution domain with clamping to [0, 255], then nearest-neighbor
upsample back to the original size.  Values stay float throughout; the
only quantization in the pipeline is PPM I/O.

All randomness flows through explicitly seeded numpy Generators, so every
dataset and batch order is reproducible from integers.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import Tensor

__all__ = [
    "EVAL_SCALES",
    "DegradeSpec",
    "SamplePair",
    "degrade",
    "degraded_dataset",
    "box_downsample",
    "nearest_upsample",
    "bilinear_resize",
    "resize_to_scales",
    "make_synthetic_corpus",
    "batch_iter",
    "normalize",
    "denormalize",
]

# the six evaluation sizes, (height, width), smallest first
EVAL_SCALES: tuple[tuple[int, int], ...] = (
    (128, 96),
    (144, 112),
    (160, 128),
    (176, 144),
    (192, 160),
    (208, 176),
)


@dataclass(frozen=True)
class DegradeSpec:
    """Parameters of the corruption protocol."""

    scales: tuple[tuple[int, int], ...] = EVAL_SCALES
    down_factor: int = 4
    noise_sigma: float = 30.0
    up_method: str = "nearest"
    seed: int = 0

    def __post_init__(self):
        if self.down_factor < 1:
            raise ValueError(f"down_factor must be >= 1, got {self.down_factor}")
        if self.noise_sigma < 0:
            raise ValueError(f"noise_sigma must be >= 0, got {self.noise_sigma}")
        if self.up_method != "nearest":
            raise ValueError(f"up_method must be 'nearest', got {self.up_method!r}")
        if not self.scales:
            raise ValueError("scales must not be empty")
        for h, w in self.scales:
            if h % self.down_factor or w % self.down_factor:
                raise ValueError(
                    f"scale ({h}, {w}) not divisible by down_factor {self.down_factor}"
                )


@dataclass
class SamplePair:
    """One clean/corrupted training or evaluation pair at one scale."""

    clean: Tensor
    corrupted: Tensor
    scale_index: int


def normalize(t: Tensor) -> Tensor:
    """Pixel range [0, 255] -> network range [-1, 1]."""
    return Tensor(t.data / np.float32(127.5) - np.float32(1.0))


def denormalize(t: Tensor) -> Tensor:
    """Network range [-1, 1] -> pixel range [0, 255]."""
    return Tensor((t.data + np.float32(1.0)) * np.float32(127.5))


def box_downsample(arr: np.ndarray, factor: int) -> np.ndarray:
    """Average non-overlapping factor x factor blocks."""
    n, c, h, w = arr.shape
    if h % factor or w % factor:
        raise ValueError(f"box_downsample: dims ({h}, {w}) not divisible by {factor}")
    blocks = arr.reshape(n, c, h // factor, factor, w // factor, factor)
    return blocks.mean(axis=(3, 5))


def nearest_upsample(arr: np.ndarray, factor: int) -> np.ndarray:
    """Repeat each pixel into a factor x factor block."""
    return arr.repeat(factor, axis=2).repeat(factor, axis=3)


def degrade(clean: Tensor, spec: DegradeSpec, rng: np.random.Generator) -> SamplePair:
    """Corrupt one clean image per the protocol; draws noise from ``rng``."""
    _, _, h, w = clean.shape
    small = box_downsample(clean.data, spec.down_factor)
    if spec.noise_sigma > 0:
        noise = rng.normal(0.0, spec.noise_sigma, size=small.shape)
        small = np.clip(small + noise, 0.0, 255.0).astype(clean.dtype)
    corrupted = nearest_upsample(small, spec.down_factor)
    try:
        scale_index = spec.scales.index((h, w))
    except ValueError:
        scale_index = -1
    return SamplePair(clean=clean, corrupted=Tensor(corrupted), scale_index=scale_index)


def degraded_dataset(images: list[Tensor], spec: DegradeSpec) -> list[SamplePair]:
    """Resize every image to every scale and corrupt it; fully deterministic.

    Noise for image i at scale j comes from a generator seeded with
    (spec.seed, i, j), so the result is independent of processing order.
    """
    pairs = []
    for i, image in enumerate(images):
        for j, (h, w) in enumerate(spec.scales):
            clean = bilinear_resize(image, h, w)
            rng = np.random.default_rng((spec.seed, i, j))
            pair = degrade(clean, spec, rng)
            pair.scale_index = j
            pairs.append(pair)
    return pairs


# ---------------------------------------------------------------------------
# resizing

def _axis_weights(src: int, dst: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Half-pixel-center bilinear sampling positions along one axis."""
    coords = (np.arange(dst, dtype=np.float64) + 0.5) * (src / dst) - 0.5
    lo = np.floor(coords).astype(np.int64)
    frac = coords - lo
    hi = np.clip(lo + 1, 0, src - 1)
    lo = np.clip(lo, 0, src - 1)
    return lo, hi, frac


def bilinear_resize(t: Tensor, out_h: int, out_w: int) -> Tensor:
    """Bilinear interpolation with half-pixel centers and edge replication."""
    if out_h < 1 or out_w < 1:
        raise ValueError(f"bilinear_resize: bad target size ({out_h}, {out_w})")
    arr = t.data.astype(np.float64)
    _, _, h, w = arr.shape
    ylo, yhi, fy = _axis_weights(h, out_h)
    xlo, xhi, fx = _axis_weights(w, out_w)
    top = arr[:, :, ylo][:, :, :, xlo] * (1 - fx) + arr[:, :, ylo][:, :, :, xhi] * fx
    bot = arr[:, :, yhi][:, :, :, xlo] * (1 - fx) + arr[:, :, yhi][:, :, :, xhi] * fx
    out = top * (1 - fy)[:, np.newaxis] + bot * fy[:, np.newaxis]
    return Tensor(out.astype(t.dtype))


def resize_to_scales(clean: Tensor, scales) -> list[Tensor]:
    return [bilinear_resize(clean, h, w) for h, w in scales]


# ---------------------------------------------------------------------------
# synthetic corpus

def _fill_ellipse(img: np.ndarray, yy, xx, cy, cx, ry, rx, color) -> None:
    mask = ((yy - cy) / ry) ** 2 + ((xx - cx) / rx) ** 2 <= 1.0
    for ch in range(3):
        img[ch][mask] = color[ch]


def make_synthetic_corpus(count: int, seed: int, size: tuple[int, int] = (128, 96)) -> list[Tensor]:
    """Procedural face-like images: gradient background, skin ellipse,
    two eye dots, and a mouth arc.  Deterministic per (count, seed, size)."""
    if count < 1:
        raise ValueError(f"make_synthetic_corpus: count must be >= 1, got {count}")
    h, w = size
    if h < 8 or w < 8:
        raise ValueError(f"make_synthetic_corpus: size ({h}, {w}) too small")
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    images = []
    for _ in range(count):
        img = np.empty((3, h, w), dtype=np.float64)
        # background: smooth two-corner gradient per channel
        for ch in range(3):
            c00, c11 = rng.uniform(20.0, 235.0, size=2)
            img[ch] = c00 + (c11 - c00) * (yy / max(h - 1, 1) + xx / max(w - 1, 1)) / 2.0
        # head
        cy = h * rng.uniform(0.42, 0.58)
        cx = w * rng.uniform(0.42, 0.58)
        ry = h * rng.uniform(0.28, 0.38)
        rx = w * rng.uniform(0.26, 0.36)
        skin = (
            rng.uniform(170.0, 230.0),
            rng.uniform(120.0, 180.0),
            rng.uniform(90.0, 150.0),
        )
        _fill_ellipse(img, yy, xx, cy, cx, ry, rx, skin)
        # eyes: dark dots mirrored around the face center
        eye_dy = ry * rng.uniform(0.25, 0.4)
        eye_dx = rx * rng.uniform(0.3, 0.45)
        eye_r = max(min(h, w) * rng.uniform(0.02, 0.04), 1.5)
        dark = (rng.uniform(10, 60), rng.uniform(10, 60), rng.uniform(10, 60))
        for side in (-1.0, 1.0):
            _fill_ellipse(img, yy, xx, cy - eye_dy, cx + side * eye_dx, eye_r, eye_r, dark)
        # mouth: a parabolic band below center
        mouth_y = cy + ry * rng.uniform(0.35, 0.55)
        curve = rng.uniform(0.02, 0.08)
        thick = max(h * rng.uniform(0.015, 0.03), 1.0)
        span = rx * rng.uniform(0.35, 0.55)
        arc = np.abs(yy - (mouth_y + curve * (xx - cx) ** 2 / max(w, 1))) <= thick
        band = arc & (np.abs(xx - cx) <= span)
        red = (rng.uniform(120, 190), rng.uniform(30, 80), rng.uniform(30, 80))
        for ch in range(3):
            img[ch][band] = red[ch]
        images.append(Tensor(np.clip(img, 0.0, 255.0)[np.newaxis].astype(np.float32)))
    return images


# ---------------------------------------------------------------------------
# batching

def batch_iter(pairs: list[SamplePair], batch_size: int, seed: int):
    """One epoch of single-scale normalized batches.

    Pairs are grouped by scale and shuffled within each group; each batch
    draws its scale uniformly among scales that still have samples, so
    every pair appears exactly once per epoch and no batch mixes sizes.
    Yields (corrupted, clean, scale_index) with pixels mapped to [-1, 1].
    """
    if not pairs:
        raise ValueError("batch_iter: empty dataset")
    if batch_size < 1:
        raise ValueError(f"batch_iter: batch_size must be >= 1, got {batch_size}")
    rng = np.random.default_rng(seed)
    groups: dict[int, list[SamplePair]] = {}
    for pair in pairs:
        groups.setdefault(pair.scale_index, []).append(pair)
    queues = {}
    for key in sorted(groups):
        bucket = groups[key]
        order = rng.permutation(len(bucket))
        queues[key] = [bucket[i] for i in order]
    keys = sorted(queues)
    while keys:
        key = keys[rng.integers(len(keys))]
        queue = queues[key]
        take, queues[key] = queue[:batch_size], queue[batch_size:]
        if not queues[key]:
            keys.remove(key)
        s = np.concatenate([p.corrupted.data for p in take], axis=0)
        t = np.concatenate([p.clean.data for p in take], axis=0)
        yield normalize(Tensor(s)), normalize(Tensor(t)), key
