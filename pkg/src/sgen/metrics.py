"""PSNR, SSIM, and per-scale quality reports.

PSNR uses peak 255 and returns +inf for identical inputs; infinite values
are excluded from report means.  SSIM is the classic single-scale form:
an 11x11 Gaussian window (sigma 1.5), stability constants (0.01*255)^2
and (0.03*255)^2, local statistics over valid window positions, averaged
per channel and then across channels.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .autodiff import Tensor
from .data import SamplePair, denormalize, normalize
from .model import ParamStore, SgenConfig, generator_forward

__all__ = ["psnr", "ssim", "ScaleRow", "QualityReport", "evaluate"]

_WINDOW = 11
_SIGMA = 1.5
_C1 = (0.01 * 255.0) ** 2
_C2 = (0.03 * 255.0) ** 2


def psnr(a: Tensor, b: Tensor, peak: float = 255.0) -> float:
    """10*log10(peak^2 / mse); +inf when the inputs are identical."""
    if a.shape != b.shape:
        raise ValueError(f"psnr: shape mismatch {a.shape} vs {b.shape}")
    mse = float(np.mean((a.data.astype(np.float64) - b.data.astype(np.float64)) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(peak * peak / mse)


def _gaussian_window(size: int = _WINDOW, sigma: float = _SIGMA) -> np.ndarray:
    offsets = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    g = np.exp(-(offsets**2) / (2.0 * sigma * sigma))
    return g / g.sum()


def _filter_valid(img: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    """Separable 2-D correlation, valid region only; img is (h, w)."""
    rows = sliding_window_view(img, len(kernel), axis=0) @ kernel
    return sliding_window_view(rows, len(kernel), axis=1) @ kernel


def ssim(a: Tensor, b: Tensor) -> float:
    """Mean structural similarity over valid windows, averaged over channels."""
    if a.shape != b.shape:
        raise ValueError(f"ssim: shape mismatch {a.shape} vs {b.shape}")
    n, c, h, w = a.shape
    if h < _WINDOW or w < _WINDOW:
        raise ValueError(f"ssim: image ({h}, {w}) smaller than the {_WINDOW}x{_WINDOW} window")
    kernel = _gaussian_window()
    total = 0.0
    count = 0
    for i in range(n):
        for ch in range(c):
            x = a.data[i, ch].astype(np.float64)
            y = b.data[i, ch].astype(np.float64)
            mu_x = _filter_valid(x, kernel)
            mu_y = _filter_valid(y, kernel)
            var_x = _filter_valid(x * x, kernel) - mu_x * mu_x
            var_y = _filter_valid(y * y, kernel) - mu_y * mu_y
            cov = _filter_valid(x * y, kernel) - mu_x * mu_y
            num = (2.0 * mu_x * mu_y + _C1) * (2.0 * cov + _C2)
            den = (mu_x * mu_x + mu_y * mu_y + _C1) * (var_x + var_y + _C2)
            total += float(np.mean(num / den))
            count += 1
    return total / count


@dataclass
class ScaleRow:
    height: int
    width: int
    mean_psnr: float
    mean_ssim: float
    count: int
    note: str = ""

    @property
    def scale(self) -> str:
        return f"{self.height}x{self.width}"


@dataclass
class QualityReport:
    """Per-scale metric summary with text-table and CSV renderings."""

    model_id: str
    degradation: str
    rows: list[ScaleRow] = field(default_factory=list)

    def to_text(self) -> str:
        lines = [
            f"model: {self.model_id}",
            f"degradation: {self.degradation}",
            "",
            f"{'scale':>10}  {'psnr_db':>9}  {'ssim':>7}  {'count':>5}  note",
        ]
        for r in self.rows:
            p = f"{r.mean_psnr:.4f}" if math.isfinite(r.mean_psnr) else str(r.mean_psnr)
            s = f"{r.mean_ssim:.4f}" if math.isfinite(r.mean_ssim) else str(r.mean_ssim)
            lines.append(f"{r.scale:>10}  {p:>9}  {s:>7}  {r.count:>5}  {r.note}".rstrip())
        return "\n".join(lines) + "\n"

    def to_csv(self) -> str:
        lines = ["scale,psnr,ssim,count"]
        for r in self.rows:
            lines.append(f"{r.scale},{r.mean_psnr},{r.mean_ssim},{r.count}")
        return "\n".join(lines) + "\n"


def _default_restorer(params: ParamStore, cfg: SgenConfig) -> Callable[[Tensor], Tensor]:
    def restore(corrupted: Tensor) -> Tensor:
        out = generator_forward(normalize(corrupted), params, cfg)
        return denormalize(out)

    return restore


def evaluate(
    params: ParamStore,
    cfg: SgenConfig,
    pairs: list[SamplePair],
    model_id: str = "",
    degradation: str = "",
    restorer: Callable[[Tensor], Tensor] | None = None,
) -> QualityReport:
    """Restore every pair and aggregate PSNR/SSIM per scale.

    Scales whose dimensions the model cannot process (not divisible by
    2^(n_levels+1)) get a warning row with count 0 instead of failing the
    whole run.  Infinite PSNR values are excluded from the means; a scale
    where every image restores perfectly reports inf.
    """
    if restorer is None:
        restorer = _default_restorer(params, cfg)
    by_scale: dict[tuple[int, int], list[SamplePair]] = {}
    for pair in pairs:
        _, _, h, w = pair.clean.shape
        by_scale.setdefault((h, w), []).append(pair)

    report = QualityReport(model_id=model_id, degradation=degradation)
    divisor = cfg.divisor
    for (h, w) in sorted(by_scale):
        bucket = by_scale[(h, w)]
        if h % divisor or w % divisor:
            report.rows.append(
                ScaleRow(h, w, math.nan, math.nan, 0, f"skipped: dims not divisible by {divisor}")
            )
            continue
        psnrs, ssims = [], []
        for pair in bucket:
            restored = restorer(pair.corrupted)
            psnrs.append(psnr(restored, pair.clean))
            ssims.append(ssim(restored, pair.clean))
        finite = [v for v in psnrs if math.isfinite(v)]
        mean_psnr = sum(finite) / len(finite) if finite else math.inf
        mean_ssim = sum(ssims) / len(ssims)
        report.rows.append(ScaleRow(h, w, mean_psnr, mean_ssim, len(bucket)))
    return report
