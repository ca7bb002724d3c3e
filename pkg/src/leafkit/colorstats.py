"""Per-channel color indicators over masked pixels: median, mean, and the
1/3 and 2/3 tertiles for R, G, B.

Quantiles use linear interpolation on the sorted sample (the type-7
convention), so the median is exactly the q = 0.5 quantile.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .ingest import InstanceMask


@dataclass(frozen=True)
class ColorIndicators:
    r_median: float
    g_median: float
    b_median: float
    r_mean: float
    g_mean: float
    b_mean: float
    r_lower: float
    g_lower: float
    b_lower: float
    r_upper: float
    g_upper: float
    b_upper: float

    def as_tuple(self):
        return (self.r_median, self.g_median, self.b_median,
                self.r_mean, self.g_mean, self.b_mean,
                self.r_lower, self.g_lower, self.b_lower,
                self.r_upper, self.g_upper, self.b_upper)


def channel_quantile(values, q: float) -> float:
    """Linear-interpolation quantile at rank q * (n - 1)."""
    arr = np.asarray(values, dtype=float).ravel()
    if arr.size == 0:
        raise ValidationError("quantile of an empty sample")
    if not (0.0 <= q <= 1.0):
        raise ValidationError(f"quantile rank {q} outside [0, 1]")
    srt = np.sort(arr)
    pos = q * (srt.size - 1)
    lo = int(np.floor(pos))
    hi = int(np.ceil(pos))
    frac = pos - lo
    return float(srt[lo] * (1.0 - frac) + srt[hi] * frac)


def color_indicators(image: np.ndarray, mask) -> ColorIndicators:
    """Statistics over exactly the masked pixels of an RGB image."""
    grid = mask.grid if isinstance(mask, InstanceMask) else np.asarray(mask,
                                                                       bool)
    image = np.asarray(image)
    if image.ndim != 3 or image.shape[2] != 3:
        raise ValidationError(f"expected (H, W, 3) RGB image, got "
                              f"{image.shape}")
    if image.shape[:2] != grid.shape:
        raise ValidationError(f"image {image.shape[:2]} and mask {grid.shape} "
                              "dimensions differ")
    if not grid.any():
        raise ValidationError("empty mask")
    pixels = image[grid].astype(float)  # (n, 3)
    med, low, up, mean = [], [], [], []
    for c in range(3):
        chan = pixels[:, c]
        med.append(channel_quantile(chan, 0.5))
        low.append(channel_quantile(chan, 1.0 / 3.0))
        up.append(channel_quantile(chan, 2.0 / 3.0))
        mean.append(float(chan.mean()))
    return ColorIndicators(
        med[0], med[1], med[2],
        mean[0], mean[1], mean[2],
        low[0], low[1], low[2],
        up[0], up[1], up[2],
    )
