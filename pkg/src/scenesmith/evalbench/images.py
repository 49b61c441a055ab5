"""RMSE and SSIM between equally sized images."""

from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image

LUMA = np.array([0.299, 0.587, 0.114])
SSIM_WINDOW = 8
C1 = 0.01**2
C2 = 0.03**2


def as_unit(img) -> np.ndarray:
    """Image (path, PIL image or array) as floats in [0, 1]; integer input is divided by 255."""
    if isinstance(img, (str, Path)):
        img = Image.open(img)
    if isinstance(img, Image.Image):
        img = np.asarray(img.convert("RGB") if img.mode not in ("L", "RGB") else img)
    a = np.asarray(img)
    if a.dtype.kind in "ui":
        return a.astype(float) / 255.0
    return a.astype(float)


def luma(img) -> np.ndarray:
    a = as_unit(img)
    if a.ndim == 3:
        return a[..., :3] @ LUMA
    return a


def _check(a, b):
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")


def image_rmse(a, b) -> float:
    x, y = as_unit(a), as_unit(b)
    _check(x, y)
    return float(np.sqrt(np.mean((x - y) ** 2)))


def _box_mean(x: np.ndarray, w: int) -> np.ndarray:
    """Means over every fully contained w x w window (valid mode) via an integral image."""
    s = np.zeros((x.shape[0] + 1, x.shape[1] + 1))
    s[1:, 1:] = x.cumsum(0).cumsum(1)
    return (s[w:, w:] - s[:-w, w:] - s[w:, :-w] + s[:-w, :-w]) / (w * w)


def ssim_map(a, b, window: int = SSIM_WINDOW) -> np.ndarray:
    x, y = luma(a), luma(b)
    _check(x, y)
    if min(x.shape) < window:
        raise ValueError(f"image smaller than the {window}x{window} SSIM window")
    mx, my = _box_mean(x, window), _box_mean(y, window)
    vx = _box_mean(x * x, window) - mx * mx
    vy = _box_mean(y * y, window) - my * my
    cxy = _box_mean(x * y, window) - mx * my
    return ((2 * mx * my + C1) * (2 * cxy + C2)) / ((mx * mx + my * my + C1) * (vx + vy + C2))


def image_ssim(a, b, window: int = SSIM_WINDOW) -> float:
    return float(ssim_map(a, b, window).mean())
