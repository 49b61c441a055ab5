"""sRGB <-> CIE LAB (D65 white, 2 degree observer)."""

from __future__ import annotations

import numpy as np

WHITE_D65 = np.array([0.95047, 1.0, 1.08883])

_RGB_TO_XYZ = np.array(
    [
        [0.4124564, 0.3575761, 0.1804375],
        [0.2126729, 0.7151522, 0.0721750],
        [0.0193339, 0.1191920, 0.9503041],
    ]
)
_XYZ_TO_RGB = np.linalg.inv(_RGB_TO_XYZ)

_EPS = 216.0 / 24389.0
_KAPPA = 24389.0 / 27.0

LAB_MIN = np.array([0.0, -128.0, -128.0])
LAB_MAX = np.array([100.0, 127.0, 127.0])


def _to_unit(rgb) -> np.ndarray:
    a = np.asarray(rgb)
    if a.dtype.kind in "ui":
        return a.astype(float) / 255.0
    return a.astype(float)


def srgb_to_linear(c):
    c = np.asarray(c, dtype=float)
    return np.where(c <= 0.04045, c / 12.92, ((c + 0.055) / 1.055) ** 2.4)


def linear_to_srgb(c):
    c = np.asarray(c, dtype=float)
    return np.where(c <= 0.0031308, 12.92 * c, 1.055 * np.power(np.maximum(c, 0.0), 1.0 / 2.4) - 0.055)


def srgb_to_lab(rgb) -> np.ndarray:
    """sRGB (uint8, or floats in [0, 1]) with trailing channel axis -> LAB."""
    xyz = srgb_to_linear(_to_unit(rgb)) @ _RGB_TO_XYZ.T
    t = xyz / WHITE_D65
    f = np.where(t > _EPS, np.cbrt(t), (_KAPPA * t + 16.0) / 116.0)
    lab = np.empty_like(f)
    lab[..., 0] = 116.0 * f[..., 1] - 16.0
    lab[..., 1] = 500.0 * (f[..., 0] - f[..., 1])
    lab[..., 2] = 200.0 * (f[..., 1] - f[..., 2])
    return lab


def lab_to_srgb(lab) -> np.ndarray:
    """LAB -> sRGB floats in [0, 1] (out-of-gamut values clipped)."""
    lab = np.asarray(lab, dtype=float)
    fy = (lab[..., 0] + 16.0) / 116.0
    fx = fy + lab[..., 1] / 500.0
    fz = fy - lab[..., 2] / 200.0
    f = np.stack([fx, fy, fz], axis=-1)
    t = np.where(f**3 > _EPS, f**3, (116.0 * f - 16.0) / _KAPPA)
    # L drives Y directly below the linear-segment knee
    t[..., 1] = np.where(lab[..., 0] > _KAPPA * _EPS, fy**3, lab[..., 0] / _KAPPA)
    xyz = t * WHITE_D65
    return np.clip(linear_to_srgb(xyz @ _XYZ_TO_RGB.T), 0.0, 1.0)


def lab_to_srgb8(lab) -> np.ndarray:
    return np.round(lab_to_srgb(lab) * 255.0).astype(np.uint8)
