"""Albedo-only color correction in LAB."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .color import LAB_MAX, LAB_MIN, lab_to_srgb8, srgb_to_lab

# LAB values live on a 2^-32 grid.  Every value is below 2^8 in magnitude, so
# grid values need at most 40 mantissa bits and sums/differences are exact.
LAB_QUANTUM = 2.0**-32


def to_grid(x) -> np.ndarray:
    return np.round(np.asarray(x, dtype=float) / LAB_QUANTUM) * LAB_QUANTUM


@dataclass(frozen=True)
class AlbedoMap:
    lab: np.ndarray  # (h, w, 3), snapped to LAB_QUANTUM
    source: str = ""

    def __post_init__(self):
        object.__setattr__(self, "lab", to_grid(self.lab))

    @classmethod
    def from_srgb(cls, rgb, source: str = "") -> "AlbedoMap":
        return cls(np.clip(srgb_to_lab(rgb), LAB_MIN, LAB_MAX), source)

    def mean(self) -> np.ndarray:
        return self.lab.reshape(-1, 3).mean(axis=0)

    def to_srgb8(self) -> np.ndarray:
        return lab_to_srgb8(self.lab)


@dataclass(frozen=True)
class ShiftSpec:
    target: tuple[float, float, float]
    segment_id: str = ""

    def __post_init__(self):
        t = np.asarray(self.target, dtype=float)
        if t.shape != (3,) or np.any(t < LAB_MIN) or np.any(t > LAB_MAX):
            raise ValueError(f"target {self.target} outside LAB bounds")


@dataclass(frozen=True)
class ShiftResult:
    albedo: AlbedoMap
    unclamped: np.ndarray
    clamped_fraction: float


def albedo_shift(albedo: AlbedoMap, spec: ShiftSpec) -> ShiftResult:
    """Translate every pixel by (target - mean) so the mean lands on the target.

    Texture detail (pixel differences) is untouched, bit for bit, except where
    the result leaves the LAB bounds and is clamped.  The offset is rounded to
    the LAB grid, so the mean lands within 2^-33 of the target.
    """
    lab = np.asarray(albedo.lab, dtype=float)
    if lab.size == 0:
        raise ValueError("empty albedo map")
    offset = to_grid(np.asarray(spec.target, dtype=float) - lab.reshape(-1, 3).mean(axis=0))
    shifted = lab + offset
    clamped = np.clip(shifted, LAB_MIN, LAB_MAX)
    changed = np.any(clamped != shifted, axis=-1)
    return ShiftResult(
        albedo=AlbedoMap(clamped, albedo.source),
        unclamped=shifted,
        clamped_fraction=float(changed.mean()),
    )
