"""Clean rectangular patches from segmentation masks."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage


class NoUsablePatches(ValueError):
    pass


def largest_rectangle(mask) -> tuple[int, int, int, int]:
    """Maximum-area axis-aligned rectangle of true cells, as (x, y, w, h).

    Row-by-row histogram sweep with a monotonic stack, O(h*w).  Returns
    (0, 0, 0, 0) for an empty mask.
    """
    m = np.asarray(mask, dtype=bool)
    rows, cols = m.shape
    heights = np.zeros(cols, dtype=np.int64)
    best = (0, 0, 0, 0, 0)  # area, x, y, w, h
    for r in range(rows):
        heights = np.where(m[r], heights + 1, 0)
        stack: list[int] = []
        for c in range(cols + 1):
            h = int(heights[c]) if c < cols else 0
            while stack and int(heights[stack[-1]]) >= h:
                top = stack.pop()
                height = int(heights[top])
                left = stack[-1] + 1 if stack else 0
                area = height * (c - left)
                if area > best[0]:
                    best = (area, left, r - height + 1, c - left, height)
            if c < cols:
                stack.append(c)
    return best[1:]


def _gray(image) -> np.ndarray:
    img = np.asarray(image, dtype=float)
    if img.max(initial=0.0) > 1.0:
        img = img / 255.0
    if img.ndim == 3:
        img = img[..., :3] @ np.array([0.299, 0.587, 0.114])
    return img


def smoothness(image, rect) -> float:
    """Mean Sobel gradient magnitude inside ``rect`` (lower is smoother)."""
    if image is None:
        return 0.0
    x, y, w, h = rect
    g = _gray(image)[y : y + h, x : x + w]
    if g.size == 0:
        return 0.0
    gx = ndimage.sobel(g, axis=1, mode="nearest")
    gy = ndimage.sobel(g, axis=0, mode="nearest")
    return float(np.mean(np.hypot(gx, gy)))


@dataclass
class MaskInput:
    frame_id: str
    mask: np.ndarray
    image: np.ndarray | None = None


@dataclass
class MaskPatch:
    id: str
    frame_id: str
    mask: np.ndarray = field(repr=False)
    inscribed_rect: tuple[int, int, int, int]
    smoothness: float
    area_px: int
    pixels: np.ndarray | None = field(default=None, repr=False)

    @property
    def score(self) -> float:
        return self.area_px / (1.0 + self.smoothness)

    @property
    def mean_rgb(self) -> tuple[float, float, float] | None:
        if self.pixels is None or self.pixels.ndim != 3:
            return None
        return tuple(float(v) for v in self.pixels.reshape(-1, self.pixels.shape[-1])[:, :3].mean(axis=0))

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "frame_id": self.frame_id,
            "inscribed_rect": list(self.inscribed_rect),
            "smoothness": self.smoothness,
            "area_px": self.area_px,
            "score": self.score,
        }


def extract_patches(masks: list[MaskInput], k: int = 4, min_size: tuple[int, int] = (16, 16)) -> list[MaskPatch]:
    """Top-``k`` inscribed-rectangle patches ranked by area / (1 + smoothness)."""
    if not masks:
        raise NoUsablePatches("no masks given")
    patches = []
    for i, m in enumerate(masks):
        rect = largest_rectangle(m.mask)
        x, y, w, h = rect
        if w < min_size[0] or h < min_size[1]:
            continue
        pixels = None if m.image is None else np.asarray(m.image)[y : y + h, x : x + w].copy()
        patches.append(
            MaskPatch(
                id=f"{m.frame_id}#{i}",
                frame_id=m.frame_id,
                mask=np.asarray(m.mask, dtype=bool),
                inscribed_rect=rect,
                smoothness=smoothness(m.image, rect),
                area_px=w * h,
                pixels=pixels,
            )
        )
    if not patches:
        raise NoUsablePatches("no usable patches: every inscribed rectangle is below the minimum size")
    patches.sort(key=lambda p: (-p.score, p.id))
    return patches[:k]
