"""Representative-view selection by reprojected visibility counts."""

from __future__ import annotations

import numpy as np


class UnobservedError(ValueError):
    pass


def visible_counts(points, frames) -> dict[str, int]:
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    out = {}
    for f in frames:
        uv, z = f.project(pts)
        ok = (z > 0) & (uv[:, 0] >= 0) & (uv[:, 0] < f.width) & (uv[:, 1] >= 0) & (uv[:, 1] < f.height)
        out[f.id] = int(np.count_nonzero(ok))
    return out


def select_representative_views(points, frames, k: int = 4) -> list[str]:
    """The ``k`` frames seeing the most points; ties by frame id."""
    if not frames:
        raise ValueError("no frames")
    counts = visible_counts(points, frames)
    ranked = sorted((fid for fid, c in counts.items() if c > 0), key=lambda fid: (-counts[fid], fid))
    if not ranked:
        raise UnobservedError("object unobserved")
    return ranked[:k]
