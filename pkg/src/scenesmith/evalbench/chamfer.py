"""Bidirectional L1 chamfer distance."""

from __future__ import annotations

import numpy as np
from scipy.spatial import cKDTree

from .mesh import PointCloud


def _pts(x) -> np.ndarray:
    p = x.points if isinstance(x, PointCloud) else np.asarray(x, dtype=float).reshape(-1, 3)
    if len(p) == 0:
        raise ValueError("chamfer distance needs non-empty point sets")
    return p


def nearest_l1(src: np.ndarray, dst: np.ndarray) -> np.ndarray:
    """For each row of ``src`` the L1 distance to its nearest row of ``dst``."""
    d, _ = cKDTree(dst).query(src, k=1, p=1)
    return d


def chamfer_l1(a, b) -> float:
    """mean_a min_b |a-b|_1 + mean_b min_a |b-a|_1 (each term over its own set)."""
    pa, pb = _pts(a), _pts(b)
    return float(nearest_l1(pa, pb).mean()) + float(nearest_l1(pb, pa).mean())
