"""Grouping identical objects: KMeans with silhouette model selection, then a
split by dominant crop color."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class ClusterConfig:
    max_k: int = 10
    n_init: int = 10
    max_iter: int = 100
    tol: float = 1e-8
    # below this best silhouette the members are treated as one group
    min_silhouette: float = 0.25
    identical_tol: float = 1e-9


def _pairwise(x: np.ndarray) -> np.ndarray:
    return np.sqrt(((x[:, None, :] - x[None, :, :]) ** 2).sum(axis=2))


def _kmeanspp(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = len(x)
    centers = [x[rng.integers(n)]]
    d2 = np.sum((x - centers[0]) ** 2, axis=1)
    for _ in range(1, k):
        total = d2.sum()
        if total <= 0.0:
            idx = rng.integers(n)
        else:
            idx = int(np.searchsorted(np.cumsum(d2), rng.random() * total, side="right"))
            idx = min(idx, n - 1)
        centers.append(x[idx])
        d2 = np.minimum(d2, np.sum((x - x[idx]) ** 2, axis=1))
    return np.array(centers)


def kmeans(x, k: int, seed: int, cfg: ClusterConfig = ClusterConfig()) -> tuple[np.ndarray, np.ndarray, float]:
    """Lloyd iterations from k-means++ seeds; best of ``n_init`` restarts.

    Returns ``(labels, centers, inertia)``.
    """
    x = np.asarray(x, dtype=float)
    best = None
    for restart in range(cfg.n_init):
        rng = np.random.Generator(np.random.PCG64([seed, restart]))
        centers = _kmeanspp(x, k, rng)
        for _ in range(cfg.max_iter):
            d2 = ((x[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
            labels = np.argmin(d2, axis=1)
            new = centers.copy()
            for j in range(k):
                pts = x[labels == j]
                if len(pts):
                    new[j] = pts.mean(axis=0)
                else:  # re-seed an empty cluster at the worst-fit point
                    new[j] = x[int(np.argmax(d2[np.arange(len(x)), labels]))]
            shift = float(np.max(np.linalg.norm(new - centers, axis=1)))
            centers = new
            if shift < cfg.tol:
                break
        d2 = ((x[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        labels = np.argmin(d2, axis=1)
        inertia = float(d2[np.arange(len(x)), labels].sum())
        if best is None or inertia < best[2] - 1e-12:
            best = (labels, centers, inertia)
    return best


def silhouette_score(x, labels) -> float:
    """Mean silhouette over all points (singleton clusters score 0)."""
    x = np.asarray(x, dtype=float)
    labels = np.asarray(labels)
    dist = _pairwise(x)
    uniq = np.unique(labels)
    if len(uniq) < 2:
        raise ValueError("silhouette needs at least 2 clusters")
    onehot = (labels[:, None] == uniq[None, :]).astype(float)
    sums = dist @ onehot
    counts = onehot.sum(axis=0)
    own = np.searchsorted(uniq, labels)
    n_own = counts[own]
    a = np.where(n_own > 1, sums[np.arange(len(x)), own] / np.maximum(n_own - 1, 1), 0.0)
    mean_other = sums / counts[None, :]
    mean_other[np.arange(len(x)), own] = np.inf
    b = mean_other.min(axis=1)
    denom = np.maximum(a, b)
    s = np.where((n_own > 1) & (denom > 0), (b - a) / np.where(denom > 0, denom, 1.0), 0.0)
    return float(s.mean())


def select_k(x, seed: int, cfg: ClusterConfig = ClusterConfig()) -> tuple[int, np.ndarray, float]:
    """Cluster count in [2, min(n-1, max_k)] with the best silhouette.

    Falls back to a single cluster when the features are identical or no
    split reaches ``min_silhouette``.
    """
    x = np.asarray(x, dtype=float)
    n = len(x)
    one = (1, np.zeros(n, dtype=int), float("nan"))
    if n < 3 or float(_pairwise(x).max()) <= cfg.identical_tol:
        return one
    best = None
    for k in range(2, min(n - 1, cfg.max_k) + 1):
        labels, _, _ = kmeans(x, k, seed, cfg)
        if len(np.unique(labels)) < 2:
            continue
        s = silhouette_score(x, labels)
        if best is None or s > best[2] + 1e-12:
            best = (k, labels, s)
    if best is None or best[2] < cfg.min_silhouette:
        return one
    return best


def dominant_color(pixels) -> int | None:
    """Index (r*16 + g*4 + b) of the fullest bin of a 4x4x4 RGB histogram."""
    arrays = [np.asarray(p, dtype=np.uint8).reshape(-1, 3) for p in pixels if p is not None and np.size(p)]
    if not arrays:
        return None
    px = np.concatenate(arrays).astype(np.int64) // 64
    idx = px[:, 0] * 16 + px[:, 1] * 4 + px[:, 2]
    return int(np.argmax(np.bincount(idx, minlength=64)))


def cluster_identical(
    ids: list[str],
    features,
    crop_pixels: list | None = None,
    seed: int = 0,
    cfg: ClusterConfig = ClusterConfig(),
) -> list[list[str]]:
    """Group objects of one subcategory into sets of identical items.

    ``features[i]`` is the mean crop embedding of object ``ids[i]``;
    ``crop_pixels[i]`` is a list of its crop images (RGB uint8) or None.
    Clusters come back sorted by their first member id.
    """
    if len(ids) == 0:
        return []
    if len(ids) == 1:
        return [list(ids)]
    _, labels, _ = select_k(features, seed, cfg)
    groups: dict[tuple, list[str]] = {}
    for i, obj_id in enumerate(ids):
        color = dominant_color(crop_pixels[i]) if crop_pixels is not None else None
        groups.setdefault((int(labels[i]), color if color is not None else -1), []).append(obj_id)
    return sorted((sorted(g) for g in groups.values()), key=lambda g: g[0])
