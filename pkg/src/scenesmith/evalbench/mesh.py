"""Triangle meshes: OBJ subset I/O, unit-cube normalization, surface sampling."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np


class MeshError(ValueError):
    pass


@dataclass(frozen=True)
class Mesh:
    vertices: np.ndarray  # (n, 3)
    faces: np.ndarray  # (m, 3) int
    id: str = ""

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=float).reshape(-1, 3)
        f = np.asarray(self.faces, dtype=np.int64).reshape(-1, 3)
        if len(f) == 0:
            raise MeshError(f"mesh {self.id!r}: no triangles")
        if not np.all(np.isfinite(v)):
            raise MeshError(f"mesh {self.id!r}: non-finite vertices")
        if f.min() < 0 or f.max() >= len(v):
            raise MeshError(f"mesh {self.id!r}: face index out of range")
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "faces", f)

    @property
    def triangles(self) -> np.ndarray:
        return self.vertices[self.faces]

    def areas(self) -> np.ndarray:
        t = self.triangles
        return 0.5 * np.linalg.norm(np.cross(t[:, 1] - t[:, 0], t[:, 2] - t[:, 0]), axis=1)

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        return self.vertices.min(axis=0), self.vertices.max(axis=0)


@dataclass(frozen=True)
class PointCloud:
    points: np.ndarray
    source: str = ""
    seed: int | None = None
    triangle_index: np.ndarray | None = None

    def __post_init__(self):
        p = np.asarray(self.points, dtype=float).reshape(-1, 3)
        if len(p) == 0:
            raise ValueError("point cloud is empty")
        if not np.all(np.isfinite(p)):
            raise ValueError("point cloud has non-finite coordinates")
        object.__setattr__(self, "points", p)

    def __len__(self):
        return len(self.points)


def load_obj(path, mesh_id: str | None = None) -> Mesh:
    """``v`` and ``f`` lines only; polygons are fan-triangulated; ``f a/b/c`` accepted."""
    verts, faces = [], []
    for line in Path(path).read_text().splitlines():
        parts = line.split()
        if not parts:
            continue
        if parts[0] == "v":
            verts.append([float(x) for x in parts[1:4]])
        elif parts[0] == "f":
            idx = []
            for tok in parts[1:]:
                i = int(tok.split("/")[0])
                idx.append(i - 1 if i > 0 else len(verts) + i)
            for k in range(1, len(idx) - 1):
                faces.append([idx[0], idx[k], idx[k + 1]])
    return Mesh(np.array(verts, dtype=float), np.array(faces, dtype=np.int64), mesh_id or Path(path).stem)


def save_obj(path, mesh: Mesh) -> None:
    lines = [f"v {x!r} {y!r} {z!r}" for x, y, z in mesh.vertices.tolist()]
    lines += [f"f {a + 1} {b + 1} {c + 1}" for a, b, c in mesh.faces.tolist()]
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text("\n".join(lines) + "\n")


def box_mesh(dims=(1.0, 1.0, 1.0), center=(0.0, 0.0, 0.0), mesh_id: str = "box") -> Mesh:
    """Axis-aligned box with outward-facing triangles."""
    h = np.asarray(dims, dtype=float) / 2.0
    c = np.asarray(center, dtype=float)
    s = np.array([[x, y, z] for z in (-1, 1) for y in (-1, 1) for x in (-1, 1)], dtype=float)
    quads = [(0, 2, 3, 1), (4, 5, 7, 6), (0, 1, 5, 4), (2, 6, 7, 3), (0, 4, 6, 2), (1, 3, 7, 5)]
    faces = [[q[0], q[1], q[2]] for q in quads] + [[q[0], q[2], q[3]] for q in quads]
    return Mesh(c + s * h, np.array(faces), mesh_id)


_NORMALIZED_TOL = 1e-12


def normalize_mesh(mesh: Mesh, fit: str = "extent") -> Mesh:
    """Center the bounding box at the origin and scale uniformly into the unit cube.

    ``fit="extent"`` makes the largest axis extent 1; ``fit="diagonal"`` makes the
    bounding-box diagonal 1.  A mesh that already satisfies the target (to 1e-12)
    is returned as-is, which makes the operation an exact fixpoint.
    """
    lo, hi = mesh.bounds()
    ext = hi - lo
    if fit == "extent":
        size = float(ext.max())
    elif fit == "diagonal":
        size = float(np.linalg.norm(ext))
    else:
        raise ValueError(f"unknown fit {fit!r}")
    if size <= 0.0:
        raise MeshError(f"mesh {mesh.id!r}: degenerate, zero extent on all axes")
    center = (lo + hi) / 2.0
    if np.all(np.abs(center) <= _NORMALIZED_TOL) and abs(size - 1.0) <= _NORMALIZED_TOL:
        return mesh
    return Mesh((mesh.vertices - center) / size, mesh.faces, mesh.id)


def sample_surface(mesh: Mesh, n: int = 10000, seed: int = 0) -> PointCloud:
    """Area-weighted uniform samples via cumulative-area inversion (PCG64)."""
    if n <= 0:
        raise ValueError("n must be positive")
    areas = mesh.areas()
    total = float(areas.sum())
    if total <= 0.0:
        raise MeshError(f"mesh {mesh.id!r}: zero surface area")
    cdf = np.cumsum(areas) / total
    cdf[-1] = 1.0
    rng = np.random.Generator(np.random.PCG64(seed))
    u = rng.random(n)
    tri = np.minimum(np.searchsorted(cdf, u, side="right"), len(areas) - 1)
    r1 = np.sqrt(rng.random(n))
    r2 = rng.random(n)
    t = mesh.triangles[tri]
    pts = (1.0 - r1)[:, None] * t[:, 0] + (r1 * (1.0 - r2))[:, None] * t[:, 1] + (r1 * r2)[:, None] * t[:, 2]
    return PointCloud(pts, source=mesh.id, seed=seed, triangle_index=tri)
