"""On-disk asset database.

One directory per asset holding the mesh, ``manifest.json`` and
``embeddings.bin``.  The embedding file is a little-endian header
(magic ``SSEM``, u32 n_views, u32 d) followed by row-major float32 rows.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

MAGIC = b"SSEM"
_HEADER = struct.Struct("<4sII")


class AssetDatabaseError(ValueError):
    pass


def write_embeddings(path, matrix) -> None:
    m = np.ascontiguousarray(np.asarray(matrix, dtype="<f4"))
    if m.ndim != 2:
        raise ValueError("embedding matrix must be 2-D")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, m.shape[0], m.shape[1]))
        fh.write(m.tobytes(order="C"))


def read_embeddings(path) -> np.ndarray:
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise AssetDatabaseError(f"{path}: truncated embedding header")
    magic, n, d = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise AssetDatabaseError(f"{path}: bad magic {magic!r}")
    body = data[_HEADER.size :]
    if len(body) != 4 * n * d:
        raise AssetDatabaseError(f"{path}: expected {n}x{d} float32 rows, got {len(body)} bytes")
    return np.frombuffer(body, dtype="<f4").reshape(n, d).astype(np.float64)


def unit_rows(m) -> np.ndarray:
    m = np.asarray(m, dtype=np.float64)
    return m / np.linalg.norm(m, axis=1, keepdims=True)


@dataclass(frozen=True)
class MaterialSegment:
    id: str
    triangles: tuple[int, int]  # half-open triangle index range
    view: str = ""  # representative view image, relative to the asset dir


@dataclass
class AssetRecord:
    id: str
    category: str
    subcategory: str
    mesh_ref: str
    view_embeddings: np.ndarray
    views: list[dict] = field(default_factory=list)  # {"image": path, "pose": [...]}
    material_segments: list[MaterialSegment] = field(default_factory=list)
    articulated: bool = False
    joints: list = field(default_factory=list)
    canonical_dims: tuple[float, float, float] = (1.0, 1.0, 1.0)
    front_axis: str = "+Y"
    triangle_count: int | None = None
    root: Path | None = None

    def __post_init__(self):
        norms = np.linalg.norm(self.view_embeddings, axis=1)
        if len(norms) == 0 or np.any(np.abs(norms - 1.0) > 1e-6):
            raise AssetDatabaseError(f"asset {self.id}: view embeddings must be unit rows")
        if self.material_segments and self.triangle_count is not None:
            spans = sorted(s.triangles for s in self.material_segments)
            cursor = 0
            for lo, hi in spans:
                if lo != cursor or hi <= lo:
                    raise AssetDatabaseError(
                        f"asset {self.id}: material segments must partition the triangles"
                    )
                cursor = hi
            if cursor != self.triangle_count:
                raise AssetDatabaseError(f"asset {self.id}: material segments leave triangles unassigned")

    def path(self, rel: str) -> Path:
        return (self.root or Path(".")) / rel

    @property
    def mesh_path(self) -> Path:
        return self.path(self.mesh_ref)

    def manifest(self) -> dict:
        return {
            "id": self.id,
            "category": self.category,
            "subcategory": self.subcategory,
            "mesh": self.mesh_ref,
            "views": self.views,
            "material_segments": [
                {"id": s.id, "triangles": list(s.triangles), "view": s.view} for s in self.material_segments
            ],
            "articulated": self.articulated,
            "joints": self.joints,
            "canonical_dims": list(self.canonical_dims),
            "front_axis": self.front_axis,
            "triangle_count": self.triangle_count,
        }


def load_asset(directory) -> AssetRecord:
    directory = Path(directory)
    man = json.loads((directory / "manifest.json").read_text())
    emb = read_embeddings(directory / "embeddings.bin")
    return AssetRecord(
        id=man["id"],
        category=man["category"],
        subcategory=man.get("subcategory", ""),
        mesh_ref=man.get("mesh", ""),
        view_embeddings=unit_rows(emb),
        views=man.get("views", []),
        material_segments=[
            MaterialSegment(s["id"], tuple(s["triangles"]), s.get("view", ""))
            for s in man.get("material_segments", [])
        ],
        articulated=bool(man.get("articulated", False)),
        joints=man.get("joints", []),
        canonical_dims=tuple(man.get("canonical_dims", (1.0, 1.0, 1.0))),
        front_axis=man.get("front_axis", "+Y"),
        triangle_count=man.get("triangle_count"),
        root=directory,
    )


def save_asset(directory, record: AssetRecord) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    (directory / "manifest.json").write_text(json.dumps(record.manifest(), indent=2, sort_keys=True) + "\n")
    write_embeddings(directory / "embeddings.bin", record.view_embeddings)


class AssetDatabase:
    """Read-only, id-ordered collection of asset records."""

    def __init__(self, records):
        self.records = {r.id: r for r in sorted(records, key=lambda r: r.id)}

    @classmethod
    def load(cls, root) -> "AssetDatabase":
        root = Path(root)
        dirs = sorted(p for p in root.iterdir() if (p / "manifest.json").is_file())
        return cls(load_asset(d) for d in dirs)

    def __getitem__(self, asset_id: str) -> AssetRecord:
        return self.records[asset_id]

    def __contains__(self, asset_id) -> bool:
        return asset_id in self.records

    def __iter__(self):
        return iter(self.records.values())

    def __len__(self):
        return len(self.records)
