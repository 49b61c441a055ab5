"""Segment-to-patch mapping, material search and target-color inference."""

from __future__ import annotations

import base64
import io
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from ..retrieval.assets import AssetRecord, read_embeddings, unit_rows, write_embeddings
from .color import srgb_to_lab
from .patches import MaskPatch

STAGE_A_K = 10
STAGE_B_K = 3


class MaterialError(RuntimeError):
    pass


@dataclass
class MaterialRecord:
    id: str
    category: str
    albedo_ref: str
    embedding: np.ndarray
    maps: dict = field(default_factory=dict)  # roughness / metallic / normal refs
    tags: list = field(default_factory=list)
    root: Path | None = None

    def __post_init__(self):
        self.embedding = np.asarray(self.embedding, dtype=float).ravel()
        if abs(float(np.linalg.norm(self.embedding)) - 1.0) > 1e-6:
            raise MaterialError(f"material {self.id}: embedding must have unit norm")

    @property
    def albedo_path(self) -> Path:
        return (self.root or Path(".")) / self.albedo_ref

    def load_albedo(self) -> np.ndarray:
        return np.asarray(Image.open(self.albedo_path).convert("RGB"))

    def manifest(self) -> dict:
        return {"id": self.id, "category": self.category, "albedo": self.albedo_ref, "maps": self.maps, "tags": self.tags}


class MaterialDatabase:
    def __init__(self, records):
        self.records = {r.id: r for r in sorted(records, key=lambda r: r.id)}

    @classmethod
    def load(cls, root) -> "MaterialDatabase":
        recs = []
        for d in sorted(p for p in Path(root).iterdir() if (p / "manifest.json").is_file()):
            man = json.loads((d / "manifest.json").read_text())
            emb = unit_rows(read_embeddings(d / "embeddings.bin"))[0]
            recs.append(
                MaterialRecord(
                    id=man["id"],
                    category=man["category"],
                    albedo_ref=man["albedo"],
                    embedding=emb,
                    maps=man.get("maps", {}),
                    tags=man.get("tags", []),
                    root=d,
                )
            )
        return cls(recs)

    def __getitem__(self, key) -> MaterialRecord:
        return self.records[key]

    def __iter__(self):
        return iter(self.records.values())

    def __len__(self):
        return len(self.records)


def save_material(directory, record: MaterialRecord) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    (directory / "manifest.json").write_text(json.dumps(record.manifest(), indent=2, sort_keys=True) + "\n")
    write_embeddings(directory / "embeddings.bin", record.embedding[None, :])


def png_bytes(pixels) -> bytes:
    buf = io.BytesIO()
    Image.fromarray(np.asarray(pixels, dtype=np.uint8)).save(buf, format="PNG", optimize=False)
    return buf.getvalue()


def patch_bytes(patch: MaskPatch) -> bytes:
    if patch.pixels is not None:
        return png_bytes(patch.pixels)
    return json.dumps({"frame": patch.frame_id, "rect": list(patch.inscribed_rect)}, sort_keys=True).encode()


def stitch_segment_views(asset: AssetRecord, tile: int = 128) -> np.ndarray | None:
    """Side-by-side strip of each material segment's representative view."""
    tiles = []
    for seg in asset.material_segments:
        p = asset.path(seg.view) if seg.view else None
        if p is None or not p.is_file():
            return None
        tiles.append(np.asarray(Image.open(p).convert("RGB").resize((tile, tile))))
    return np.concatenate(tiles, axis=1) if tiles else None


def map_segments_to_patches(asset: AssetRecord, patches: list[MaskPatch], oracle) -> tuple[dict, list[str]]:
    """Assign every material segment of ``asset`` to one patch id.

    Returns the mapping and a list of flags for defaulted entries.
    """
    if not asset.material_segments:
        raise MaterialError(f"asset {asset.id} has no material segments")
    if not patches:
        raise MaterialError("no patches to map")
    seg_ids = [s.id for s in asset.material_segments]
    patch_ids = [p.id for p in patches]
    if len(seg_ids) == 1 and len(patch_ids) == 1:
        return {seg_ids[0]: patch_ids[0]}, []
    stitched = stitch_segment_views(asset)
    request = {
        "task": "map_segments",
        "instruction": "Map each numbered material part of the model to the photo patch showing its material.",
        "segments": [{"id": s} for s in seg_ids],
        "segment_visualization": None if stitched is None else base64.b64encode(png_bytes(stitched)).decode(),
        "patches": [p.to_dict() for p in patches],
    }
    response = oracle.choose(request)
    raw = response.get("mapping", {}) or {}
    mapping, flags = {}, []
    for s in seg_ids:
        chosen = raw.get(s)
        if chosen is None:
            flags.append(f"segment {s} unmapped; defaulted to {patch_ids[0]}")
            chosen = patch_ids[0]
        elif chosen not in patch_ids:
            flags.append(f"segment {s} mapped to unknown patch {chosen!r}; defaulted to {patch_ids[0]}")
            chosen = patch_ids[0]
        mapping[s] = chosen
    return mapping, flags


@dataclass
class MaterialTrace:
    stage_a: list[str]
    category: str
    stage_b: list[tuple[str, float]]
    final: str
    flags: list[str] = field(default_factory=list)

    def check_chain(self) -> bool:
        b = [i for i, _ in self.stage_b]
        return self.final in b and set(b) <= set(self.stage_a)

    def to_dict(self) -> dict:
        return {
            "stage_a": self.stage_a,
            "category": self.category,
            "stage_b": [{"id": i, "score": s} for i, s in self.stage_b],
            "final": self.final,
            "flags": self.flags,
        }


def _embedding_scores(patch_vecs: np.ndarray, mats) -> dict[str, float]:
    return {m.id: float(np.mean(patch_vecs @ m.embedding)) for m in mats}


def search_material(patches: list[MaskPatch], db: MaterialDatabase, provider, oracle) -> tuple[MaterialRecord, MaterialTrace]:
    """Three-stage material choice for one segment.

    A: the oracle names a category and up to 10 candidates in it.
    B: candidates re-ranked by mean cosine similarity to the patch embeddings.
    C: the oracle confirms one of the top 3.
    """
    if len(db) == 0:
        raise MaterialError("material database is empty")
    if not patches:
        raise MaterialError("no patches for material search")
    vecs = np.stack([np.asarray(provider.embed(patch_bytes(p)), dtype=float) for p in patches])
    vecs = vecs / np.linalg.norm(vecs, axis=1, keepdims=True)
    all_scores = _embedding_scores(vecs, db)
    flags: list[str] = []

    resp_a = oracle.choose(
        {
            "task": "material_category",
            "instruction": "Name the material category visible in the patches and list up to 10 matching materials.",
            "patches": [p.to_dict() for p in patches],
            "materials": [
                {"id": m.id, "category": m.category, "tags": m.tags, "score": all_scores[m.id]} for m in db
            ],
        }
    )
    category = resp_a.get("category", "")
    in_cat = [m.id for m in db if m.category == category]
    proposed = [i for i in resp_a.get("candidates", []) if i in in_cat]
    if not in_cat:
        flags.append(f"category {category!r} matches no materials; fell back to full-db embedding ranking")
        stage_a = [i for i, _ in sorted(all_scores.items(), key=lambda kv: (-kv[1], kv[0]))[:STAGE_A_K]]
    else:
        stage_a = (proposed or in_cat)[:STAGE_A_K]

    stage_b = sorted(((i, all_scores[i]) for i in stage_a), key=lambda kv: (-kv[1], kv[0]))[:STAGE_B_K]

    resp_c = oracle.choose(
        {
            "task": "confirm_material",
            "instruction": "Which albedo map is most visually compatible with the reference patches?",
            "patches": [p.to_dict() for p in patches],
            "candidates": [{"id": i, "score": s, "albedo": db[i].albedo_ref} for i, s in stage_b],
        }
    )
    final = resp_c.get("chosen_id")
    if final not in {i for i, _ in stage_b}:
        flags.append(f"confirmation returned {final!r}; fell back to stage-B rank-1")
        final = stage_b[0][0]
    trace = MaterialTrace(stage_a=stage_a, category=category, stage_b=stage_b, final=final, flags=flags)
    return db[final], trace


def infer_target_color(patches: list[MaskPatch], oracle) -> tuple[np.ndarray, list[str]]:
    """Consensus LAB target: channel-wise median of per-patch oracle RGBs."""
    if not patches:
        raise MaterialError("target color needs at least one patch")
    req_patches = []
    for p in patches:
        d = p.to_dict()
        d["mean_rgb"] = list(p.mean_rgb) if p.mean_rgb is not None else [128.0, 128.0, 128.0]
        if p.pixels is not None:
            d["image"] = base64.b64encode(png_bytes(p.pixels)).decode()
        req_patches.append(d)
    resp = oracle.choose(
        {
            "task": "target_rgb",
            "instruction": "Report the RGB color of the material part in each patch, ignoring lighting.",
            "patches": req_patches,
        }
    )
    rgb = np.asarray(resp["rgb"], dtype=float).reshape(-1, 3)
    flags = []
    if np.any((rgb < 0) | (rgb > 255)):
        flags.append("oracle RGB out of range; clamped to [0, 255]")
        rgb = np.clip(rgb, 0.0, 255.0)
    consensus = np.median(rgb, axis=0)
    return srgb_to_lab(consensus / 255.0), flags
