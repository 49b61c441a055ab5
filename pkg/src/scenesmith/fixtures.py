"""Deterministic synthetic demo data: a two-room scan, asset and material
databases, masks, and benchmark inputs.

Everything is drawn from a PCG64 stream, so ``generate_demo`` writes the same
files on every call.  Frame images are flat-shaded rectangles; the views of
the "true" assets are cut from the same frames, so the stub provider (a hash
of the image bytes) recognises them exactly.
"""

from __future__ import annotations

import hashlib
import io
import json
import math
from pathlib import Path

import numpy as np
from PIL import Image

from .evalbench.mesh import Mesh, box_mesh, save_obj
from .material.search import MaterialRecord, save_material
from .retrieval.assets import AssetRecord, MaterialSegment, save_asset
from .retrieval.providers import StubEmbeddingProvider

FRAME_W, FRAME_H = 192, 144

# object id -> appearance name; identical items share an appearance
APPEARANCE = {
    "table-1": "table-walnut",
    "chair-1": "chair-oak",
    "chair-2": "chair-oak",
    "storage-1": "cabinet-white",
    "vase-1": "vase-blue",
    "sofa-1": "sofa-grey",
    "fridge-1": "fridge-steel",
    "chair-3": "armchair-red",
}

BASE_COLORS = {
    "table-walnut": (110, 70, 40),
    "chair-oak": (190, 150, 90),
    "cabinet-white": (225, 225, 215),
    "vase-blue": (40, 70, 170),
    "sofa-grey": (120, 120, 125),
    "fridge-steel": (180, 185, 190),
    "armchair-red": (170, 40, 40),
}

# frame id -> {object id: (x, y, w, h)}
RECTS = {
    "f0": {
        "storage-1": (10, 10, 30, 60),
        "vase-1": (90, 20, 18, 30),
        "table-1": (70, 60, 60, 30),
        "chair-1": (20, 80, 24, 36),
        "chair-2": (150, 80, 24, 36),
    },
    "f1": {
        "table-1": (40, 50, 80, 40),
        "chair-1": (130, 70, 30, 44),
        "chair-2": (2, 70, 30, 44),
        "vase-1": (70, 10, 20, 34),
    },
    "f2": {
        "fridge-1": (140, 10, 40, 110),
        "chair-3": (100, 20, 30, 30),
        "sofa-1": (20, 60, 100, 40),
    },
}
VISIBILITY = {"f0": 0.9, "f1": 0.7, "f2": 0.8}


def _rng(*key) -> np.random.Generator:
    digest = hashlib.sha256(repr(key).encode()).digest()
    return np.random.Generator(np.random.PCG64(int.from_bytes(digest[:16], "little")))


def texture(name: str, w: int, h: int, color=None) -> np.ndarray:
    """Base color plus mild seeded noise and a stripe, uint8 (h, w, 3)."""
    base = np.array(color or BASE_COLORS.get(name, (128, 128, 128)), dtype=float)
    noise = _rng("tex", name, w, h).normal(0.0, 6.0, size=(h, w, 3))
    img = base + noise
    img[:, ::7] *= 0.9
    return np.clip(np.round(img), 0, 255).astype(np.uint8)


def png_bytes(pixels) -> bytes:
    buf = io.BytesIO()
    Image.fromarray(np.asarray(pixels, dtype=np.uint8)).save(buf, format="PNG", optimize=False)
    return buf.getvalue()


def _write_png(path: Path, pixels) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(png_bytes(pixels))


def frame_image(fid: str) -> np.ndarray:
    img = np.full((FRAME_H, FRAME_W, 3), 200, dtype=np.uint8)
    img[FRAME_H // 2 :] = 160  # floor
    for oid, (x, y, w, h) in RECTS[fid].items():
        img[y : y + h, x : x + w] = texture(APPEARANCE[oid], w, h)
    return img


def _camera(fid: str, position, heading_deg: float) -> dict:
    """Horizontal camera looking along ``heading``; pose is world -> camera."""
    t = math.radians(heading_deg)
    fwd = np.array([math.cos(t), math.sin(t), 0.0])
    right = np.array([math.sin(t), -math.cos(t), 0.0])
    down = np.array([0.0, 0.0, -1.0])
    rot = np.stack([right, down, fwd])
    trans = -rot @ np.asarray(position, dtype=float)
    pose = np.eye(4)
    pose[:3, :3] = rot
    pose[:3, 3] = trans
    return {
        "id": fid,
        "pose": [round(float(v), 12) + 0.0 for v in pose.ravel()],
        "intrinsics": {"fx": 160.0, "fy": 160.0, "cx": FRAME_W / 2, "cy": FRAME_H / 2, "width": FRAME_W, "height": FRAME_H},
        "image": f"frames/{fid}.png",
    }


def _crops(oid: str) -> list[dict]:
    out = []
    for fid, rects in RECTS.items():
        if oid in rects:
            out.append({"frame_id": fid, "bbox_px": list(rects[oid]), "visibility": VISIBILITY[fid]})
    return sorted(out, key=lambda c: (-c["visibility"], c["frame_id"]))


def demo_scan() -> dict:
    """Two adjoining rooms (4x3 and 3x3 m) drawn with centimetre-level noise."""
    walls = [
        {"id": "w-south-a", "p0": [0.01, -0.01], "p1": [3.99, 0.0],
         "openings": [{"id": "window-1", "kind": "window", "interval": [2.5, 3.5], "z": [1.0, 2.0]}]},
        {"id": "w-south-b", "p0": [4.0, 0.01], "p1": [7.01, 0.0]},
        {"id": "w-east", "p0": [7.0, -0.01], "p1": [6.99, 3.0]},
        {"id": "w-north-b", "p0": [7.0, 3.01], "p1": [4.01, 3.0]},
        {"id": "w-north-a", "p0": [3.99, 2.99], "p1": [0.0, 3.0]},
        {"id": "w-west", "p0": [-0.01, 3.0], "p1": [0.0, 0.02]},
        {"id": "w-shared", "p0": [4.0, 0.0], "p1": [4.01, 3.0],
         "openings": [{"id": "door-1", "kind": "door", "interval": [1.0, 2.0], "z": [0.0, 2.1]}]},
    ]
    for w in walls:
        w["height"] = 2.5
    objects = [
        ("table-1", "table", "dining table", (2.0, 1.5, 0.375), (1.2, 0.75, 0.8), 0.0),
        ("chair-1", "chair", "dining chair", (2.0, 0.75, 0.45), (0.45, 0.9, 0.45), 0.0),
        ("chair-2", "chair", "dining chair", (2.0, 2.25, 0.45), (0.45, 0.9, 0.45), 180.0),
        ("storage-1", "storage", "cabinet", (0.25, 1.5, 0.9), (0.8, 1.8, 0.4), -90.0),
        ("vase-1", "other", "vase", (2.1, 1.5, 0.91), (0.15, 0.3, 0.15), 0.0),
        ("sofa-1", "sofa", "", (5.5, 2.5, 0.4), (2.0, 0.8, 0.9), 180.0),
        ("fridge-1", "refrigerator", "", (6.6, 0.8, 0.9), (0.7, 1.8, 0.7), 90.0),
        ("chair-3", "chair", "armchair", (6.0, 0.9, 0.45), (0.6, 0.9, 0.6), 15.0),
    ]
    objs = []
    for oid, label, sub, c, d, yaw in objects:
        o = {"id": oid, "label": label, "subcategory": sub, "center": list(c), "dims": list(d),
             "yaw_deg": yaw, "crops": _crops(oid)}
        if oid == "fridge-1":
            o["articulated"] = True
        objs.append(o)
    frames = [
        _camera("f0", (2.0, -1.0, 1.4), 90.0),
        _camera("f1", (2.0, 4.0, 1.4), -90.0),
        _camera("f2", (5.5, -1.0, 1.4), 90.0),
    ]
    return {"walls": walls, "objects": objs, "frames": frames}


# ---------------------------------------------------------------------------
# databases

_SEGMENTS_2 = [MaterialSegment("top", (0, 6)), MaterialSegment("base", (6, 12))]


def _asset_specs():
    """(id, category, subcategory, canonical dims, true appearance or None)."""
    return [
        ("table-walnut", "table", "dining table", (1.2, 0.75, 0.8), "table-1"),
        ("table-glass", "table", "dining table", (1.2, 0.75, 0.8), None),
        ("chair-oak", "chair", "dining chair", (0.45, 0.9, 0.45), "chair-1"),
        ("chair-pine", "chair", "dining chair", (0.45, 0.9, 0.45), None),
        ("armchair-red", "chair", "armchair", (0.6, 0.9, 0.6), "chair-3"),
        ("armchair-blue", "chair", "armchair", (0.6, 0.9, 0.6), None),
        ("cabinet-white", "storage", "cabinet", (0.8, 1.8, 0.4), "storage-1"),
        ("vase-blue", "other", "vase", (0.15, 0.3, 0.15), "vase-1"),
        ("sofa-grey", "sofa", "", (2.0, 0.8, 0.9), "sofa-1"),
        ("sofa-green", "sofa", "", (2.0, 0.8, 0.9), None),
        ("fridge-steel", "refrigerator", "", (0.7, 1.8, 0.7), "fridge-1"),
    ]


TABLE_TOP_DROP = 0.02  # table meshes stop this far below their canonical top


def _asset_mesh(aid: str, dims) -> Mesh:
    w, h, l = dims
    if aid.startswith("table"):
        # the slab top sits below the canonical bounding box top
        m = box_mesh((w, l, h - TABLE_TOP_DROP), (0.0, 0.0, -TABLE_TOP_DROP / 2.0), aid)
        return m
    return box_mesh((w, l, h), (0.0, 0.0, 0.0), aid)


def write_asset_db(root: Path, provider: StubEmbeddingProvider, frames: dict) -> None:
    for aid, cat, sub, dims, true_obj in _asset_specs():
        d = root / aid
        views, embeds = [], []
        if true_obj is not None:
            sources = [(fid, rects[true_obj]) for fid, rects in sorted(RECTS.items()) if true_obj in rects]
            pixels = [frames[fid][y : y + h, x : x + w] for fid, (x, y, w, h) in sources]
        else:
            pixels = [texture(aid + "-alt", 32, 32), texture(aid + "-alt", 40, 28)]
        for k, px in enumerate(pixels):
            rel = f"views/view{k}.png"
            _write_png(d / rel, px)
            views.append({"image": rel, "pose": [0.0, 0.0, 0.0, 45.0 * k]})
            embeds.append(provider.embed(png_bytes(px)))
        mesh = _asset_mesh(aid, dims)
        d.mkdir(parents=True, exist_ok=True)
        save_obj(d / "mesh.obj", mesh)
        segs = [MaterialSegment(s.id, s.triangles, "views/view0.png") for s in _SEGMENTS_2] if cat in (
            "table", "chair") else [MaterialSegment("body", (0, 12), "views/view0.png")]
        joints = []
        if cat == "refrigerator":
            joints = [{"name": "door", "type": "revolute", "axis": [0.0, 0.0, 1.0], "limits": [0.0, 1.9],
                       "submesh": "door", "pivot": [0.35, -0.35, 0.0]}]
        rec = AssetRecord(
            id=aid, category=cat, subcategory=sub, mesh_ref="mesh.obj", view_embeddings=np.stack(embeds),
            views=views, material_segments=segs, articulated=bool(joints), joints=joints,
            canonical_dims=tuple(dims), triangle_count=len(mesh.faces),
        )
        save_asset(d, rec)


MATERIALS = [
    ("wood-oak", "wood", (185, 145, 90)),
    ("wood-walnut", "wood", (100, 65, 40)),
    ("wood-pine", "wood", (215, 185, 130)),
    ("fabric-linen", "fabric", (205, 195, 175)),
    ("fabric-velvet", "fabric", (120, 30, 40)),
    ("metal-steel", "metal", (170, 175, 180)),
    ("ceramic-glaze", "ceramic", (60, 90, 160)),
]


def write_material_db(root: Path, provider: StubEmbeddingProvider) -> None:
    for mid, cat, color in MATERIALS:
        px = texture(mid, 32, 32, color)
        d = root / mid
        _write_png(d / "albedo.png", px)
        for name in ("roughness", "metallic", "normal"):
            _write_png(d / f"{name}.png", np.full((8, 8, 3), 128, dtype=np.uint8))
        rec = MaterialRecord(
            id=mid, category=cat, albedo_ref="albedo.png", embedding=provider.embed(png_bytes(px)),
            maps={"roughness": "roughness.png", "metallic": "metallic.png", "normal": "normal.png"},
            tags=[cat],
        )
        save_material(d, rec)


def write_masks(root: Path) -> None:
    for fid, rects in RECTS.items():
        for oid, (x, y, w, h) in rects.items():
            m = np.zeros((FRAME_H, FRAME_W), dtype=np.uint8)
            m[y : y + h, x : x + w] = 255
            _write_png(root / oid / f"{fid}.png", m)


def write_bench(root: Path) -> None:
    """A few meshes plus identity pair lists for the benchmark commands."""
    meshes = {
        "cube": box_mesh((1.0, 1.0, 1.0), (3.0, -1.0, 2.0), "cube"),
        "slab": box_mesh((4.0, 1.0, 2.0), (0.0, 0.0, 0.0), "slab"),
        "post": box_mesh((0.2, 0.2, 1.5), (1.0, 1.0, 0.75), "post"),
    }
    for name, m in meshes.items():
        save_obj(root / "meshes" / f"{name}.obj", m)
    rows = [("cube", "table"), ("slab", "table"), ("post", "chair")]
    root.mkdir(parents=True, exist_ok=True)
    (root / "pairs.csv").write_text(
        "gt,retrieved,category\n" + "".join(f"meshes/{n}.obj,meshes/{n}.obj,{c}\n" for n, c in rows)
    )
    for fid in RECTS:
        _write_png(root / "images" / f"{fid}.png", frame_image(fid))
    (root / "image_pairs.csv").write_text(
        "a,b\n" + "".join(f"images/{fid}.png,images/{fid}.png\n" for fid in sorted(RECTS))
    )


def generate_demo(out_dir, seed: int = 0, dim: int = 64) -> Path:
    """Write scan.json, frames/, assets/, materials/, masks/ and bench/ under ``out_dir``."""
    out = Path(out_dir)
    provider = StubEmbeddingProvider(dim=dim, seed=seed)
    frames = {fid: frame_image(fid) for fid in RECTS}
    for fid, img in frames.items():
        _write_png(out / "frames" / f"{fid}.png", img)
    out.mkdir(parents=True, exist_ok=True)
    (out / "scan.json").write_text(json.dumps(demo_scan(), indent=2, sort_keys=True) + "\n")
    write_asset_db(out / "assets", provider, frames)
    write_material_db(out / "materials", provider)
    write_masks(out / "masks")
    write_bench(out / "bench")
    return out
