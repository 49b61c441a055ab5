"""Procedural scene assembly: walls, openings, object placements, physics, export."""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import jsonschema
import numpy as np

from . import geometry as geo
from .evalbench.mesh import Mesh, MeshError, box_mesh, load_obj
from .model import (
    STRUCTURAL_KINDS,
    EdgeKind,
    ObjectNode,
    RoomPolygon,
    SceneDescription,
    SceneGraph,
    WallSegment,
    dumps,
    yaw_rotation,
)
from .retrieval.assets import AssetDatabase, AssetRecord
from .retrieval.providers import DEFAULT_DENSITIES, StubOracle

SCHEMA_TAG = "scenesmith/1"


@dataclass(frozen=True)
class AssembleConfig:
    wall_thickness: float = 0.1
    floor_thickness: float = 0.1
    aspect_warn: float = 0.25
    door_depth: float = 0.05
    window_depth: float = 0.05
    default_density: float = 150.0
    densities: tuple = tuple(sorted(DEFAULT_DENSITIES.items()))
    passive_immovable: bool = False  # also mark objects with movable=False passive

    def density_table(self) -> dict:
        return dict(self.densities)


# ---------------------------------------------------------------------------
# walls


@dataclass
class WallPrism:
    """One wall as a plan-view quad extruded from z=0 to ``height``.

    ``inner`` is the room-facing edge (a polygon edge, CCW order); ``outer``
    holds the mitred outer corners.  ``pieces`` are the solid rectangles of the
    room-facing face in wall coordinates (s along the edge, z up) after
    openings are cut.
    """

    id: str
    inner: tuple[tuple[float, float], tuple[float, float]]
    outer: tuple[tuple[float, float], tuple[float, float]]
    height: float
    thickness: float
    holes: list[dict] = field(default_factory=list)
    pieces: list[tuple[float, float, float, float]] = field(default_factory=list)  # s0, s1, z0, z1

    def __post_init__(self):
        if not self.pieces:
            self.pieces = [(0.0, self.length, 0.0, self.height)]

    @property
    def length(self) -> float:
        return math.dist(*self.inner)

    @property
    def footprint(self) -> np.ndarray:
        return np.array([self.inner[0], self.inner[1], self.outer[1], self.outer[0]])

    @property
    def face_area(self) -> float:
        return float(sum((s1 - s0) * (z1 - z0) for s0, s1, z0, z1 in self.pieces))

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "inner": [list(p) for p in self.inner],
            "outer": [list(p) for p in self.outer],
            "height": self.height,
            "thickness": self.thickness,
            "holes": self.holes,
            "pieces": [list(p) for p in self.pieces],
        }


def _edge_heights(polygon: RoomPolygon, segments) -> list[float]:
    by_id = {s.id: s for s in segments}
    ids = polygon.source_segment_ids or ()
    return [by_id[ids[i]].height if i < len(ids) and ids[i] in by_id else 2.5 for i in range(len(polygon.vertices))]


def build_walls(polygon: RoomPolygon, segments, cfg: AssembleConfig = AssembleConfig()) -> tuple[list[WallPrism], dict]:
    """Mitred wall prisms around a CCW polygon plus a floor slab."""
    pts = polygon.array
    n = len(pts)
    if n < 3:
        raise ValueError("polygon needs at least 3 vertices")
    t = cfg.wall_thickness
    heights = _edge_heights(polygon, segments)
    dirs = [(pts[(i + 1) % n] - pts[i]) / np.linalg.norm(pts[(i + 1) % n] - pts[i]) for i in range(n)]
    outs = [np.array([d[1], -d[0]]) for d in dirs]  # right normal points out of a CCW room
    outer = []
    for i in range(n):
        j = i - 1
        p = pts[i] + t * outs[j]
        q = pts[i] + t * outs[i]
        hit = geo.line_intersection(p, dirs[j], q, dirs[i])
        outer.append(q if hit is None else hit)
    ids = polygon.source_segment_ids or tuple(f"edge-{i}" for i in range(n))
    prisms = []
    for i in range(n):
        k = (i + 1) % n
        prisms.append(
            WallPrism(
                id=ids[i],
                inner=(tuple(map(float, pts[i])), tuple(map(float, pts[k]))),
                outer=(tuple(map(float, outer[i])), tuple(map(float, outer[k]))),
                height=float(heights[i]),
                thickness=t,
            )
        )
    floor = {
        "outline": [list(map(float, p)) for p in pts],
        "thickness": cfg.floor_thickness,
        "top_z": 0.0,
        "area": float(polygon.area),
    }
    return prisms, floor


def build_partitions(segments, cfg: AssembleConfig = AssembleConfig()) -> list[WallPrism]:
    """Interior walls that are not part of the room loop: plain prisms centred on the segment."""
    out = []
    for seg in segments:
        a, b = np.asarray(seg.p0, dtype=float), np.asarray(seg.p1, dtype=float)
        n = np.array([seg.direction[1], -seg.direction[0]]) * (cfg.wall_thickness / 2.0)
        out.append(
            WallPrism(
                id=seg.id,
                inner=(tuple(map(float, a - n)), tuple(map(float, b - n))),
                outer=(tuple(map(float, a + n)), tuple(map(float, b + n))),
                height=float(seg.height),
                thickness=cfg.wall_thickness,
            )
        )
    return out


def _split_face(length: float, height: float, holes: list[tuple[float, float, float, float]]):
    """Solid rectangles of a face with disjoint rectangular holes (piers, sills, lintels)."""
    if not holes:
        return [(0.0, length, 0.0, height)]
    pieces = []
    cursor = 0.0
    for s0, s1, z0, z1 in sorted(holes):
        if s0 > cursor:
            pieces.append((cursor, s0, 0.0, height))
        if z0 > 0.0:
            pieces.append((s0, s1, 0.0, z0))
        if z1 < height:
            pieces.append((s0, s1, z1, height))
        cursor = max(cursor, s1)
    if cursor < length:
        pieces.append((cursor, length, 0.0, height))
    return pieces


@dataclass
class OpeningPlacement:
    id: str
    kind: str
    wall_id: str
    asset_id: str | None
    center: tuple[float, float, float]
    yaw: float
    dims: tuple[float, float, float]
    parametric: bool

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "kind": self.kind,
            "wall": self.wall_id,
            "asset_id": self.asset_id,
            "center": list(self.center),
            "yaw": self.yaw,
            "dims": list(self.dims),
            "parametric": self.parametric,
        }


def cut_openings(
    prisms: list[WallPrism],
    segments,
    opening_assets: dict | None = None,
    cfg: AssembleConfig = AssembleConfig(),
    log: list | None = None,
) -> tuple[list[WallPrism], list[OpeningPlacement]]:
    """Cut door/window holes and place an asset (or a parametric frame) in each."""
    log = log if log is not None else []
    opening_assets = opening_assets or {}
    by_id = {s.id: s for s in segments}
    placements = []
    for pr in prisms:
        seg = by_id.get(pr.id)
        if seg is None or not seg.openings:
            continue
        a = np.asarray(pr.inner[0])
        d = (np.asarray(pr.inner[1]) - a) / pr.length
        holes = []
        for k, op in enumerate(seg.openings):
            oid = op.id or f"{seg.id}:{op.kind}{k}"
            # opening interval is measured from seg.p0; map to this prism's axis
            w0 = np.asarray(seg.p0) + op.interval[0] * seg.direction
            w1 = np.asarray(seg.p0) + op.interval[1] * seg.direction
            s0, s1 = sorted((float(np.dot(w0 - a, d)), float(np.dot(w1 - a, d))))
            z0, z1 = (float(z) for z in op.z_range)
            cs0, cs1 = max(0.0, s0), min(pr.length, s1)
            cz0, cz1 = max(0.0, z0), min(pr.height, z1)
            if max(abs(cs0 - s0), abs(cs1 - s1), abs(cz0 - z0), abs(cz1 - z1)) > 1e-9:
                log.append(f"opening {oid} exceeds wall {pr.id} bounds; clamped")
            if cs1 <= cs0 or cz1 <= cz0:
                log.append(f"opening {oid} lies outside wall {pr.id}; skipped")
                continue
            holes.append((cs0, cs1, cz0, cz1))
            pr.holes.append({"id": oid, "kind": op.kind, "s": [cs0, cs1], "z": [cz0, cz1]})
            mid = a + d * (cs0 + cs1) / 2.0
            inward = np.array([-d[1], d[0]])
            depth = cfg.door_depth if op.kind == "door" else cfg.window_depth
            # seat the frame in the middle of the wall thickness
            c = mid - inward * (pr.thickness / 2.0)
            asset = opening_assets.get(oid)
            placements.append(
                OpeningPlacement(
                    id=oid,
                    kind=op.kind,
                    wall_id=pr.id,
                    asset_id=asset,
                    center=(float(c[0]), float(c[1]), float((cz0 + cz1) / 2.0)),
                    yaw=float(math.atan2(-inward[0], inward[1])),
                    dims=(cs1 - cs0, cz1 - cz0, max(depth, pr.thickness)),
                    parametric=asset is None,
                )
            )
        pr.pieces = _split_face(pr.length, pr.height, holes)
    return prisms, placements


# ---------------------------------------------------------------------------
# objects


@dataclass
class Placement:
    id: str
    label: str
    asset_id: str | None
    center: tuple[float, float, float]
    yaw: float
    dims: tuple[float, float, float]
    scale: tuple[float, float, float]
    placeholder: bool = False
    cluster: str | None = None
    joints: list = field(default_factory=list)
    materials: dict = field(default_factory=dict)
    physics: dict | None = None
    flags: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "label": self.label,
            "asset_id": self.asset_id,
            "center": list(self.center),
            "yaw": self.yaw,
            "dims": list(self.dims),
            "scale": list(self.scale),
            "placeholder": self.placeholder,
            "cluster": self.cluster,
            "joints": self.joints,
            "materials": self.materials,
            "physics": self.physics,
            "flags": self.flags,
        }


def _canonical_mesh(asset: AssetRecord | None) -> Mesh | None:
    if asset is None or not asset.mesh_ref:
        return None
    try:
        return load_obj(asset.mesh_path, asset.id)
    except (OSError, MeshError, ValueError):
        return None


def placed_vertices(mesh: Mesh, p: Placement) -> np.ndarray:
    """Canonical mesh moved into the placement pose.

    Canonical meshes are centered on their bounding box with x = width,
    y = length (front +Y) and z = up, spanning the manifest's canonical dims.
    """
    sx, sh, sl = p.scale
    v = mesh.vertices * np.array([sx, sl, sh])
    return v @ yaw_rotation(p.yaw).T + np.asarray(p.center)


def raycast_down(vertices: np.ndarray, faces: np.ndarray, x: float, y: float, z_start: float) -> float | None:
    """Highest surface point below ``z_start`` on the vertical line through (x, y) (Moller-Trumbore)."""
    tri = vertices[faces]
    o = np.array([x, y, z_start])
    d = np.array([0.0, 0.0, -1.0])
    e1 = tri[:, 1] - tri[:, 0]
    e2 = tri[:, 2] - tri[:, 0]
    pv = np.cross(d, e2)
    det = np.einsum("ij,ij->i", e1, pv)
    ok = np.abs(det) > 1e-12
    inv = np.zeros_like(det)
    inv[ok] = 1.0 / det[ok]
    tv = o - tri[:, 0]
    u = np.einsum("ij,ij->i", tv, pv) * inv
    qv = np.cross(tv, e1)
    v = (qv @ d) * inv
    t = np.einsum("ij,ij->i", e2, qv) * inv
    eps = 1e-12
    hit = ok & (u >= -eps) & (v >= -eps) & (u + v <= 1 + eps) & (t >= 0)
    if not np.any(hit):
        return None
    return float(z_start - t[hit].min())


def _on_top_order(graph: SceneGraph, ids) -> list[str]:
    sup = {e.src: e.dst for e in graph.edges_of(EdgeKind.ON_TOP)}
    order, seen = [], set()

    def visit(i):
        if i in seen:
            return
        seen.add(i)
        if i in sup:
            visit(sup[i])
        order.append(i)

    for i in sorted(ids):
        visit(i)
    return [i for i in order if i in ids]


def place_objects(
    objects: list[ObjectNode],
    graph: SceneGraph,
    chosen: dict[str, str],
    db: AssetDatabase | None,
    clusters: list[list[str]] | None = None,
    cfg: AssembleConfig = AssembleConfig(),
    log: list | None = None,
) -> list[Placement]:
    """Scale each chosen asset to its detected box; reseat OnTop objects by raycast."""
    log = log if log is not None else []
    cluster_of = {}
    for k, members in enumerate(clusters or []):
        if len(members) > 1:
            for m in members:
                cluster_of[m] = f"cluster-{k}"
    by_id = {o.id: o for o in objects}
    placements: dict[str, Placement] = {}
    meshes: dict[str, Mesh | None] = {}
    for o in objects:
        aid = chosen.get(o.id)
        asset = db[aid] if (db is not None and aid is not None and aid in db) else None
        b = o.box
        if asset is None:
            flags = [f"no retrieval result for {o.id}; placeholder box"] if aid is None else [f"asset {aid} missing from database; placeholder box"]
            log.extend(flags)
            placements[o.id] = Placement(
                id=o.id, label=o.label, asset_id=None, center=b.center, yaw=b.yaw, dims=b.dims,
                scale=b.dims, placeholder=True, cluster=cluster_of.get(o.id), flags=flags,
            )
            meshes[o.id] = None
            continue
        scale = tuple(float(d / c) for d, c in zip(b.dims, asset.canonical_dims))
        flags = []
        mean = sum(scale) / 3.0
        if any(abs(s / mean - 1.0) > cfg.aspect_warn for s in scale):
            flags.append(f"aspect distortion for {o.id}: scale {tuple(round(s, 4) for s in scale)}")
            log.append(flags[-1])
        placements[o.id] = Placement(
            id=o.id, label=o.label, asset_id=asset.id, center=b.center, yaw=b.yaw, dims=b.dims, scale=scale,
            cluster=cluster_of.get(o.id), joints=list(asset.joints) if asset.articulated else [], flags=flags,
        )
        meshes[o.id] = _canonical_mesh(asset)

    supporter = {e.src: e.dst for e in graph.edges_of(EdgeKind.ON_TOP)}
    for oid in _on_top_order(graph, list(placements)):
        if oid not in supporter or supporter[oid] not in placements:
            continue
        p, s = placements[oid], placements[supporter[oid]]
        mesh = meshes.get(s.id)
        if mesh is None:
            unit = box_mesh()
            verts = unit.vertices * np.array([s.dims[0], s.dims[2], s.dims[1]]) @ yaw_rotation(s.yaw).T + np.asarray(s.center)
            faces = unit.faces
        else:
            verts, faces = placed_vertices(mesh, s), mesh.faces
        top = max(s.center[2] + s.dims[1] / 2.0, p.center[2] - p.dims[1] / 2.0)
        hit = raycast_down(verts, faces, p.center[0], p.center[1], top + 1.0)
        if hit is None:
            p.flags.append(f"reseat ray for {oid} missed supporter {s.id}; kept detected height")
            log.append(p.flags[-1])
            continue
        dz = hit - (p.center[2] - p.dims[1] / 2.0)
        if dz != 0.0:
            p.center = (p.center[0], p.center[1], p.center[2] + dz)
            log.append(f"reseated {oid} on {s.id} by {dz:+.4f} m")
    return [placements[o.id] for o in objects if o.id in by_id]


# ---------------------------------------------------------------------------
# physics


def assign_physics(
    placements: list[Placement],
    walls: list[WallPrism],
    floor: dict | None,
    oracle=None,
    cfg: AssembleConfig = AssembleConfig(),
    log: list | None = None,
    openings: list[OpeningPlacement] = (),
) -> dict:
    """Mass (oracle, falling back to the density stub) and active/passive body per item."""
    log = log if log is not None else []
    stub = StubOracle(cfg.density_table(), cfg.default_density)
    oracle = oracle or stub

    def mass(category, dims, key):
        vol = float(np.prod(dims))
        req = {"task": "mass", "category": category, "volume": vol, "dims": list(dims)}
        try:
            m = float(oracle.choose(req)["mass_kg"])
        except (KeyError, TypeError, ValueError):
            m = float("nan")
        if not (m > 0.0 and math.isfinite(m)):
            log.append(f"oracle mass for {key} invalid ({m}); stub density used")
            m = float(stub.choose(req)["mass_kg"])
        return m

    for p in placements:
        structural = p.label in STRUCTURAL_KINDS
        passive = structural or (cfg.passive_immovable and "immovable" in p.flags)
        p.physics = {
            "mass_kg": mass(p.label, p.dims, p.id),
            "body": "passive" if passive else "active",
            "collision_source": "box" if p.placeholder else "mesh",
        }
    out = {}
    for w in walls:
        dims = (w.length, w.height, w.thickness)
        out[w.id] = {"mass_kg": mass("wall", dims, w.id), "body": "passive", "collision_source": "box"}
    for op in openings:
        out[op.id] = {"mass_kg": mass(op.kind, op.dims, op.id), "body": "passive", "collision_source": "box"}
    if floor is not None:
        dims = (math.sqrt(floor["area"]), floor["thickness"], math.sqrt(floor["area"]))
        out["floor"] = {"mass_kg": mass("floor", dims, "floor"), "body": "passive", "collision_source": "box"}
    return out


# ---------------------------------------------------------------------------
# export

_NUM3 = {"type": "array", "items": {"type": "number"}, "minItems": 3, "maxItems": 3}
_PHYS = {
    "type": "object",
    "required": ["mass_kg", "body", "collision_source"],
    "properties": {
        "mass_kg": {"type": "number", "exclusiveMinimum": 0},
        "body": {"enum": ["active", "passive"]},
        "collision_source": {"enum": ["mesh", "box"]},
    },
}

SCENE_SCHEMA = {
    "type": "object",
    "required": ["schema", "rooms", "walls", "placements", "provenance"],
    "properties": {
        "schema": {"const": SCHEMA_TAG},
        "rooms": {"type": "array"},
        "walls": {"type": "array", "items": {"type": "object", "required": ["id", "inner", "outer", "height", "physics"]}},
        "placements": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["id", "label", "asset_id", "center", "yaw", "dims", "scale", "physics"],
                "properties": {
                    "center": _NUM3,
                    "dims": _NUM3,
                    "scale": _NUM3,
                    "asset_id": {"type": ["string", "null"]},
                    "physics": _PHYS,
                },
            },
        },
        "openings": {"type": "array"},
        "provenance": {"type": "object", "required": ["config_hash", "seeds", "stage_versions"]},
    },
}


def validate_scene(doc: dict) -> None:
    jsonschema.validate(doc, SCENE_SCHEMA)


def config_hash(config: dict) -> str:
    return hashlib.sha256(json.dumps(config, sort_keys=True).encode()).hexdigest()


def export_scene(
    polygon: RoomPolygon,
    walls: list[WallPrism],
    floor: dict,
    placements: list[Placement],
    structural_physics: dict,
    provenance: dict,
    openings: list[OpeningPlacement] = (),
    log: list | None = None,
) -> SceneDescription:
    wall_docs = []
    for w in walls:
        d = w.to_dict()
        d["physics"] = structural_physics.get(w.id)
        wall_docs.append(d)
    if floor is not None:
        floor = dict(floor, physics=structural_physics.get("floor"))
    return SceneDescription(
        rooms=[{"id": "room-0", "polygon": [list(map(float, v)) for v in polygon.vertices], "walls": [w.id for w in walls]}],
        walls=wall_docs,
        placements=[p.to_dict() for p in placements],
        provenance=provenance,
        floor=floor,
        log=list(log or []),
        openings=[dict(o.to_dict(), physics=structural_physics.get(o.id)) for o in openings],
    )


def scene_to_json(desc: SceneDescription) -> str:
    doc = _plain(desc.to_dict())
    validate_scene(doc)
    return dumps(doc)


def _plain(x):
    """Recursively convert numpy scalars/arrays and tuples into JSON-native values."""
    if isinstance(x, dict):
        return {str(k): _plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    if isinstance(x, np.ndarray):
        return _plain(x.tolist())
    if isinstance(x, np.generic):
        return x.item()
    if isinstance(x, float):
        return x + 0.0  # folds -0.0
    return x


def write_scene(path, desc: SceneDescription) -> str:
    text = scene_to_json(desc)
    Path(path).write_text(text)
    return text
