"""Shared domain types for scans, scene graphs and scene descriptions.

Conventions: gravity is -Z, walls live in the XY plane, yaw rotates about +Z.
Lengths are meters and angles radians; the scan JSON carries degrees, which
are converted at ingest.  An object's front is its local +Y axis, so
``dims = (w, h, l)`` maps to local x extent ``w``, vertical extent ``h`` and
local y extent ``l``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Any, Iterable

import jsonschema
import numpy as np

# Fixed number of decimals written for degree values; keeps
# serialize(deserialize(x)) byte-identical for canonical documents.
_DEG_DECIMALS = 10

CATEGORIES = (
    "bathtub",
    "bed",
    "chair",
    "dishwasher",
    "fireplace",
    "oven",
    "refrigerator",
    "sink",
    "sofa",
    "stairs",
    "storage",
    "stove",
    "table",
    "television",
    "toilet",
    "washer-dryer",
    "door",
    "window",
    "other",
)

STRUCTURAL_KINDS = ("wall", "floor", "ceiling", "door", "window")


def normalize_yaw(yaw: float) -> float:
    """Wrap an angle into [-pi, pi)."""
    wrapped = math.fmod(yaw + math.pi, 2.0 * math.pi)
    if wrapped < 0.0:
        wrapped += 2.0 * math.pi
    out = wrapped - math.pi
    return -math.pi if out >= math.pi else out


def yaw_rotation(yaw: float) -> np.ndarray:
    c, s = math.cos(yaw), math.sin(yaw)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


@dataclass(frozen=True)
class OrientedBox:
    center: tuple[float, float, float]
    dims: tuple[float, float, float]
    yaw: float = 0.0
    pitch: float = 0.0
    roll: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "center", tuple(float(v) for v in self.center))
        object.__setattr__(self, "dims", tuple(float(v) for v in self.dims))
        object.__setattr__(self, "yaw", normalize_yaw(float(self.yaw)))
        if len(self.center) != 3 or len(self.dims) != 3:
            raise ValueError("center and dims must be 3-vectors")

    @property
    def is_degenerate(self) -> bool:
        return not all(d > 0.0 and math.isfinite(d) for d in self.dims)

    @property
    def front(self) -> np.ndarray:
        """Unit facing direction in plan view."""
        return np.array([-math.sin(self.yaw), math.cos(self.yaw)])

    @property
    def bottom(self) -> float:
        return self.center[2] - 0.5 * self.dims[1]

    @property
    def top(self) -> float:
        return self.center[2] + 0.5 * self.dims[1]

    @property
    def footprint_area(self) -> float:
        return self.dims[0] * self.dims[2]

    def footprint(self) -> np.ndarray:
        """Plan-view corners (4, 2), counter-clockwise."""
        w, _, l = self.dims
        local = np.array([[-w, -l], [w, -l], [w, l], [-w, l]]) * 0.5
        c, s = math.cos(self.yaw), math.sin(self.yaw)
        rot = np.array([[c, -s], [s, c]])
        return local @ rot.T + np.asarray(self.center[:2])

    def back_anchor(self) -> np.ndarray:
        """Midpoint of the back face in plan view (face opposite the front)."""
        return np.asarray(self.center[:2]) - 0.5 * self.dims[2] * self.front

    def translated(self, delta) -> "OrientedBox":
        d = np.zeros(3)
        d[: len(delta)] = delta
        return replace(self, center=tuple(np.asarray(self.center) + d))


def box_corners(box: OrientedBox) -> np.ndarray:
    """The 8 corners of ``box`` as an (8, 3) array."""
    w, h, l = box.dims
    signs = np.array(
        [[sx, sy, sz] for sx in (-1, 1) for sy in (-1, 1) for sz in (-1, 1)],
        dtype=float,
    )
    half = 0.5 * np.array([w, l, h])
    return (signs * half) @ yaw_rotation(box.yaw).T + np.asarray(box.center)


@dataclass(frozen=True)
class CropRef:
    frame_id: str
    bbox_px: tuple[int, int, int, int]  # x, y, w, h
    visibility: float


@dataclass(frozen=True)
class ObjectNode:
    id: str
    box: OrientedBox
    label: str
    subcategory: str = ""
    crops: tuple[CropRef, ...] = ()
    wall_attachment: str | None = None
    articulated: bool = False
    movable: bool = True

    def __post_init__(self):
        if self.label not in CATEGORIES:
            raise ValueError(f"unknown category {self.label!r}")
        vis = [c.visibility for c in self.crops]
        if any(a < b for a, b in zip(vis, vis[1:])):
            object.__setattr__(
                self,
                "crops",
                tuple(sorted(self.crops, key=lambda c: (-c.visibility, c.frame_id))),
            )

    def top_crops(self, k: int) -> tuple[CropRef, ...]:
        return self.crops[:k]


@dataclass(frozen=True)
class Opening:
    kind: str  # "door" | "window"
    interval: tuple[float, float]
    z_range: tuple[float, float]
    id: str = ""


@dataclass(frozen=True)
class WallSegment:
    id: str
    p0: tuple[float, float]
    p1: tuple[float, float]
    height: float = 2.5
    openings: tuple[Opening, ...] = ()

    @property
    def length(self) -> float:
        return math.dist(self.p0, self.p1)

    @property
    def direction(self) -> np.ndarray:
        d = np.subtract(self.p1, self.p0)
        return d / np.linalg.norm(d)


@dataclass(frozen=True)
class RoomPolygon:
    vertices: tuple[tuple[float, float], ...]
    # source_segment_ids[i] names the wall owning edge i -> i+1
    source_segment_ids: tuple[str, ...] = ()

    @property
    def array(self) -> np.ndarray:
        return np.asarray(self.vertices, dtype=float)

    @property
    def area(self) -> float:
        from .geometry import polygon_area

        return polygon_area(self.array)

    def edges(self) -> Iterable[tuple[np.ndarray, np.ndarray]]:
        pts = self.array
        for i in range(len(pts)):
            yield pts[i], pts[(i + 1) % len(pts)]


class EdgeKind(str, Enum):
    ATTACHED_TO_WALL = "AttachedToWall"
    ON_TOP = "OnTop"
    TABLE_CHAIR_PAIR = "TableChairPair"
    CONNECTING_TO = "ConnectingTo"


@dataclass(frozen=True, order=True)
class Edge:
    kind: EdgeKind
    src: str
    dst: str


@dataclass
class SceneGraph:
    """Walls, openings and objects plus typed relations between them."""

    nodes: dict[str, str] = field(default_factory=dict)  # id -> node kind
    edges: list[Edge] = field(default_factory=list)

    def add_node(self, node_id: str, kind: str) -> None:
        self.nodes[node_id] = kind

    def add_edge(self, kind: EdgeKind, src: str, dst: str) -> None:
        kind = EdgeKind(kind)
        if src not in self.nodes or dst not in self.nodes:
            raise ValueError(f"edge {kind.value} references unknown node ({src}, {dst})")
        if kind is EdgeKind.ATTACHED_TO_WALL and (
            self.nodes[dst] != "wall" or self.nodes[src] != "object"
        ):
            raise ValueError("AttachedToWall must point from an object to a wall")
        edge = Edge(kind, src, dst)
        if edge in self.edges:
            return
        if kind is EdgeKind.ON_TOP and self._reaches(dst, src):
            raise ValueError(f"OnTop edge {src}->{dst} would create a cycle")
        self.edges.append(edge)

    def _reaches(self, start: str, goal: str) -> bool:
        succ: dict[str, list[str]] = {}
        for e in self.edges:
            if e.kind is EdgeKind.ON_TOP:
                succ.setdefault(e.src, []).append(e.dst)
        stack, seen = [start], set()
        while stack:
            n = stack.pop()
            if n == goal:
                return True
            if n in seen:
                continue
            seen.add(n)
            stack.extend(succ.get(n, ()))
        return False

    def edges_of(self, kind: EdgeKind) -> list[Edge]:
        return [e for e in self.edges if e.kind is EdgeKind(kind)]

    def to_dict(self) -> dict:
        return {
            "nodes": [{"id": k, "kind": v} for k, v in sorted(self.nodes.items())],
            "edges": [
                {"kind": e.kind.value, "src": e.src, "dst": e.dst}
                for e in sorted(self.edges, key=lambda e: (e.kind.value, e.src, e.dst))
            ],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "SceneGraph":
        g = cls()
        for n in doc["nodes"]:
            g.add_node(n["id"], n["kind"])
        for e in doc["edges"]:
            g.add_edge(EdgeKind(e["kind"]), e["src"], e["dst"])
        return g


@dataclass(frozen=True)
class CameraFrame:
    id: str
    rotation: np.ndarray  # world -> camera
    translation: np.ndarray
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int
    image_ref: str = ""

    def __post_init__(self):
        rot = np.asarray(self.rotation, dtype=float)
        if rot.shape != (3, 3):
            raise ValueError("rotation must be 3x3")
        if not np.allclose(rot @ rot.T, np.eye(3), atol=1e-6) or abs(np.linalg.det(rot) - 1.0) > 1e-6:
            raise ValueError(f"frame {self.id}: rotation is not orthonormal with det +1")
        object.__setattr__(self, "rotation", rot)
        object.__setattr__(self, "translation", np.asarray(self.translation, dtype=float))

    @property
    def pose(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m

    def project(self, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Pixel coordinates (n, 2) and camera depths (n,) for world points."""
        cam = np.asarray(points, dtype=float) @ self.rotation.T + self.translation
        z = cam[:, 2]
        with np.errstate(divide="ignore", invalid="ignore"):
            u = self.fx * cam[:, 0] / z + self.cx
            v = self.fy * cam[:, 1] / z + self.cy
        return np.stack([u, v], axis=1), z


@dataclass
class Scan:
    walls: list[WallSegment]
    objects: list[ObjectNode]
    frames: list[CameraFrame]

    def frame(self, frame_id: str) -> CameraFrame:
        for f in self.frames:
            if f.id == frame_id:
                return f
        raise KeyError(frame_id)


# ---------------------------------------------------------------------------
# scan JSON

_VEC2 = {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2}
_VEC3 = {"type": "array", "items": {"type": "number"}, "minItems": 3, "maxItems": 3}

SCAN_SCHEMA: dict[str, Any] = {
    "type": "object",
    "required": ["walls", "objects"],
    "properties": {
        "walls": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["id", "p0", "p1"],
                "properties": {
                    "id": {"type": "string"},
                    "p0": _VEC2,
                    "p1": _VEC2,
                    "height": {"type": "number"},
                    "openings": {
                        "type": "array",
                        "items": {
                            "type": "object",
                            "required": ["kind", "interval", "z"],
                            "properties": {
                                "id": {"type": "string"},
                                "kind": {"enum": ["door", "window"]},
                                "interval": _VEC2,
                                "z": _VEC2,
                            },
                        },
                    },
                },
            },
        },
        "objects": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["id", "label", "center", "dims"],
                "properties": {
                    "id": {"type": "string"},
                    "label": {"enum": list(CATEGORIES)},
                    "subcategory": {"type": "string"},
                    "center": _VEC3,
                    "dims": _VEC3,
                    "yaw_deg": {"type": "number"},
                    "pitch_deg": {"type": "number"},
                    "roll_deg": {"type": "number"},
                    "articulated": {"type": "boolean"},
                    "movable": {"type": "boolean"},
                    "crops": {
                        "type": "array",
                        "items": {
                            "type": "object",
                            "required": ["frame_id", "bbox_px", "visibility"],
                            "properties": {
                                "frame_id": {"type": "string"},
                                "bbox_px": {
                                    "type": "array",
                                    "items": {"type": "integer"},
                                    "minItems": 4,
                                    "maxItems": 4,
                                },
                                "visibility": {"type": "number"},
                            },
                        },
                    },
                },
            },
        },
        "frames": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["id", "pose", "intrinsics"],
                "properties": {
                    "id": {"type": "string"},
                    "pose": {"type": "array", "items": {"type": "number"}, "minItems": 16, "maxItems": 16},
                    "intrinsics": {
                        "type": "object",
                        "required": ["fx", "fy", "cx", "cy"],
                        "properties": {k: {"type": "number"} for k in ("fx", "fy", "cx", "cy", "width", "height")},
                    },
                    "image": {"type": "string"},
                },
            },
        },
    },
}


class ScanValidationError(ValueError):
    """Raised by :func:`validate_scan`; ``errors`` lists every problem found."""

    def __init__(self, errors: list[str]):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


def _deg(x: float) -> float:
    return round(math.degrees(x), _DEG_DECIMALS) + 0.0


def _wall_from_json(w: dict) -> WallSegment:
    return WallSegment(
        id=w["id"],
        p0=tuple(map(float, w["p0"])),
        p1=tuple(map(float, w["p1"])),
        height=float(w.get("height", 2.5)),
        openings=tuple(
            Opening(
                kind=o["kind"],
                interval=tuple(map(float, o["interval"])),
                z_range=tuple(map(float, o["z"])),
                id=o.get("id", ""),
            )
            for o in w.get("openings", [])
        ),
    )


def object_from_json(o: dict) -> ObjectNode:
    box = OrientedBox(
        center=tuple(o["center"]),
        dims=tuple(o["dims"]),
        yaw=math.radians(o.get("yaw_deg", 0.0)),
        pitch=math.radians(o.get("pitch_deg", 0.0)),
        roll=math.radians(o.get("roll_deg", 0.0)),
    )
    crops = tuple(
        CropRef(c["frame_id"], tuple(int(v) for v in c["bbox_px"]), float(c["visibility"]))
        for c in o.get("crops", [])
    )
    return ObjectNode(
        id=o["id"],
        box=box,
        label=o["label"],
        subcategory=o.get("subcategory", ""),
        crops=crops,
        wall_attachment=o.get("wall_attachment"),
        articulated=bool(o.get("articulated", False)),
        movable=bool(o.get("movable", True)),
    )


def object_to_json(obj: ObjectNode) -> dict:
    b = obj.box
    out = {
        "id": obj.id,
        "label": obj.label,
        "subcategory": obj.subcategory,
        "center": list(b.center),
        "dims": list(b.dims),
        "yaw_deg": _deg(b.yaw),
        "crops": [
            {"frame_id": c.frame_id, "bbox_px": list(c.bbox_px), "visibility": c.visibility}
            for c in obj.crops
        ],
    }
    if b.pitch:
        out["pitch_deg"] = _deg(b.pitch)
    if b.roll:
        out["roll_deg"] = _deg(b.roll)
    if obj.articulated:
        out["articulated"] = True
    if not obj.movable:
        out["movable"] = False
    if obj.wall_attachment is not None:
        out["wall_attachment"] = obj.wall_attachment
    return out


def wall_to_json(w: WallSegment) -> dict:
    out = {"id": w.id, "p0": list(w.p0), "p1": list(w.p1), "height": w.height}
    if w.openings:
        out["openings"] = [
            {"id": o.id, "kind": o.kind, "interval": list(o.interval), "z": list(o.z_range)}
            for o in w.openings
        ]
    return out


def _frame_from_json(f: dict) -> CameraFrame:
    pose = np.asarray(f["pose"], dtype=float).reshape(4, 4)
    k = f["intrinsics"]
    return CameraFrame(
        id=f["id"],
        rotation=pose[:3, :3],
        translation=pose[:3, 3],
        fx=float(k["fx"]),
        fy=float(k["fy"]),
        cx=float(k["cx"]),
        cy=float(k["cy"]),
        width=int(k.get("width", round(2 * k["cx"]))),
        height=int(k.get("height", round(2 * k["cy"]))),
        image_ref=f.get("image", ""),
    )


def frame_to_json(f: CameraFrame) -> dict:
    return {
        "id": f.id,
        "pose": [float(v) for v in f.pose.ravel()],
        "intrinsics": {
            "fx": f.fx, "fy": f.fy, "cx": f.cx, "cy": f.cy,
            "width": f.width, "height": f.height,
        },
        "image": f.image_ref,
    }


def validate_scan(doc: dict | str) -> Scan:
    """Parse and check a raw scan document.

    Raises :class:`ScanValidationError` listing schema violations, or every
    degenerate wall and box by id.
    """
    if isinstance(doc, str):
        try:
            doc = json.loads(doc)
        except json.JSONDecodeError as exc:
            raise ScanValidationError([f"schema violation: invalid JSON ({exc})"]) from exc
    validator = jsonschema.Draft7Validator(SCAN_SCHEMA)
    schema_errors = sorted(validator.iter_errors(doc), key=lambda e: list(e.absolute_path))
    if schema_errors:
        raise ScanValidationError(
            [f"schema violation at /{'/'.join(map(str, e.absolute_path))}: {e.message}" for e in schema_errors]
        )

    errors: list[str] = []
    walls = []
    for w in doc["walls"]:
        seg = _wall_from_json(w)
        if seg.length <= 0.0:
            errors.append(f"degenerate geometry: zero-length wall (wall {seg.id})")
            continue
        if seg.height <= 0.0:
            errors.append(f"degenerate geometry: wall height must be > 0 (wall {seg.id})")
        ivals = sorted(o.interval for o in seg.openings)
        for lo, hi in ivals:
            if not (0.0 <= lo < hi <= seg.length + 1e-9):
                errors.append(f"degenerate geometry: opening outside wall (wall {seg.id})")
        for (_, hi), (lo, _) in zip(ivals, ivals[1:]):
            if lo < hi:
                errors.append(f"degenerate geometry: overlapping openings (wall {seg.id})")
        walls.append(seg)

    objects = []
    for o in doc["objects"]:
        if not all(d > 0 for d in o["dims"]):
            errors.append(f"degenerate geometry: dims must be > 0 (object {o['id']})")
            continue
        objects.append(object_from_json(o))

    frames = []
    for f in doc.get("frames", []):
        try:
            frames.append(_frame_from_json(f))
        except ValueError as exc:
            errors.append(f"degenerate geometry: {exc}")

    ids = [w.id for w in walls] + [o.id for o in objects]
    dupes = sorted({i for i in ids if ids.count(i) > 1})
    if dupes:
        errors.append(f"schema violation: duplicate ids {dupes}")
    if errors:
        raise ScanValidationError(errors)
    return Scan(walls=walls, objects=objects, frames=frames)


def scan_to_json(scan: Scan) -> dict:
    return {
        "walls": [wall_to_json(w) for w in scan.walls],
        "objects": [object_to_json(o) for o in scan.objects],
        "frames": [frame_to_json(f) for f in scan.frames],
    }


def dumps(doc: Any) -> str:
    """Canonical JSON text: sorted keys, shortest round-trip floats."""
    return json.dumps(doc, sort_keys=True, indent=2, ensure_ascii=False) + "\n"


def serialize_scan(scan: Scan) -> str:
    return dumps(scan_to_json(scan))


def deserialize_scan(text: str) -> Scan:
    return validate_scan(text)


@dataclass
class SceneDescription:
    """The exported scene: rooms, walls, placements, physics and materials."""

    rooms: list[dict]
    walls: list[dict]
    placements: list[dict]
    provenance: dict
    floor: dict | None = None
    log: list[str] = field(default_factory=list)
    openings: list[dict] = field(default_factory=list)
    schema: str = "scenesmith/1"

    def to_dict(self) -> dict:
        return {
            "schema": self.schema,
            "rooms": self.rooms,
            "walls": self.walls,
            "floor": self.floor,
            "placements": self.placements,
            "openings": self.openings,
            "provenance": self.provenance,
            "log": self.log,
        }
