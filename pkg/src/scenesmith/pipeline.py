"""End-to-end driver: parse -> graph -> retrieve -> paint -> assemble.

Each stage writes one JSON artifact.  Artifacts are cached under
``<cache>/stages/<stage>-<key>`` where the key hashes the upstream artifact
hashes, the stage's slice of the configuration and the code version, so a
re-run recomputes only the stages whose inputs changed.
"""

from __future__ import annotations

import hashlib
import io
import json
import logging
import os
import shutil
import time
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np
from PIL import Image

from . import __version__
from .assemble import (
    AssembleConfig,
    assign_physics,
    build_partitions,
    build_walls,
    config_hash,
    cut_openings,
    export_scene,
    place_objects,
    scene_to_json,
)
from .graph import RelationConfig, infer_relations, resolve_collisions
from .layout import SnapConfig, align_objects_to_walls, close_walls, pull_objects_inside, snap_to_grid
from .layout import _rebase_openings, segments_from_polygon
from .material import (
    AlbedoMap,
    MaskInput,
    MaterialDatabase,
    NoUsablePatches,
    ShiftSpec,
    albedo_shift,
    extract_patches,
    infer_target_color,
    map_segments_to_patches,
    search_material,
)
from .material.search import MaterialError
from .model import (
    RoomPolygon,
    SceneGraph,
    ScanValidationError,
    _frame_from_json,
    _wall_from_json,
    dumps,
    frame_to_json,
    object_from_json,
    object_to_json,
    validate_scan,
    wall_to_json,
)
from .retrieval import AssetDatabase, ClusterConfig, RetrievalError, cluster_identical, retrieve
from .retrieval.rank import embed_all
from .services import CallPolicy, ResponseCache, ServiceError, is_endpoint, make_oracle, make_provider

logger = logging.getLogger(__name__)

STAGES = ("parse", "graph", "retrieve", "paint", "assemble")
STAGE_VERSIONS = {s: "1" for s in STAGES}
CODE_VERSION = f"scenesmith-{__version__}"


class ConfigError(ValueError):
    pass


class StageError(RuntimeError):
    def __init__(self, stage: str, last_good: str | None, cause: Exception):
        self.stage = stage
        self.last_good = last_good
        self.cause = cause
        super().__init__(f"stage {stage} failed (last good artifact: {last_good or 'none'}): {cause}")


# ---------------------------------------------------------------------------
# configuration


@dataclass
class PipelineConfig:
    snap: SnapConfig = field(default_factory=SnapConfig)
    relation: RelationConfig = field(default_factory=RelationConfig)
    cluster: ClusterConfig = field(default_factory=ClusterConfig)
    assemble: AssembleConfig = field(default_factory=AssembleConfig)
    provider_endpoint: str = "stub"
    oracle_endpoint: str = "stub"
    physics_oracle_endpoint: str = "stub"
    embedding_dim: int = 64
    seeds: dict = field(default_factory=lambda: {"sampling": 0, "kmeans": 0, "stub": 0})
    crop_k: int = 4
    patch_k: int = 4
    min_patch: tuple = (16, 16)
    cache_dir: str = ".scenesmith-cache"
    log_level: str = "INFO"
    max_in_flight: int = 4
    policy: CallPolicy = field(default_factory=CallPolicy)

    def __post_init__(self):
        for name in ("sampling", "kmeans", "stub"):
            if name not in self.seeds or not isinstance(self.seeds[name], int):
                raise ConfigError(f"seed {name!r} missing or not an integer")
        for name in ("provider_endpoint", "oracle_endpoint", "physics_oracle_endpoint"):
            if not is_endpoint(getattr(self, name)):
                raise ConfigError(f"{name} must be 'stub' or an http(s) URL, got {getattr(self, name)!r}")

    def with_seed(self, seed: int) -> "PipelineConfig":
        return replace(self, seeds={k: int(seed) for k in self.seeds})

    def to_dict(self) -> dict:
        d = asdict(self)
        d["min_patch"] = list(self.min_patch)
        d["assemble"]["densities"] = dict(self.assemble.densities)
        return d

    @classmethod
    def from_dict(cls, doc: dict) -> "PipelineConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        kw = dict(doc)
        try:
            for key, typ in (("snap", SnapConfig), ("relation", RelationConfig), ("cluster", ClusterConfig),
                             ("policy", CallPolicy)):
                if key in kw:
                    sub = dict(kw[key])
                    for k, v in sub.items():
                        if isinstance(v, list):
                            sub[k] = tuple(v)
                    kw[key] = typ(**sub)
            if "assemble" in kw:
                sub = dict(kw["assemble"])
                if "densities" in sub:
                    sub["densities"] = tuple(sorted(sub["densities"].items()))
                kw["assemble"] = AssembleConfig(**sub)
            if "min_patch" in kw:
                kw["min_patch"] = tuple(kw["min_patch"])
            return cls(**kw)
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def load(cls, path) -> "PipelineConfig":
        try:
            doc = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        return cls.from_dict(doc)

    def subset(self, stage: str) -> dict:
        d = self.to_dict()
        pick = {
            "parse": ["snap"],
            "graph": ["snap", "relation"],
            "retrieve": ["cluster", "provider_endpoint", "oracle_endpoint", "embedding_dim", "crop_k"],
            "paint": ["provider_endpoint", "oracle_endpoint", "embedding_dim", "patch_k", "min_patch"],
            "assemble": ["assemble", "physics_oracle_endpoint"],
        }[stage]
        out = {k: d[k] for k in pick}
        if stage in ("retrieve", "paint"):
            out["seeds"] = {k: d["seeds"][k] for k in ("kmeans", "stub")}
        return out


# ---------------------------------------------------------------------------
# hashing helpers


def sha256_bytes(b: bytes) -> str:
    return hashlib.sha256(b).hexdigest()


def sha256_file(path) -> str:
    return sha256_bytes(Path(path).read_bytes())


def sha256_tree(root) -> str:
    """Hash of every file under ``root`` (relative path + content), order independent."""
    if root is None:
        return "none"
    root = Path(root)
    if not root.exists():
        return "missing"
    h = hashlib.sha256()
    for p in sorted(q for q in root.rglob("*") if q.is_file()):
        h.update(p.relative_to(root).as_posix().encode() + b"\0")
        h.update(sha256_file(p).encode())
    return h.hexdigest()


def _json(doc) -> str:
    from .assemble import _plain

    return dumps(_plain(doc))


def polygon_to_json(p: RoomPolygon) -> dict:
    return {"vertices": [list(map(float, v)) for v in p.vertices], "source_segment_ids": list(p.source_segment_ids)}


def polygon_from_json(d: dict) -> RoomPolygon:
    return RoomPolygon(tuple(tuple(v) for v in d["vertices"]), tuple(d["source_segment_ids"]))


# ---------------------------------------------------------------------------
# stages


def _follow_snapped_vertices(before: RoomPolygon, after: RoomPolygon, segments):
    """Move partition endpoints that sat on a loop vertex along with that vertex."""
    if len(before.vertices) != len(after.vertices):
        return segments
    moved = {tuple(map(float, a)): tuple(map(float, b)) for a, b in zip(before.vertices, after.vertices)}
    loop = set(after.source_segment_ids)
    out = []
    for s in segments:
        if s.id in loop:
            out.append(s)
            continue
        p0 = moved.get(tuple(map(float, s.p0)), s.p0)
        p1 = moved.get(tuple(map(float, s.p1)), s.p1)
        out.append(s if (p0, p1) == (s.p0, s.p1) else _rebase_openings(s, np.asarray(p0), np.asarray(p1)))
    return out


def stage_parse(scan_doc, scan_dir, cfg: PipelineConfig) -> dict:
    """Validate the scan, close and snap the room, align and contain objects."""
    scan = validate_scan(scan_doc)
    closure = close_walls(scan.walls, cfg.snap)
    log = list(closure.log)
    polygon = snap_to_grid(closure.polygon, cfg.snap)
    segments = _follow_snapped_vertices(closure.polygon, polygon, segments_from_polygon(polygon, closure.segments))
    objects = align_objects_to_walls(scan.objects, segments, cfg.snap, log)
    contained = pull_objects_inside(objects, polygon, segments, cfg.snap)
    log += contained.log
    image_hashes = {}
    for f in scan.frames:
        if f.image_ref and scan_dir is not None and (Path(scan_dir) / f.image_ref).is_file():
            image_hashes[f.id] = sha256_file(Path(scan_dir) / f.image_ref)
    return {
        "polygon": polygon_to_json(contained.polygon),
        "walls": [wall_to_json(s) for s in contained.segments],
        "partitions": list(closure.partitions),
        "extra_loops": [list(l) for l in closure.extra_loops],
        "objects": [object_to_json(o) for o in contained.objects],
        "frames": [frame_to_json(f) for f in scan.frames],
        "image_hashes": image_hashes,
        "containment": {
            "converged": contained.converged,
            "passes": contained.passes,
            "remaining_penetration": contained.remaining_penetration,
        },
        "log": log,
    }


def stage_graph(parsed: dict, cfg: PipelineConfig) -> dict:
    """Relations, collision resolution, relations again on the resolved layout."""
    objects = [object_from_json(o) for o in parsed["objects"]]
    segments = [_wall_from_json(w) for w in parsed["walls"]]
    polygon = polygon_from_json(parsed["polygon"])
    g0 = infer_relations(objects, segments, cfg.snap, cfg.relation)
    resolved, report = resolve_collisions(objects, g0, polygon, cfg.snap, segments)
    g1 = infer_relations(resolved, segments, cfg.snap, cfg.relation)
    out = dict(parsed)
    out["objects"] = [object_to_json(o) for o in resolved]
    out["graph"] = g1.to_dict()
    out["collision"] = report.to_dict()
    return out


def _load_image(scan_dir, ref) -> np.ndarray | None:
    if scan_dir is None or not ref:
        return None
    p = Path(scan_dir) / ref
    if not p.is_file():
        return None
    return np.asarray(Image.open(p).convert("RGB"))


def png_bytes(pixels) -> bytes:
    buf = io.BytesIO()
    Image.fromarray(np.asarray(pixels, dtype=np.uint8)).save(buf, format="PNG", optimize=False)
    return buf.getvalue()


def crop_inputs(obj, frames: dict, scan_dir, k: int):
    """(bytes, metadata, pixels) for the object's top-k crops."""
    out = []
    for c in obj.top_crops(k):
        f = frames.get(c.frame_id)
        img = _load_image(scan_dir, f.image_ref) if f is not None else None
        x, y, w, h = c.bbox_px
        meta = {"frame_id": c.frame_id, "bbox_px": list(c.bbox_px), "visibility": c.visibility}
        if img is not None:
            px = img[y : y + h, x : x + w]
            if px.size:
                out.append((png_bytes(px), meta, px))
                continue
        blob = json.dumps({"frame": c.frame_id, "bbox": list(c.bbox_px)}, sort_keys=True).encode()
        out.append((blob, meta, None))
    return out


def stage_retrieve(graph_art: dict, scan_dir, db: AssetDatabase, cfg: PipelineConfig, provider, oracle) -> dict:
    objects = [object_from_json(o) for o in graph_art["objects"]]
    frames = {f.id: f for f in (_frame_from_json(fd) for fd in graph_art["frames"])}
    crops = {o.id: crop_inputs(o, frames, scan_dir, cfg.crop_k) for o in objects}
    failures = {}
    groups: dict[tuple, list] = {}
    for o in objects:
        if not crops[o.id]:
            failures[o.id] = "object has no crops"
            continue
        groups.setdefault((o.label, o.subcategory), []).append(o)
    clusters = []
    for key in sorted(groups):
        members = sorted(groups[key], key=lambda o: o.id)
        feats = []
        for o in members:
            e = embed_all([b for b, _, _ in crops[o.id]], provider, [m["frame_id"] for _, m, _ in crops[o.id]])
            feats.append(e.mean(axis=0))
        pixels = [[p for _, _, p in crops[o.id] if p is not None] for o in members]
        ids = [o.id for o in members]
        clusters += cluster_identical(ids, np.stack(feats), pixels, seed=cfg.seeds["kmeans"], cfg=cfg.cluster)
    by_id = {o.id: o for o in objects}
    traces, chosen = [], {}
    for cl in clusters:
        members = [by_id[i] for i in cl]
        blobs = [b for m in members for b, _, _ in crops[m.id]]
        meta = [dict(md, object_id=m.id) for m in members for _, md, _ in crops[m.id]]
        try:
            tr = retrieve(members, blobs, meta, db, provider, oracle, frames, renderer=None)
        except RetrievalError as exc:
            for i in cl:
                failures[i] = str(exc)
            continue
        traces.append(tr.to_dict())
        for i in cl:
            chosen[i] = tr.final
    return {"clusters": clusters, "traces": traces, "chosen": chosen, "failures": failures}


def read_mask(path) -> np.ndarray:
    """8-bit PNG (nonzero = inside) or run-length JSON ``{"size": [h, w], "counts": [...]}``.

    Runs alternate outside/inside in row-major order, starting with outside.
    """
    path = Path(path)
    if path.suffix == ".json":
        doc = json.loads(path.read_text())
        h, w = doc["size"]
        flat = np.zeros(h * w, dtype=bool)
        pos, inside = 0, False
        for run in doc["counts"]:
            flat[pos : pos + run] = inside
            pos += run
            inside = not inside
        return flat.reshape(h, w)
    return np.asarray(Image.open(path).convert("L")) > 0


def object_masks(masks_dir, obj_id: str, frames: dict, scan_dir) -> list[MaskInput]:
    if masks_dir is None:
        return []
    d = Path(masks_dir) / obj_id
    if not d.is_dir():
        return []
    out = []
    for p in sorted(d.iterdir()):
        if p.suffix not in (".png", ".json"):
            continue
        fid = p.stem
        f = frames.get(fid)
        img = _load_image(scan_dir, f.image_ref) if f is not None else None
        mask = read_mask(p)
        if img is not None and img.shape[:2] != mask.shape:
            img = None
        out.append(MaskInput(fid, mask, img))
    return out


def stage_paint(graph_art, retrieval, scan_dir, masks_dir, db, matdb, cfg, provider, oracle, out_dir) -> dict:
    frames = {f.id: f for f in (_frame_from_json(fd) for fd in graph_art["frames"])}
    result, skipped = {}, {}
    for oid in sorted(retrieval["chosen"]):
        asset = db[retrieval["chosen"][oid]]
        if not asset.material_segments:
            skipped[oid] = "asset has no material segments"
            continue
        masks = object_masks(masks_dir, oid, frames, scan_dir)
        if not masks:
            skipped[oid] = "no masks"
            continue
        try:
            patches = extract_patches(masks, k=cfg.patch_k, min_size=tuple(cfg.min_patch))
        except NoUsablePatches as exc:
            skipped[oid] = str(exc)
            continue
        flags = []
        valid = oracle.choose({"task": "patch_validity", "patches": [p.to_dict() for p in patches]}).get("valid", [])
        kept = [p for p, ok in zip(patches, valid) if ok] if len(valid) == len(patches) else patches
        if len(valid) != len(patches):
            flags.append("validity response malformed; all patches kept")
        if not kept:
            skipped[oid] = "no valid patches"
            continue
        mapping, mflags = map_segments_to_patches(asset, kept, oracle)
        flags += mflags
        by_pid = {p.id: p for p in kept}
        segs = {}
        for seg_id in sorted(mapping):
            seg_patches = [by_pid[mapping[seg_id]]]
            try:
                mat, trace = search_material(seg_patches, matdb, provider, oracle)
            except MaterialError as exc:
                flags.append(f"segment {seg_id}: {exc}")
                continue
            target, tflags = infer_target_color(seg_patches, oracle)
            flags += tflags
            entry = {"material_id": mat.id, "patch": mapping[seg_id], "trace": trace.to_dict()}
            try:
                albedo = AlbedoMap.from_srgb(mat.load_albedo(), source=mat.albedo_ref)
            except OSError as exc:
                flags.append(f"segment {seg_id}: albedo unreadable ({exc}); no shift applied")
                entry["shift"] = None
                segs[seg_id] = entry
                continue
            shifted = albedo_shift(albedo, ShiftSpec(tuple(float(v) for v in target), seg_id))
            rel = f"albedo/{oid}/{seg_id}.png"
            (out_dir / rel).parent.mkdir(parents=True, exist_ok=True)
            (out_dir / rel).write_bytes(png_bytes(shifted.albedo.to_srgb8()))
            entry["shift"] = {"T": [float(v) for v in target], "clamped_fraction": shifted.clamped_fraction}
            entry["albedo"] = rel
            segs[seg_id] = entry
        result[oid] = {"asset_id": asset.id, "segments": segs, "flags": flags}
    return {"objects": result, "skipped": skipped}


def stage_assemble(graph_art, retrieval, paint, db, cfg, oracle, provenance) -> str:
    log: list[str] = []
    polygon = polygon_from_json(graph_art["polygon"])
    segments = [_wall_from_json(w) for w in graph_art["walls"]]
    objects = [object_from_json(o) for o in graph_art["objects"]]
    graph = SceneGraph.from_dict(graph_art["graph"])
    loop_ids = set(polygon.source_segment_ids)
    prisms, floor = build_walls(polygon, segments, cfg.assemble)
    prisms += build_partitions([s for s in segments if s.id not in loop_ids], cfg.assemble)
    prisms, openings = cut_openings(prisms, segments, None, cfg.assemble, log)
    placements = place_objects(objects, graph, retrieval["chosen"], db, retrieval["clusters"], cfg.assemble, log)
    for p in placements:
        entry = (paint or {}).get("objects", {}).get(p.id)
        if entry:
            p.materials = {
                sid: {"material_id": e["material_id"], "shift": e["shift"], "albedo": e.get("albedo")}
                for sid, e in entry["segments"].items()
            }
    structural = assign_physics(placements, prisms, floor, oracle, cfg.assemble, log, openings)
    desc = export_scene(polygon, prisms, floor, placements, structural, provenance, openings, log)
    return scene_to_json(desc)


# ---------------------------------------------------------------------------
# driver


@dataclass
class StageRecord:
    name: str
    key: str
    artifact: str
    sha256: str
    cached: bool
    seconds: float


@dataclass
class RunResult:
    out_dir: Path
    scene_path: Path
    stages: list[StageRecord]
    manifest_path: Path


class _Runner:
    def __init__(self, cfg: PipelineConfig, out_dir: Path, cache_root: Path):
        self.cfg = cfg
        self.out_dir = out_dir
        self.cache_root = cache_root
        self.records: list[StageRecord] = []
        self.last_good: str | None = None

    def run(self, name: str, upstream: list[str], compute, filename: str):
        key = sha256_bytes(
            json.dumps(
                {"stage": name, "version": STAGE_VERSIONS[name], "code": CODE_VERSION, "inputs": upstream,
                 "config": self.cfg.subset(name)},
                sort_keys=True,
            ).encode()
        )
        stage_dir = self.cache_root / "stages" / f"{name}-{key[:24]}"
        art = stage_dir / filename
        t0 = time.perf_counter()
        cached = art.is_file()
        if not cached:
            tmp = stage_dir.with_name(stage_dir.name + ".tmp")
            shutil.rmtree(tmp, ignore_errors=True)
            tmp.mkdir(parents=True)
            try:
                text = compute(tmp)
            except (ServiceError, ScanValidationError):
                shutil.rmtree(tmp, ignore_errors=True)
                raise
            except Exception as exc:
                shutil.rmtree(tmp, ignore_errors=True)
                raise StageError(name, self.last_good, exc) from exc
            (tmp / filename).write_text(text)
            shutil.rmtree(stage_dir, ignore_errors=True)
            tmp.rename(stage_dir)
        # publish into the output directory
        for p in sorted(stage_dir.rglob("*")):
            if p.is_file():
                dst = self.out_dir / p.relative_to(stage_dir)
                dst.parent.mkdir(parents=True, exist_ok=True)
                shutil.copyfile(p, dst)
        digest = sha256_file(art)
        rec = StageRecord(name, key, filename, digest, cached, time.perf_counter() - t0)
        self.records.append(rec)
        self.last_good = str(self.out_dir / filename)
        logger.info("stage %s %s (%s)", name, "cached" if cached else "computed", digest[:12])
        return json.loads(art.read_text()), digest


def _referenced_images_hash(scan_text: str, scan_dir: Path) -> str:
    """Hash of every frame image the scan references (missing files hash as absent)."""
    try:
        refs = sorted({f.get("image", "") for f in json.loads(scan_text).get("frames", []) if isinstance(f, dict)})
    except (json.JSONDecodeError, AttributeError):
        return "unparsed"
    h = hashlib.sha256()
    for ref in refs:
        p = scan_dir / ref if ref else None
        h.update(ref.encode() + b"\0" + (sha256_file(p).encode() if p is not None and p.is_file() else b"absent"))
    return h.hexdigest()


def resolve_cache_dir(cfg: PipelineConfig, override=None) -> Path:
    """SCENESMITH_CACHE beats an explicit override, which beats the config."""
    return Path(os.environ.get("SCENESMITH_CACHE") or override or cfg.cache_dir)


def run_pipeline(
    scan_path,
    asset_db_path,
    material_db_path=None,
    cfg: PipelineConfig | None = None,
    out_dir="out",
    masks_dir=None,
    offline: bool = False,
    cache_dir=None,
) -> RunResult:
    cfg = cfg or PipelineConfig()
    scan_path = Path(scan_path)
    scan_dir = scan_path.parent
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    cache_root = resolve_cache_dir(cfg, cache_dir)
    services = ResponseCache(cache_root / "services")
    provider = make_provider(cfg.provider_endpoint, services, offline, cfg.embedding_dim, cfg.seeds["stub"], cfg.policy)
    oracle = make_oracle(cfg.oracle_endpoint, services, offline, cfg.assemble.density_table(),
                         cfg.assemble.default_density, cfg.policy)
    physics_oracle = make_oracle(cfg.physics_oracle_endpoint, services, offline, cfg.assemble.density_table(),
                                 cfg.assemble.default_density, cfg.policy)
    runner = _Runner(cfg, out_dir, cache_root)

    try:
        scan_text = scan_path.read_text()
    except OSError as exc:
        raise StageError("parse", None, exc) from exc
    scan_hash = sha256_bytes(scan_text.encode())
    image_tree = _referenced_images_hash(scan_text, scan_dir)

    def parse_compute(_):
        try:
            doc = json.loads(scan_text)
        except json.JSONDecodeError as exc:
            raise ScanValidationError([f"scan is not valid JSON: {exc}"]) from exc
        return _json(stage_parse(doc, scan_dir, cfg))

    parsed, h_parse = runner.run("parse", [scan_hash, image_tree], parse_compute, "parse.json")
    graph_art, h_graph = runner.run("graph", [h_parse], lambda _: _json(stage_graph(parsed, cfg)), "graph.json")

    try:
        db = AssetDatabase.load(asset_db_path)
    except Exception as exc:
        raise StageError("retrieve", runner.last_good, exc) from exc
    h_db = sha256_tree(asset_db_path)
    retrieval, h_ret = runner.run(
        "retrieve", [h_graph, h_db],
        lambda _: _json(stage_retrieve(graph_art, scan_dir, db, cfg, provider, oracle)), "retrieval.json",
    )

    h_mat = sha256_tree(material_db_path)
    h_masks = sha256_tree(masks_dir)

    def paint_compute(tmp):
        if material_db_path is None:
            return _json({"objects": {}, "skipped": {k: "no material database" for k in sorted(retrieval["chosen"])}})
        matdb = MaterialDatabase.load(material_db_path)
        return _json(stage_paint(graph_art, retrieval, scan_dir, masks_dir, db, matdb, cfg, provider, oracle, tmp))

    paint, h_paint = runner.run("paint", [h_ret, h_mat, h_masks, h_db], paint_compute, "materials.json")

    provenance = {
        "code_version": CODE_VERSION,
        "config_hash": config_hash(cfg.to_dict() | {"cache_dir": None, "log_level": None}),
        "seeds": dict(cfg.seeds),
        "stage_versions": dict(STAGE_VERSIONS),
        "inputs": {"scan": scan_hash, "asset_db": h_db, "material_db": h_mat, "masks": h_masks},
        "stage_hashes": {"parse": h_parse, "graph": h_graph, "retrieve": h_ret, "paint": h_paint},
    }
    h_prov = sha256_bytes(json.dumps(provenance, sort_keys=True).encode())
    runner.run(
        "assemble", [h_graph, h_ret, h_paint, h_db, h_prov],
        lambda _: stage_assemble(graph_art, retrieval, paint, db, cfg, physics_oracle, provenance), "scene.json",
    )

    manifest = {
        "code_version": CODE_VERSION,
        "config": cfg.to_dict(),
        "stages": [asdict(r) for r in runner.records],
    }
    manifest_path = out_dir / "run_manifest.json"
    manifest_path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return RunResult(out_dir, out_dir / "scene.json", runner.records, manifest_path)


def verify_manifest(manifest_path) -> list[str]:
    """Names of stages whose artifact hash no longer matches the manifest."""
    manifest_path = Path(manifest_path)
    doc = json.loads(manifest_path.read_text())
    bad = []
    for s in doc["stages"]:
        p = manifest_path.parent / s["artifact"]
        if not p.is_file() or sha256_file(p) != s["sha256"]:
            bad.append(s["name"])
    return bad
