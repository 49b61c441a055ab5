"""Room layout parsing: wall closure, grid snapping, wall alignment and
in-room adjustment of detected objects."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace

import networkx as nx
import numpy as np
from scipy.spatial import cKDTree

from . import geometry as geo
from .model import ObjectNode, OrientedBox, RoomPolygon, WallSegment, normalize_yaw

logger = logging.getLogger(__name__)


class LayoutError(RuntimeError):
    pass


@dataclass(frozen=True)
class SnapConfig:
    endpoint_snap_radius: float = 0.05
    grid_pitch: float = 0.01
    angle_snap: float = math.radians(15.0)
    wall_align_max_dist: float = 0.2
    wall_align_max_angle: float = math.radians(10.0)
    wall_clearance: float = 0.01
    next_to_max_gap: float = 0.1
    max_collision_iters: int = 10
    # loose ends whose wall lines cross within this distance are extended/trimmed
    corner_join_max: float = 0.3
    max_expand_passes: int = 20

    def __post_init__(self):
        for name, value in self.__dict__.items():
            if not value > 0:
                raise ValueError(f"SnapConfig.{name} must be > 0")
        if self.wall_align_max_angle >= math.pi / 2:
            raise ValueError("wall_align_max_angle must be < pi/2")


@dataclass
class WallClosure:
    polygon: RoomPolygon
    segments: list[WallSegment]  # adjusted loop walls + untouched partitions
    partitions: list[str] = field(default_factory=list)
    extra_loops: list[list[str]] = field(default_factory=list)
    log: list[str] = field(default_factory=list)


@dataclass
class ContainmentResult:
    objects: list[ObjectNode]
    polygon: RoomPolygon
    segments: list[WallSegment]
    converged: bool
    passes: int
    remaining_penetration: float
    log: list[str] = field(default_factory=list)


def _fmt(p) -> str:
    return "(" + ", ".join(f"{v:.4f}" for v in p) + ")"


def _rebase_openings(seg: WallSegment, new_p0, new_p1) -> WallSegment:
    """Move a wall's endpoints, keeping its openings at the same world place."""
    d = seg.direction
    shift = float(np.dot(np.subtract(new_p0, seg.p0), d))
    new_dir = np.subtract(new_p1, new_p0)
    flip = float(np.dot(new_dir, d)) < 0
    openings = []
    for o in seg.openings:
        lo, hi = o.interval[0] - shift, o.interval[1] - shift
        openings.append(replace(o, interval=(lo, hi)))
    out = replace(
        seg,
        p0=tuple(float(v) for v in new_p0),
        p1=tuple(float(v) for v in new_p1),
        openings=tuple(openings),
    )
    if flip:  # never expected; guard against inverted walls
        raise LayoutError(f"wall {seg.id} inverted during adjustment")
    return out


class _UnionFind:
    def __init__(self, n):
        self.parent = list(range(n))

    def find(self, i):
        while self.parent[i] != i:
            self.parent[i] = self.parent[self.parent[i]]
            i = self.parent[i]
        return i

    def union(self, a, b):
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            self.parent[max(ra, rb)] = min(ra, rb)


def close_walls(segments: list[WallSegment], cfg: SnapConfig = SnapConfig()) -> WallClosure:
    """Snap wall endpoints together and extract the room boundary loop.

    Endpoints closer than ``endpoint_snap_radius`` merge to their centroid.
    When the wall graph has no cycle, loose ends are first joined by
    extending/trimming their walls to a common corner; failing that, the two
    nearest loose ends are connected by a synthesized wall and closure is
    retried.  With several loops the largest-area one is the room; walls not
    on it are kept as partitions.
    """
    segs = [s for s in segments if s.length > 0]
    if len(segs) < 3:
        raise LayoutError(f"closure impossible: {len(segs)} usable wall segments (need >= 3)")
    log: list[str] = []

    ends = np.array([p for s in segs for p in (s.p0, s.p1)], dtype=float)
    uf = _UnionFind(len(ends))
    for i, j in sorted(cKDTree(ends).query_pairs(cfg.endpoint_snap_radius)):
        uf.union(i, j)
    roots = sorted({uf.find(i) for i in range(len(ends))})
    node_of = {r: k for k, r in enumerate(roots)}
    nodes: dict[int, np.ndarray] = {}
    for r in roots:
        members = [i for i in range(len(ends)) if uf.find(i) == r]
        nodes[node_of[r]] = ends[members].mean(axis=0)

    # edge key -> segment
    edge_seg: dict[frozenset, WallSegment] = {}
    seg_nodes: dict[str, tuple[int, int]] = {}
    graph = nx.Graph()
    graph.add_nodes_from(nodes)
    for k, s in enumerate(segs):
        u, v = node_of[uf.find(2 * k)], node_of[uf.find(2 * k + 1)]
        if u == v:
            log.append(f"drop wall {s.id}: collapsed by endpoint snapping")
            continue
        key = frozenset((u, v))
        if key in edge_seg:
            log.append(f"drop wall {s.id}: duplicates wall {edge_seg[key].id}")
            continue
        edge_seg[key] = s
        seg_nodes[s.id] = (u, v)
        graph.add_edge(u, v)

    synth_count = 0
    while True:
        loops = _simple_loops(graph, nodes)
        if loops:
            break
        loose = sorted(n for n in graph.nodes if graph.degree(n) == 1)
        if len(loose) < 2:
            raise LayoutError("closure impossible: wall graph has no cycle and fewer than 2 loose ends")
        joined = _extend_corner(graph, nodes, loose, edge_seg, cfg)
        if joined is not None:
            u, v, corner = joined
            log.append(f"extend walls at loose ends {_fmt(nodes[u])}, {_fmt(nodes[v])} to corner {_fmt(corner)}")
            nodes[u] = corner
            # merge v into u
            for w in list(graph.neighbors(v)):
                s = edge_seg.pop(frozenset((v, w)))
                a, b = seg_nodes[s.id]
                seg_nodes[s.id] = (u if a == v else a, u if b == v else b)
                edge_seg[frozenset((u, w))] = s
                graph.add_edge(u, w)
            graph.remove_node(v)
            del nodes[v]
            continue
        best = None
        for i, a in enumerate(loose):
            for b in loose[i + 1 :]:
                if graph.has_edge(a, b):
                    continue
                d = float(np.linalg.norm(nodes[a] - nodes[b]))
                if best is None or d < best[0]:
                    best = (d, a, b)
        if best is None:
            raise LayoutError("closure impossible: loose ends cannot be joined")
        _, a, b = best
        synth_count += 1
        heights = [edge_seg[frozenset((a, w))].height for w in graph.neighbors(a)]
        heights += [edge_seg[frozenset((b, w))].height for w in graph.neighbors(b)]
        s = WallSegment(
            id=f"synth-{synth_count}",
            p0=tuple(nodes[a]),
            p1=tuple(nodes[b]),
            height=max(heights) if heights else 2.5,
        )
        log.append(f"join loose ends {_fmt(nodes[a])} -> {_fmt(nodes[b])} with wall {s.id}")
        edge_seg[frozenset((a, b))] = s
        seg_nodes[s.id] = (a, b)
        segs.append(s)
        graph.add_edge(a, b)

    loops.sort(key=lambda lp: -abs(geo.polygon_area([nodes[n] for n in lp])))
    loop = loops[0]
    pts = np.array([nodes[n] for n in loop])
    if geo.polygon_area(pts) < 0:
        loop = loop[::-1]
    ids = []
    for i in range(len(loop)):
        ids.append(edge_seg[frozenset((loop[i], loop[(i + 1) % len(loop)]))].id)
    polygon = RoomPolygon(
        vertices=tuple(tuple(float(c) for c in nodes[n]) for n in loop),
        source_segment_ids=tuple(ids),
    )
    on_loop = set(ids)
    adjusted = []
    partitions = []
    for s in segs:
        if s.id not in seg_nodes:
            continue
        u, v = seg_nodes[s.id]
        new_p0, new_p1 = nodes[u], nodes[v]
        moved = not (np.allclose(new_p0, s.p0, atol=0) and np.allclose(new_p1, s.p1, atol=0))
        if moved:
            log.append(f"snap wall {s.id}: {_fmt(s.p0)}-{_fmt(s.p1)} -> {_fmt(new_p0)}-{_fmt(new_p1)}")
            s = _rebase_openings(s, new_p0, new_p1)
        adjusted.append(s)
        if s.id not in on_loop:
            partitions.append(s.id)
    extra = []
    for lp in loops[1:]:
        lp_ids = sorted(edge_seg[frozenset((lp[i], lp[(i + 1) % len(lp)]))].id for i in range(len(lp)))
        extra.append(lp_ids)
    if extra:
        log.append(f"room loop has {len(ids)} walls; {len(extra)} other loop(s) reported")
    return WallClosure(polygon=polygon, segments=adjusted, partitions=partitions, extra_loops=extra, log=log)


def _simple_loops(graph: nx.Graph, nodes) -> list[list[int]]:
    loops = []
    for cyc in nx.simple_cycles(graph):
        if len(cyc) >= 3 and geo.is_simple([nodes[n] for n in cyc]):
            loops.append(cyc)
    return loops


def _extend_corner(graph, nodes, loose, edge_seg, cfg):
    best = None
    for i, u in enumerate(loose):
        (nu,) = list(graph.neighbors(u))
        du = nodes[u] - nodes[nu]
        for v in loose[i + 1 :]:
            (nv,) = list(graph.neighbors(v))
            if nv == u or nu == v:
                continue
            dv = nodes[v] - nodes[nv]
            x = geo.line_intersection(nodes[u], du, nodes[v], dv)
            if x is None:
                continue
            mu = float(np.linalg.norm(x - nodes[u]))
            mv = float(np.linalg.norm(x - nodes[v]))
            if mu > cfg.corner_join_max or mv > cfg.corner_join_max:
                continue
            # the corner must keep both walls pointing the same way
            if np.dot(x - nodes[nu], du) <= 0 or np.dot(x - nodes[nv], dv) <= 0:
                continue
            if best is None or mu + mv < best[0]:
                best = (mu + mv, u, v, x)
    return None if best is None else best[1:]


# ---------------------------------------------------------------------------


def _quantize(v: float, pitch: float) -> float:
    return round(v / pitch) * pitch + 0.0


def snap_to_grid(polygon: RoomPolygon, cfg: SnapConfig = SnapConfig()) -> RoomPolygon:
    """Axis-align near-axis edges about their midpoints, then quantize to the grid.

    Axis snaps that would break simplicity are reverted one at a time.
    """
    pts = polygon.array
    n = len(pts)
    ids = list(polygon.source_segment_ids) or [""] * n

    def edge_axis(i):
        d = pts[(i + 1) % n] - pts[i]
        ang = math.atan2(d[1], d[0]) % math.pi
        if min(ang, math.pi - ang) <= cfg.angle_snap:
            return 1  # horizontal: fix y
        if abs(ang - math.pi / 2) <= cfg.angle_snap:
            return 0  # vertical: fix x
        return None

    axes = [edge_axis(i) for i in range(n)]

    def build(active):
        out = pts.copy()
        sums = np.zeros((n, 2))
        counts = np.zeros((n, 2))
        for i in range(n):
            ax = axes[i]
            if ax is None or not active[i]:
                continue
            j = (i + 1) % n
            mid = 0.5 * (pts[i][ax] + pts[j][ax])
            for k in (i, j):
                sums[k, ax] += mid
                counts[k, ax] += 1
        mask = counts > 0
        out[mask] = sums[mask] / counts[mask]
        out = np.vectorize(lambda v: _quantize(v, cfg.grid_pitch))(out)
        keep_v, keep_ids = [], []
        for i in range(n):
            if keep_v and np.array_equal(out[i], keep_v[-1]):
                continue
            keep_v.append(out[i])
            keep_ids.append(ids[i])
        if len(keep_v) > 1 and np.array_equal(keep_v[0], keep_v[-1]):
            keep_v.pop()
            keep_ids.pop()
        return np.array(keep_v), keep_ids

    active = [ax is not None for ax in axes]
    out, out_ids = build(active)
    if not geo.is_simple(out):
        active = [False] * n
        out, out_ids = build(active)
        for i in range(n):
            if axes[i] is None:
                continue
            trial = active.copy()
            trial[i] = True
            t_out, t_ids = build(trial)
            if geo.is_simple(t_out):
                active, out, out_ids = trial, t_out, t_ids
        if not geo.is_simple(out):
            logger.warning("grid snapping would break the room polygon; left unchanged")
            return polygon
    return RoomPolygon(
        vertices=tuple(tuple(float(c) for c in p) for p in out),
        source_segment_ids=tuple(out_ids) if polygon.source_segment_ids else (),
    )


def segments_from_polygon(polygon: RoomPolygon, segments: list[WallSegment]) -> list[WallSegment]:
    """Rewrite loop-wall endpoints to follow the polygon edges."""
    by_id = {s.id: s for s in segments}
    pts = polygon.array
    out = dict(by_id)
    for i, sid in enumerate(polygon.source_segment_ids):
        a, b = pts[i], pts[(i + 1) % len(pts)]
        s = by_id.get(sid)
        if s is None:
            out[sid] = WallSegment(id=sid, p0=tuple(a), p1=tuple(b))
            continue
        # keep the original wall orientation
        if np.dot(b - a, s.direction) < 0:
            a, b = b, a
        if not (np.array_equal(a, s.p0) and np.array_equal(b, s.p1)):
            out[sid] = _rebase_openings(s, a, b)
    return [out[s.id] for s in segments] + [out[k] for k in out if k not in {s.id for s in segments}]


# ---------------------------------------------------------------------------


def _wall_frame(seg: WallSegment, side_point):
    a = np.asarray(seg.p0, dtype=float)
    t = seg.direction
    n = np.array([-t[1], t[0]])
    if np.dot(np.asarray(side_point) - a, n) < 0:
        n = -n
    return a, t, n


def _angle_between(u, v) -> float:
    c = float(np.clip(np.dot(u, v) / (np.linalg.norm(u) * np.linalg.norm(v)), -1.0, 1.0))
    return math.acos(c)


def wall_target_pose(obj: ObjectNode, seg: WallSegment, clearance: float) -> OrientedBox:
    """Pose with the back face ``clearance`` off the wall, front facing the room."""
    box = obj.box
    center = np.asarray(box.center[:2])
    a, t, n = _wall_frame(seg, center)
    yaw = normalize_yaw(math.atan2(-n[0], n[1]))
    half_depth = 0.5 * box.dims[2]
    anchor = center - half_depth * n
    foot = a + float(np.dot(anchor - a, t)) * t
    new_center = foot + (clearance + half_depth) * n
    return replace(box, center=(float(new_center[0]), float(new_center[1]), box.center[2]), yaw=yaw)


def align_objects_to_walls(
    objects: list[ObjectNode],
    segments: list[WallSegment],
    cfg: SnapConfig = SnapConfig(),
    log: list[str] | None = None,
) -> list[ObjectNode]:
    """Snap objects standing near a wall, and roughly facing away from it, flush
    against that wall.

    The candidate wall is the closest one within ``wall_align_max_dist`` of the
    object's back-face midpoint whose room-facing normal is within
    ``wall_align_max_angle`` of the object's front.
    """
    out = []
    for obj in objects:
        anchor = obj.box.back_anchor()
        center = np.asarray(obj.box.center[:2])
        best = None
        for seg in segments:
            d = geo.point_segment_distance(anchor, seg.p0, seg.p1)
            if d > cfg.wall_align_max_dist:
                continue
            _, _, n = _wall_frame(seg, center)
            if _angle_between(obj.box.front, n) > cfg.wall_align_max_angle:
                continue
            if best is None or d < best[0]:
                best = (d, seg)
        if best is None:
            out.append(obj)
            continue
        seg = best[1]
        target = wall_target_pose(obj, seg, cfg.wall_clearance)
        if (
            obj.wall_attachment == seg.id
            and np.allclose(target.center, obj.box.center, atol=1e-9, rtol=0)
            and abs(target.yaw - obj.box.yaw) <= 1e-9
        ):
            out.append(obj)  # already flush; keep bit-identical
            continue
        if log is not None:
            log.append(
                f"align object {obj.id} to wall {seg.id}: center {_fmt(obj.box.center)} -> {_fmt(target.center)}, "
                f"yaw {math.degrees(obj.box.yaw):.3f} -> {math.degrees(target.yaw):.3f} deg"
            )
        out.append(replace(obj, box=target, wall_attachment=seg.id))
    return out


# ---------------------------------------------------------------------------


def _move_edge(pts: np.ndarray, i: int, delta: float) -> np.ndarray:
    """Translate edge i outward by ``delta``, re-intersecting its neighbours."""
    n = len(pts)
    a, b = pts[i], pts[(i + 1) % n]
    shift = -delta * geo.inward_normal(a, b)
    a2, b2 = a + shift, b + shift
    prev_a = pts[(i - 1) % n]
    next_b = pts[(i + 2) % n]
    new_a = geo.line_intersection(a2, b2 - a2, prev_a, a - prev_a)
    new_b = geo.line_intersection(a2, b2 - a2, next_b, b - next_b)
    out = pts.copy()
    out[i] = a2 if new_a is None else new_a
    out[(i + 1) % n] = b2 if new_b is None else new_b
    if not geo.is_simple(out):
        out = pts.copy()
        out[i], out[(i + 1) % n] = a2, b2
        if not geo.is_simple(out):
            # insert connector vertices instead of dragging the neighbours
            out = np.insert(pts, i + 1, [a2, b2], axis=0)
    return out


def pull_objects_inside(
    objects: list[ObjectNode],
    polygon: RoomPolygon,
    segments: list[WallSegment],
    cfg: SnapConfig = SnapConfig(),
) -> ContainmentResult:
    """Expand offending walls until every object footprint lies in the room.

    Each pass pushes every wall nearest to an exterior corner outward along its
    normal by the deepest penetration plus ``wall_clearance``.
    """
    pts = polygon.array.copy()
    ids = list(polygon.source_segment_ids) or [f"edge-{i}" for i in range(len(pts))]
    log: list[str] = []
    corners = np.concatenate([o.box.footprint() for o in objects]) if objects else np.zeros((0, 2))
    passes = 0
    remaining = 0.0
    while True:
        if len(corners) == 0:
            break
        inside = geo.points_in_polygon(corners, pts)
        if inside.all():
            remaining = 0.0
            break
        need: dict[int, float] = {}
        remaining = 0.0
        for c in corners[~inside]:
            best = None
            for i in range(len(pts)):
                a, b = pts[i], pts[(i + 1) % len(pts)]
                d = geo.point_segment_distance(c, a, b)
                if best is None or d < best[0]:
                    best = (d, i)
            d, i = best
            a, b = pts[i], pts[(i + 1) % len(pts)]
            pen = -float(np.dot(c - a, geo.inward_normal(a, b)))
            if pen <= 0:
                pen = d
            remaining = max(remaining, pen)
            need[i] = max(need.get(i, 0.0), pen)
        if passes >= cfg.max_expand_passes:
            log.append(f"containment not converged after {passes} passes; remaining penetration {remaining:.4f} m")
            break
        passes += 1
        # move higher-index edges first so inserted vertices keep indices valid
        for i in sorted(need, reverse=True):
            delta = need[i] + cfg.wall_clearance
            log.append(f"expand wall {ids[i]} outward by {delta:.4f} m")
            before = len(pts)
            pts = _move_edge(pts, i, delta)
            if len(pts) > before:
                orig = ids[i]
                ids[i : i + 1] = [f"{orig}-connector-a", orig, f"{orig}-connector-b"]
    new_poly = RoomPolygon(
        vertices=tuple(tuple(float(c) for c in p) for p in pts),
        source_segment_ids=tuple(ids),
    )
    new_segments = segments_from_polygon(new_poly, segments) if polygon.source_segment_ids else segments
    return ContainmentResult(
        objects=list(objects),
        polygon=new_poly,
        segments=new_segments,
        converged=remaining == 0.0,
        passes=passes,
        remaining_penetration=remaining,
        log=log,
    )
