"""Scene-graph relations and constraint-aware collision resolution."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import geometry as geo
from .layout import SnapConfig
from .model import EdgeKind, ObjectNode, RoomPolygon, SceneGraph, WallSegment

# separation left between pushed-apart footprints
_SLACK = 1e-9


@dataclass(frozen=True)
class RelationConfig:
    on_top_min_overlap: float = 0.5  # intersection over the smaller footprint
    on_top_max_gap: float = 0.05  # |bottom(a) - top(b)|, meters
    connect_max_yaw: float = math.radians(5.0)
    pair_max_dist: float = 1.0  # chair front ray length, meters
    chair_labels: tuple[str, ...] = ("chair",)
    table_labels: tuple[str, ...] = ("table",)


@dataclass
class CollisionReport:
    iterations_used: int
    resolved: bool
    remaining_overlaps: list[tuple[tuple[str, str], float]] = field(default_factory=list)
    displacement_log: dict[str, tuple[float, float]] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "iterations_used": self.iterations_used,
            "resolved": self.resolved,
            "remaining_overlaps": [
                {"ids": list(ids), "penetration": depth} for ids, depth in self.remaining_overlaps
            ],
            "displacement_log": {k: list(v) for k, v in sorted(self.displacement_log.items())},
        }


def _vertical_overlap(a: ObjectNode, b: ObjectNode) -> bool:
    return min(a.box.top, b.box.top) - max(a.box.bottom, b.box.bottom) > 1e-9


def _yaw_diff(a: float, b: float) -> float:
    d = abs(a - b) % (2 * math.pi)
    return min(d, 2 * math.pi - d)


def infer_relations(
    objects: list[ObjectNode],
    segments: list[WallSegment],
    cfg: SnapConfig = SnapConfig(),
    rel: RelationConfig = RelationConfig(),
) -> SceneGraph:
    """Build the scene graph from parsed, wall-aligned objects."""
    g = SceneGraph()
    for s in segments:
        g.add_node(s.id, "wall")
        for k, o in enumerate(s.openings):
            g.add_node(o.id or f"{s.id}:{o.kind}{k}", o.kind)
    for o in objects:
        g.add_node(o.id, "object")

    # wall connectivity and openings
    for i, s in enumerate(segments):
        for k, o in enumerate(s.openings):
            g.add_edge(EdgeKind.CONNECTING_TO, o.id or f"{s.id}:{o.kind}{k}", s.id)
        for t in segments[i + 1 :]:
            if any(math.dist(p, q) < 1e-6 for p in (s.p0, s.p1) for q in (t.p0, t.p1)):
                a, b = sorted((s.id, t.id))
                g.add_edge(EdgeKind.CONNECTING_TO, a, b)

    for o in objects:
        if o.wall_attachment is not None and o.wall_attachment in g.nodes:
            g.add_edge(EdgeKind.ATTACHED_TO_WALL, o.id, o.wall_attachment)

    feet = {o.id: o.box.footprint() for o in objects}

    # on-top: one supporter per object, the one with the tightest vertical gap
    supported: set[frozenset] = set()
    for a in objects:
        best = None
        for b in objects:
            if a is b or a.box.center[2] <= b.box.center[2] or a.box.bottom <= b.box.bottom:
                continue
            gap = a.box.bottom - b.box.top
            if abs(gap) > rel.on_top_max_gap:
                continue
            inter = geo.convex_intersection_area(feet[a.id], feet[b.id])
            smaller = min(a.box.footprint_area, b.box.footprint_area)
            if inter / smaller < rel.on_top_min_overlap:
                continue
            if best is None or (abs(gap), b.id) < best[0]:
                best = ((abs(gap), b.id), b)
        if best is not None:
            g.add_edge(EdgeKind.ON_TOP, a.id, best[1].id)
            supported.add(frozenset((a.id, best[1].id)))

    for i, a in enumerate(objects):
        for b in objects[i + 1 :]:
            if frozenset((a.id, b.id)) in supported:
                continue
            if _yaw_diff(a.box.yaw, b.box.yaw) > rel.connect_max_yaw:
                continue
            if not _vertical_overlap(a, b):
                continue
            # penetrating pairs are collisions, not neighbours
            if geo.sat_overlap(feet[a.id], feet[b.id], tol=1e-6)[0]:
                continue
            if geo.convex_gap(feet[a.id], feet[b.id]) <= cfg.next_to_max_gap:
                src, dst = sorted((a.id, b.id))
                g.add_edge(EdgeKind.CONNECTING_TO, src, dst)

    tables = [o for o in objects if o.label in rel.table_labels]
    for c in objects:
        if c.label not in rel.chair_labels:
            continue
        best = None
        for t in tables:
            hit = geo.ray_polygon_hit(c.box.center[:2], c.box.front, feet[t.id])
            if hit is not None and hit <= rel.pair_max_dist:
                if best is None or (hit, t.id) < best[0]:
                    best = ((hit, t.id), t)
        if best is not None:
            g.add_edge(EdgeKind.TABLE_CHAIR_PAIR, c.id, best[1].id)
    return g


# ---------------------------------------------------------------------------


class _Units:
    """Objects glued into rigid groups by OnTop, TableChairPair and ConnectingTo."""

    def __init__(self, objects, graph: SceneGraph, segments):
        ids = [o.id for o in objects]
        self.parent = {i: i for i in ids}
        for e in graph.edges:
            if e.kind is EdgeKind.ATTACHED_TO_WALL:
                continue
            if e.src in self.parent and e.dst in self.parent:
                self._union(e.src, e.dst)
        walls = {s.id: s for s in segments}
        self.members: dict[str, list[str]] = {}
        for i in ids:
            self.members.setdefault(self.find(i), []).append(i)
        by_id = {o.id: o for o in objects}
        self.area = {r: sum(by_id[m].box.footprint_area for m in ms) for r, ms in self.members.items()}
        # None = free, array = allowed tangent, "fixed" = immobile
        self.motion: dict[str, object] = {}
        for r, ms in self.members.items():
            tangents = [walls[by_id[m].wall_attachment].direction for m in ms if by_id[m].wall_attachment in walls]
            if not tangents:
                self.motion[r] = None
            elif all(abs(abs(float(np.dot(tangents[0], t))) - 1.0) < 1e-9 for t in tangents):
                self.motion[r] = tangents[0]
            else:
                self.motion[r] = "fixed"

    def find(self, i):
        while self.parent[i] != i:
            self.parent[i] = self.parent[self.parent[i]]
            i = self.parent[i]
        return i

    def _union(self, a, b):
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            lo, hi = sorted((ra, rb))
            self.parent[hi] = lo


def _direction(motion, n):
    """Unit motion direction that increases separation along n, and its efficiency."""
    if motion is None:
        return n, 1.0
    if isinstance(motion, str):
        return None, 0.0
    e = float(np.dot(motion, n))
    if abs(e) < 1e-9:
        return None, 0.0
    return (motion if e > 0 else -motion), abs(e)


class _Clipper:
    def __init__(self, polygon: RoomPolygon | None):
        self.poly = None if polygon is None else polygon.array
        self.convex = False
        if self.poly is not None:
            p = self.poly
            crosses = [geo._orient(p[i - 1], p[i], p[(i + 1) % len(p)]) for i in range(len(p))]
            self.convex = all(c >= -1e-12 for c in crosses)

    def max_fraction(self, corners: np.ndarray, v: np.ndarray) -> float:
        if self.poly is None or not np.any(v):
            return 1.0
        inside0 = geo.points_in_polygon(corners, self.poly)
        corners = corners[inside0]  # corners already outside cannot be protected
        if len(corners) == 0:
            return 1.0
        if self.convex:
            f = 1.0
            p = self.poly
            for i in range(len(p)):
                a, b = p[i], p[(i + 1) % len(p)]
                n = geo.inward_normal(a, b)
                vn = float(v @ n)
                if vn >= 0:
                    continue
                room = (corners - a) @ n
                f = min(f, float(np.min(np.maximum(room, 0.0))) / -vn)
            return max(0.0, f)
        if geo.points_in_polygon(corners + v, self.poly).all():
            return 1.0
        lo, hi = 0.0, 1.0
        for _ in range(40):
            mid = 0.5 * (lo + hi)
            if geo.points_in_polygon(corners + mid * v, self.poly).all():
                lo = mid
            else:
                hi = mid
        return lo


def resolve_collisions(
    objects: list[ObjectNode],
    graph: SceneGraph,
    polygon: RoomPolygon | None,
    cfg: SnapConfig = SnapConfig(),
    segments: list[WallSegment] = (),
) -> tuple[list[ObjectNode], CollisionReport]:
    """Push overlapping footprints apart while honoring scene-graph constraints.

    Each iteration visits overlapping pairs deepest-first and separates them
    along a separating axis.  Among the candidate axes, the push that leaves
    the least penetration with third parties wins, then the shortest one.  The push is split between the two
    rigid groups in inverse proportion to their footprint area; wall-attached
    groups may only slide along their wall; no group corner may leave the
    room polygon.
    """
    order = [o.id for o in objects]
    by_id = {o.id: o for o in objects}
    units = _Units(objects, graph, segments)
    pos = {o.id: np.asarray(o.box.center[:2], dtype=float) for o in objects}
    base_feet = {o.id: o.box.footprint() - pos[o.id] for o in objects}
    start = {k: v.copy() for k, v in pos.items()}
    clipper = _Clipper(polygon)

    def foot(i):
        return base_feet[i] + pos[i]

    def unit_corners(r):
        return np.concatenate([foot(m) for m in units.members[r]])

    def overlaps():
        found = []
        for a_idx, a in enumerate(order):
            for b in order[a_idx + 1 :]:
                if units.find(a) == units.find(b) or not _vertical_overlap(by_id[a], by_id[b]):
                    continue
                fa, fb = foot(a), foot(b)
                if np.any(fa.min(axis=0) > fb.max(axis=0)) or np.any(fb.min(axis=0) > fa.max(axis=0)):
                    continue
                hit, depth, _ = geo.sat_overlap(fa, fb)
                if hit:
                    found.append((depth, a, b))
        found.sort(key=lambda t: (-t[0], t[1], t[2]))
        return found

    def collateral(ri, vi, rj, vj):
        """Total penetration the two units would have, with anything, after moving by vi and vj."""
        moved = {m: (foot(m) + vi, ri) for m in units.members[ri]}
        moved.update({m: (foot(m) + vj, rj) for m in units.members[rj]})
        total = 0.0
        for m, (fm, rm) in moved.items():
            lo, hi = fm.min(axis=0), fm.max(axis=0)
            for o in order:
                ro = units.find(o)
                if ro == rm or (o in moved and o < m) or not _vertical_overlap(by_id[m], by_id[o]):
                    continue
                fo = moved[o][0] if o in moved else foot(o)
                if np.any(lo > fo.max(axis=0)) or np.any(hi < fo.min(axis=0)):
                    continue
                hit, depth, _ = geo.sat_overlap(fm, fo)
                if hit:
                    total += depth
        return total

    def plan(ri, rj, depth, n):
        """Best (key, vi, vj) for separating along n by depth."""
        mi, ei = _direction(units.motion[ri], -n)
        mj, ej = _direction(units.motion[rj], n)
        ai, aj = units.area[ri], units.area[rj]
        si, sj = aj / (ai + aj), ai / (ai + aj)
        options = []
        if mi is not None and mj is not None:
            options.append((si * depth / ei, sj * depth / ej))
        if mj is not None:
            options.append((0.0, depth / ej))
        if mi is not None:
            options.append((depth / ei, 0.0))
        best = None
        for alpha_i, alpha_j in options:
            vi = alpha_i * mi if alpha_i else np.zeros(2)
            vj = alpha_j * mj if alpha_j else np.zeros(2)
            fi = clipper.max_fraction(unit_corners(ri), vi)
            vi = vi * fi
            short = (1.0 - fi) * alpha_i * ei
            if short > 0 and mj is not None:
                alpha_j += short / ej
                vj = alpha_j * mj
            fj = clipper.max_fraction(unit_corners(rj), vj)
            vj = vj * fj
            achieved = float(np.linalg.norm(vi)) * ei + float(np.linalg.norm(vj)) * ej
            cost = float(np.linalg.norm(vi) + np.linalg.norm(vj))
            full = achieved >= depth - 1e-12
            extra = collateral(ri, vi, rj, vj)
            key = (not full, round(extra, 12), cost if full else -achieved)
            if best is None or key < best[0]:
                best = (key, vi, vj)
        return best

    iterations = 0
    for it in range(cfg.max_collision_iters):
        pairs = overlaps()
        if not pairs:
            break
        iterations = it + 1
        for _, a, b in pairs:
            ri, rj = units.find(a), units.find(b)
            cands = geo.separation_candidates(foot(a), foot(b))
            if min(d for d, _ in cands) <= 1e-9:
                continue  # already separated by an earlier push
            best = None
            for depth, n in cands:
                p = plan(ri, rj, depth + _SLACK, n)
                if p is not None and (best is None or p[0] < best[0]):
                    best = p
            if best is None:
                continue
            _, vi, vj = best
            for m in units.members[ri]:
                pos[m] = pos[m] + vi
            for m in units.members[rj]:
                pos[m] = pos[m] + vj

    remaining = [((a, b), depth) for depth, a, b in overlaps()]
    out = []
    for o in objects:
        d = pos[o.id] - np.asarray(o.box.center[:2])
        out.append(o if not np.any(d) else replace(o, box=o.box.translated(d)))
    report = CollisionReport(
        iterations_used=iterations,
        resolved=not remaining,
        remaining_overlaps=remaining,
        displacement_log={k: (float(pos[k][0] - start[k][0]), float(pos[k][1] - start[k][1])) for k in order},
    )
    return out, report
