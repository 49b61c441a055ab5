"""Push overlapping furniture apart while a wardrobe stays on its wall and a
chair keeps its place at the table.

Run:  python3 demos/untangle_furniture.py
"""

import math

from scenesmith.graph import infer_relations, resolve_collisions
from scenesmith.layout import align_objects_to_walls, close_walls
from scenesmith.model import EdgeKind, ObjectNode, OrientedBox, WallSegment

corners = [(0, 0), (5, 0), (5, 4), (0, 4)]
walls = [WallSegment(f"w{i}", corners[i], corners[(i + 1) % 4], 2.5) for i in range(4)]


def box(oid, label, x, y, w, h, l, yaw=0.0):
    return ObjectNode(oid, OrientedBox((x, y, h / 2), (w, h, l), yaw), label)


objects = [
    box("wardrobe", "storage", 1.0, 0.35, 1.2, 2.0, 0.6, math.radians(3)),  # slightly skewed, near the south wall
    box("table", "table", 2.5, 2.0, 1.2, 0.75, 0.8),
    box("chair", "chair", 2.5, 1.35, 0.45, 0.9, 0.45),  # faces +y, towards the table
    box("sofa", "sofa", 3.2, 2.4, 1.8, 0.8, 0.9, math.radians(20)),  # dumped on top of the table
    box("crate", "storage", 1.3, 0.9, 0.6, 0.6, 0.6),  # jammed against the wardrobe
]

poly = close_walls(walls).polygon
objects = align_objects_to_walls(objects, walls)
graph = infer_relations(objects, walls)
print("relations:")
for e in graph.edges:
    if e.kind in (EdgeKind.ATTACHED_TO_WALL, EdgeKind.TABLE_CHAIR_PAIR):
        print(f"   {e.kind.name:17s} {e.src} -> {e.dst}")

out, report = resolve_collisions(objects, graph, poly, segments=walls)
print(f"\nresolved: {report.resolved} after {report.iterations_used} iteration(s)")
for o in out:
    dx, dy = report.displacement_log[o.id]
    print(f"   {o.id:9s} moved ({dx:+.3f}, {dy:+.3f}) m  -> centre ({o.box.center[0]:.3f}, {o.box.center[1]:.3f})")
