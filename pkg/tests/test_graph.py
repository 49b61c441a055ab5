import json
import math

import numpy as np
import pytest

from scenesmith.graph import CollisionReport, infer_relations, resolve_collisions
from scenesmith.layout import align_objects_to_walls, close_walls
from scenesmith.model import EdgeKind

from conftest import deg, obj, rect_walls


def _edges(g, kind):
    return sorted((e.src, e.dst) for e in g.edges_of(kind) if g.nodes[e.src] == "object")


def test_vase_on_table():
    walls = rect_walls()
    table = obj("table", (2, 1.5), (1.2, 0.75, 0.8), label="table")
    vase = obj("vase", (2.1, 1.4, 0.75 + 0.01 + 0.15), (0.15, 0.3, 0.15), label="other")
    g = infer_relations([table, vase], walls)
    assert _edges(g, EdgeKind.ON_TOP) == [("vase", "table")]


def test_vase_too_high_is_not_on_top():
    walls = rect_walls()
    table = obj("table", (2, 1.5), (1.2, 0.75, 0.8), label="table")
    vase = obj("vase", (2.1, 1.4, 0.75 + 0.2 + 0.15), (0.15, 0.3, 0.15), label="other")
    assert _edges(infer_relations([table, vase], walls), EdgeKind.ON_TOP) == []


def test_side_by_side_cabinets_connect():
    walls = rect_walls()
    a = obj("a", (1.0, 1.5), (0.6, 0.9, 0.5))
    b = obj("b", (1.63, 1.5), (0.6, 0.9, 0.5))  # 3 cm gap
    g = infer_relations([a, b], walls)
    assert _edges(g, EdgeKind.CONNECTING_TO) == [("a", "b")]


def test_yaw_mismatch_blocks_connection():
    walls = rect_walls()
    a = obj("a", (1.0, 1.5), (0.6, 0.9, 0.5))
    b = obj("b", (1.63, 1.5), (0.6, 0.9, 0.5), yaw=deg(30))
    assert _edges(infer_relations([a, b], walls), EdgeKind.CONNECTING_TO) == []


def test_chair_table_pairing_uses_facing():
    walls = rect_walls()
    table = obj("table", (2, 1.5), (1.2, 0.75, 0.8), label="table")
    facing = obj("c1", (2, 0.6), (0.5, 0.9, 0.5), label="chair")  # yaw 0 faces +y, toward the table
    away = obj("c2", (2, 2.4), (0.5, 0.9, 0.5), label="chair")  # also faces +y, away from the table
    g = infer_relations([table, facing, away], walls)
    assert _edges(g, EdgeKind.TABLE_CHAIR_PAIR) == [("c1", "table")]


def test_attachment_carried_over():
    walls = rect_walls()
    cab = align_objects_to_walls([obj("cab", (2, 0.3), (1, 1, 0.5))], walls)[0]
    g = infer_relations([cab], walls)
    assert _edges(g, EdgeKind.ATTACHED_TO_WALL) == [("cab", "w-s")]


def test_two_squares_split_evenly():
    walls = rect_walls(6, 6)
    poly = close_walls(walls).polygon
    a = obj("a", (2.0, 3.0), (1, 1, 1))
    b = obj("b", (2.8, 3.0), (1, 1, 1))
    g = infer_relations([a, b], walls)
    out, rep = resolve_collisions([a, b], g, poly, segments=walls)
    assert rep.resolved and rep.iterations_used == 1
    assert out[0].box.center[0] == pytest.approx(1.9, abs=1e-9)
    assert out[1].box.center[0] == pytest.approx(2.9, abs=1e-9)
    assert out[0].box.center[1] == out[1].box.center[1] == 3.0


def test_wall_attached_cabinet_does_not_move_off_wall():
    walls = rect_walls()
    poly = close_walls(walls).polygon
    cab = align_objects_to_walls([obj("cab", (2.0, 0.3), (1.0, 1.0, 0.5))], walls)[0]
    chair = obj("chair", (2.0, 0.7), (0.5, 0.9, 0.5), label="chair")  # overlaps 0.06 in y
    g = infer_relations([cab, chair], walls)
    out, rep = resolve_collisions([cab, chair], g, poly, segments=walls)
    assert rep.resolved
    assert out[0].box.center == cab.box.center  # MTV is along the wall normal: projects to zero
    assert out[1].box.center[1] == pytest.approx(0.01 + 0.5 + 0.25, abs=1e-9)
    assert out[1].box.center[0] == pytest.approx(2.0, abs=1e-12)


def test_push_does_not_bounce_between_pair_members():
    # the cheapest way out of the table runs straight into its chair
    walls = rect_walls(7, 5)
    poly = close_walls(walls).polygon
    sofa = obj("sofa", (4.707, 2.303), (0.34, 1.081, 0.47), yaw=-2.121, label="sofa")
    table = obj("table", (4.438, 2.038), (1.0, 0.75, 0.7), yaw=2.33, label="table")
    chair = obj("chair", (4.946, 2.52), (0.45, 0.9, 0.45), yaw=2.33, label="chair")
    objs = [sofa, table, chair]
    g = infer_relations(objs, walls)
    assert _edges(g, EdgeKind.TABLE_CHAIR_PAIR) == [("chair", "table")]
    out, rep = resolve_collisions(objs, g, poly, segments=walls)
    assert rep.resolved and rep.iterations_used <= 2


def test_no_overlap_fixpoint():
    walls = rect_walls()
    poly = close_walls(walls).polygon
    objs = [obj("a", (1, 1), (0.5, 1, 0.5)), obj("b", (3, 2), (0.5, 1, 0.5))]
    out, rep = resolve_collisions(objs, infer_relations(objs, walls), poly, segments=walls)
    assert out == objs
    assert rep.iterations_used == 0 and rep.resolved and rep.remaining_overlaps == []
    assert all(v == (0.0, 0.0) for v in rep.displacement_log.values())


def test_on_top_moves_rigidly_and_pairs_keep_offset():
    walls = rect_walls(6, 5)
    poly = close_walls(walls).polygon
    table = obj("table", (3, 2.5), (1.2, 0.75, 0.8), label="table")
    vase = obj("vase", (3.1, 2.5, 0.9), (0.15, 0.3, 0.15), label="other")
    chair = obj("chair", (3, 1.75), (0.5, 0.9, 0.5), label="chair")
    sofa = obj("sofa", (3.9, 2.5), (1.0, 0.8, 2.0), label="sofa")  # overlaps the table
    objs = [table, vase, chair, sofa]
    g = infer_relations(objs, walls)
    assert _edges(g, EdgeKind.ON_TOP) == [("vase", "table")]
    assert _edges(g, EdgeKind.TABLE_CHAIR_PAIR) == [("chair", "table")]
    out, rep = resolve_collisions(objs, g, poly, segments=walls)
    assert rep.resolved
    c = {o.id: np.array(o.box.center) for o in out}
    assert not np.allclose(c["table"], table.box.center)
    assert np.allclose(c["vase"] - c["table"], np.subtract(vase.box.center, table.box.center), atol=1e-6)
    assert np.allclose(c["chair"] - c["table"], np.subtract(chair.box.center, table.box.center), atol=1e-6)
    g2 = infer_relations(out, walls)
    assert _edges(g2, EdgeKind.ON_TOP) == _edges(g, EdgeKind.ON_TOP)


def test_report_invariant_and_determinism(rng):
    walls = rect_walls(4, 4)
    poly = close_walls(walls).polygon
    objs = [obj(f"o{i}", rng.uniform(0.6, 3.4, 2), (0.8, 1.0, 0.8), yaw=rng.uniform(-3, 3)) for i in range(12)]
    g = infer_relations(objs, walls)
    _, r1 = resolve_collisions(objs, g, poly, segments=walls)
    _, r2 = resolve_collisions(objs, g, poly, segments=walls)
    assert json.dumps(r1.to_dict()) == json.dumps(r2.to_dict())
    assert r1.resolved == (r1.remaining_overlaps == [])
    assert r1.iterations_used <= 10


def test_collision_report_dict_shape():
    rep = CollisionReport(2, False, [(("a", "b"), 0.1)], {"a": (0.1, 0.0)})
    d = rep.to_dict()
    assert d["remaining_overlaps"] == [{"ids": ["a", "b"], "penetration": 0.1}]
