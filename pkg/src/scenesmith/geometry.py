"""Plan-view geometry helpers: polygons, separating axes, rays."""

from __future__ import annotations

import math

import numpy as np

EPS = 1e-12


def polygon_area(pts) -> float:
    """Signed shoelace area; positive for counter-clockwise order."""
    p = np.asarray(pts, dtype=float)
    x, y = p[:, 0], p[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))


def _orient(a, b, c) -> float:
    return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])


def _on_segment(a, b, p, tol) -> bool:
    return (
        min(a[0], b[0]) - tol <= p[0] <= max(a[0], b[0]) + tol
        and min(a[1], b[1]) - tol <= p[1] <= max(a[1], b[1]) + tol
    )


def segments_intersect(a, b, c, d, tol: float = 1e-12) -> bool:
    """Closed-segment intersection test, collinear overlap included."""
    o1, o2 = _orient(a, b, c), _orient(a, b, d)
    o3, o4 = _orient(c, d, a), _orient(c, d, b)
    if ((o1 > tol and o2 < -tol) or (o1 < -tol and o2 > tol)) and (
        (o3 > tol and o4 < -tol) or (o3 < -tol and o4 > tol)
    ):
        return True
    if abs(o1) <= tol and _on_segment(a, b, c, tol):
        return True
    if abs(o2) <= tol and _on_segment(a, b, d, tol):
        return True
    if abs(o3) <= tol and _on_segment(c, d, a, tol):
        return True
    if abs(o4) <= tol and _on_segment(c, d, b, tol):
        return True
    return False


def is_simple(pts) -> bool:
    """True for a closed polygon with >= 3 vertices and no self-contact."""
    p = np.asarray(pts, dtype=float)
    n = len(p)
    if n < 3 or abs(polygon_area(p)) <= EPS:
        return False
    for i in range(n):
        if np.allclose(p[i], p[(i + 1) % n], atol=EPS, rtol=0):
            return False
    for i in range(n):
        a, b = p[i], p[(i + 1) % n]
        for j in range(i + 1, n):
            c, d = p[j], p[(j + 1) % n]
            if j == i + 1 or (i == 0 and j == n - 1):
                # adjacent edges may only share their common vertex
                shared = b if j == i + 1 else a
                other_e1 = a if j == i + 1 else b
                other_e2 = d if j == i + 1 else c
                if abs(_orient(other_e1, shared, other_e2)) <= EPS:
                    v1, v2 = other_e1 - shared, other_e2 - shared
                    if np.dot(v1, v2) > 0:  # folds back onto itself
                        return False
                continue
            if segments_intersect(a, b, c, d):
                return False
    return True


def point_segment_distance(p, a, b) -> float:
    p, a, b = (np.asarray(v, dtype=float) for v in (p, a, b))
    ab = b - a
    denom = float(ab @ ab)
    t = 0.0 if denom == 0.0 else min(1.0, max(0.0, float((p - a) @ ab) / denom))
    return float(np.linalg.norm(p - (a + t * ab)))


def closest_point_on_segment(p, a, b) -> np.ndarray:
    p, a, b = (np.asarray(v, dtype=float) for v in (p, a, b))
    ab = b - a
    denom = float(ab @ ab)
    t = 0.0 if denom == 0.0 else min(1.0, max(0.0, float((p - a) @ ab) / denom))
    return a + t * ab


def points_in_polygon(points, poly, tol: float = 1e-9) -> np.ndarray:
    """Inclusive point-in-polygon for many points (boundary within ``tol`` counts)."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    poly = np.asarray(poly, dtype=float)
    x, y = pts[:, 0:1], pts[:, 1:2]
    a = poly
    b = np.roll(poly, -1, axis=0)
    # boundary test
    ab = b - a
    ab2 = np.einsum("ij,ij->i", ab, ab)
    ap_x = x - a[:, 0]
    ap_y = y - a[:, 1]
    t = np.clip((ap_x * ab[:, 0] + ap_y * ab[:, 1]) / np.where(ab2 == 0, 1, ab2), 0.0, 1.0)
    dx = ap_x - t * ab[:, 0]
    dy = ap_y - t * ab[:, 1]
    on_edge = np.any(dx * dx + dy * dy <= tol * tol, axis=1)
    # even-odd ray cast to +x
    ya, yb = a[:, 1], b[:, 1]
    crosses = (ya > y) != (yb > y)
    with np.errstate(divide="ignore", invalid="ignore"):
        xint = a[:, 0] + (y - ya) * (b[:, 0] - a[:, 0]) / (yb - ya)
    inside = np.sum(crosses & (x < xint), axis=1) % 2 == 1
    return inside | on_edge


def point_in_polygon(point, poly, tol: float = 1e-9) -> bool:
    return bool(points_in_polygon(np.asarray(point)[None, :], poly, tol)[0])


def line_intersection(p, d, q, e):
    """Intersection of lines p + s d and q + t e, or None when parallel."""
    denom = d[0] * e[1] - d[1] * e[0]
    if abs(denom) < 1e-12:
        return None
    w = np.asarray(q, dtype=float) - np.asarray(p, dtype=float)
    s = (w[0] * e[1] - w[1] * e[0]) / denom
    return np.asarray(p, dtype=float) + s * np.asarray(d, dtype=float)


def inward_normal(a, b) -> np.ndarray:
    """Left normal of edge a->b; points into a counter-clockwise polygon."""
    d = np.asarray(b, dtype=float) - np.asarray(a, dtype=float)
    n = np.array([-d[1], d[0]])
    return n / np.linalg.norm(n)


# ---------------------------------------------------------------------------
# convex polygons


def _axes(poly: np.ndarray) -> np.ndarray:
    edges = np.roll(poly, -1, axis=0) - poly
    normals = np.stack([-edges[:, 1], edges[:, 0]], axis=1)
    normals /= np.linalg.norm(normals, axis=1, keepdims=True)
    return normals


def separation_candidates(a, b) -> list[tuple[float, np.ndarray]]:
    """Per separating axis, the push of ``b`` (depth, unit direction) that makes
    the convex polygons just touch.  Non-positive depth means already separate."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    out = []
    seen: list[np.ndarray] = []
    for n in np.concatenate([_axes(a), _axes(b)]):
        if any(abs(abs(float(n @ m)) - 1.0) < 1e-12 for m in seen):
            continue
        seen.append(n)
        pa, pb = a @ n, b @ n
        out.append((float(pa.max() - pb.min()), n.copy()))
        out.append((float(pb.max() - pa.min()), -n))
    return out


def sat_overlap(a, b, tol: float = 1e-9) -> tuple[bool, float, np.ndarray]:
    """Separating-axis test for two convex polygons.

    Returns ``(overlapping, depth, direction)`` where translating ``b`` by
    ``depth * direction`` brings the shapes into contact (the minimal
    translation vector).  Overlap means penetration deeper than ``tol``.
    """
    cands = separation_candidates(a, b)
    depth, direction = min(cands, key=lambda c: c[0])
    return depth > tol, depth, direction


def sat_gap(a, b) -> float:
    """Largest separating-axis gap; > 0 iff the convex polygons are disjoint."""
    return -min(d for d, _ in separation_candidates(a, b))


def convex_clip(subject, clip) -> np.ndarray:
    """Sutherland-Hodgman intersection of two convex CCW polygons."""
    out = [np.asarray(p, dtype=float) for p in subject]
    clip = np.asarray(clip, dtype=float)
    for i in range(len(clip)):
        c0, c1 = clip[i], clip[(i + 1) % len(clip)]
        inp, out = out, []
        if not inp:
            break
        s = inp[-1]
        for e in inp:
            e_in = _orient(c0, c1, e) >= 0
            s_in = _orient(c0, c1, s) >= 0
            if e_in:
                if not s_in:
                    out.append(_seg_line(s, e, c0, c1))
                out.append(e)
            elif s_in:
                out.append(_seg_line(s, e, c0, c1))
            s = e
    return np.asarray(out).reshape(-1, 2)


def _seg_line(s, e, c0, c1):
    p = line_intersection(s, e - s, c0, c1 - c0)
    return e if p is None else p


def convex_intersection_area(a, b) -> float:
    inter = convex_clip(a, b)
    return abs(polygon_area(inter)) if len(inter) >= 3 else 0.0


def convex_gap(a, b) -> float:
    """Euclidean distance between convex polygons (0 when they intersect)."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if sat_gap(a, b) <= 0.0:
        return 0.0
    best = math.inf
    for p, q in ((a, b), (b, a)):
        for v in p:
            for i in range(len(q)):
                best = min(best, point_segment_distance(v, q[i], q[(i + 1) % len(q)]))
    return best


def ray_polygon_hit(origin, direction, poly) -> float | None:
    """Smallest t >= 0 with origin + t*direction on or inside ``poly``."""
    o = np.asarray(origin, dtype=float)
    d = np.asarray(direction, dtype=float)
    poly = np.asarray(poly, dtype=float)
    if point_in_polygon(o, poly):
        return 0.0
    best = None
    for i in range(len(poly)):
        a, b = poly[i], poly[(i + 1) % len(poly)]
        e = b - a
        denom = d[0] * e[1] - d[1] * e[0]
        if abs(denom) < 1e-15:
            continue
        w = a - o
        t = (w[0] * e[1] - w[1] * e[0]) / denom
        u = (w[0] * d[1] - w[1] * d[0]) / denom
        if t >= 0.0 and -1e-12 <= u <= 1.0 + 1e-12:
            best = t if best is None else min(best, t)
    return best
