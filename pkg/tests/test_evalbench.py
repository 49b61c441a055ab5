import math

import numpy as np
import pytest

from scenesmith.evalbench import (
    Mesh,
    MetricReport,
    box_mesh,
    chamfer_l1,
    image_rmse,
    image_ssim,
    load_obj,
    normalize_mesh,
    read_pairs_csv,
    run_image_benchmark,
    run_similarity_benchmark,
    sample_surface,
    save_obj,
    select_representative_views,
    write_report,
)
from scenesmith.evalbench.mesh import MeshError
from scenesmith.evalbench.views import UnobservedError, visible_counts
from scenesmith.model import CameraFrame


def brute_chamfer(a, b):
    d = np.abs(a[:, None, :] - b[None, :, :]).sum(axis=2)
    return d.min(axis=1).mean() + d.min(axis=0).mean()


def ssim_reference(x, y, w=8, c1=1e-4, c2=9e-4):
    vals = []
    for i in range(x.shape[0] - w + 1):
        for j in range(x.shape[1] - w + 1):
            a = x[i : i + w, j : j + w].ravel()
            b = y[i : i + w, j : j + w].ravel()
            ma, mb = a.mean(), b.mean()
            va, vb = ((a - ma) ** 2).mean(), ((b - mb) ** 2).mean()
            cov = ((a - ma) * (b - mb)).mean()
            vals.append((2 * ma * mb + c1) * (2 * cov + c2) / ((ma**2 + mb**2 + c1) * (va + vb + c2)))
    return float(np.mean(vals))


def uv_sphere(n=24):
    verts = [(0, 0, 1)]
    for i in range(1, n):
        th = math.pi * i / n
        for j in range(2 * n):
            ph = math.pi * j / n
            verts.append((math.sin(th) * math.cos(ph), math.sin(th) * math.sin(ph), math.cos(th)))
    verts.append((0, 0, -1))
    ring = lambda i, j: 1 + (i - 1) * 2 * n + (j % (2 * n))
    faces = [(0, ring(1, j), ring(1, j + 1)) for j in range(2 * n)]
    for i in range(1, n - 1):
        for j in range(2 * n):
            faces += [(ring(i, j), ring(i + 1, j), ring(i + 1, j + 1)), (ring(i, j), ring(i + 1, j + 1), ring(i, j + 1))]
    last = len(verts) - 1
    faces += [(ring(n - 1, j + 1), ring(n - 1, j), last) for j in range(2 * n)]
    return Mesh(np.array(verts, float), np.array(faces), "sphere")


def test_normalize_cube():
    m = normalize_mesh(box_mesh((2, 2, 2), (5, 5, 5)))
    lo, hi = m.bounds()
    assert np.array_equal(lo, [-0.5] * 3) and np.array_equal(hi, [0.5] * 3)


def test_normalize_box_extents():
    lo, hi = normalize_mesh(box_mesh((4, 1, 2), (1, 2, 3))).bounds()
    assert np.allclose(hi - lo, [1, 0.25, 0.5], atol=1e-15)


def test_normalize_fixpoint_bit_exact(rng):
    for _ in range(20):
        m = Mesh(rng.normal(size=(30, 3)) * rng.uniform(0.1, 10), rng.integers(0, 30, (20, 3)), "r")
        once = normalize_mesh(m)
        assert normalize_mesh(once).vertices.tobytes() == once.vertices.tobytes()
        d = normalize_mesh(m, "diagonal")
        assert normalize_mesh(d, "diagonal").vertices.tobytes() == d.vertices.tobytes()


def test_normalize_rejects_point_mesh():
    with pytest.raises(MeshError):
        normalize_mesh(Mesh(np.zeros((3, 3)), np.array([[0, 1, 2]]), "p"))


def test_single_triangle_containment():
    tri = np.array([[0.0, 0, 0], [2, 0, 0], [0, 1, 0]])
    pc = sample_surface(Mesh(tri, np.array([[0, 1, 2]]), "t"), 5000, seed=3)
    # barycentric coordinates from the explicit 2x2 solve
    m = np.array([tri[1, :2] - tri[0, :2], tri[2, :2] - tri[0, :2]]).T
    bc = np.linalg.solve(m, (pc.points[:, :2] - tri[0, :2]).T).T
    assert np.all(bc >= -1e-12) and np.all(bc.sum(axis=1) <= 1 + 1e-12)
    assert np.all(pc.points[:, 2] == 0)


def test_sampling_deterministic():
    m = box_mesh((1, 2, 3))
    a, b = sample_surface(m, 1000, 42), sample_surface(m, 1000, 42)
    assert a.points.tobytes() == b.points.tobytes()
    assert sample_surface(m, 1000, 43).points.tobytes() != a.points.tobytes()


def test_chamfer_hand_values():
    assert chamfer_l1(np.zeros((1, 3)), np.ones((1, 3))) == 6.0
    x = np.random.default_rng(0).normal(size=(40, 3))
    assert chamfer_l1(x, x) == 0.0


def test_chamfer_vs_brute_force(rng):
    for _ in range(10):
        a, b = rng.normal(size=(50, 3)), rng.normal(size=(50, 3))
        assert chamfer_l1(a, b) == pytest.approx(brute_chamfer(a, b), abs=1e-12)


def _frame(fid, t, rot=None):
    return CameraFrame(fid, np.eye(3) if rot is None else rot, np.asarray(t, float), 100, 100, 50, 40, 100, 80)


def test_principal_point_and_behind():
    f = _frame("f", (0, 0, 0))
    uv, z = f.project(np.array([[0, 0, 1.0], [0, 0, -1.0]]))
    assert np.allclose(uv[0], [50, 40])
    assert visible_counts(np.array([[0, 0, 1.0]]), [f]) == {"f": 1}
    assert visible_counts(np.array([[0, 0, -1.0]]), [f]) == {"f": 0}


def test_top4_views_match_explicit_projection(rng):
    pts = rng.uniform(-1, 1, (100, 3)) + [0, 0, 4]
    flip = np.diag([1.0, -1.0, -1.0])
    frames = [
        _frame("a", (0, 0, 0)),
        _frame("b", (0.8, 0, 0)),
        _frame("c", (-1.5, 0.5, 0)),
        _frame("d", (0, 0, -8)),  # everything behind
        _frame("e", (0.3, -0.9, 1)),
        _frame("f", (0, 0, 0), flip),  # looking the other way
    ]
    counts = {}
    for f in frames:
        k = np.array([[f.fx, 0, f.cx], [0, f.fy, f.cy], [0, 0, 1]])
        p = k @ np.hstack([f.rotation, f.translation[:, None]])
        h = np.hstack([pts, np.ones((100, 1))]) @ p.T
        c = 0
        for x, y, w in h:
            if w > 0 and 0 <= x / w < f.width and 0 <= y / w < f.height:
                c += 1
        counts[f.id] = c
    assert visible_counts(pts, frames) == counts
    expect = sorted((i for i in counts if counts[i] > 0), key=lambda i: (-counts[i], i))[:4]
    assert select_representative_views(pts, frames) == expect
    with pytest.raises(UnobservedError):
        select_representative_views(pts, [frames[3]])


def test_images_extremes():
    z = np.zeros((16, 16))
    o = np.ones((16, 16))
    assert image_rmse(z, o) == 1.0
    rng = np.random.default_rng(3)
    x = rng.random((16, 16, 3))
    assert image_rmse(x, x) == 0.0 and image_ssim(x, x) == 1.0


def test_ssim_reference_and_symmetry(rng):
    for _ in range(5):
        a, b = rng.random((16, 16)), rng.random((16, 16))
        assert image_ssim(a, b) == pytest.approx(ssim_reference(a, b), abs=1e-9)
        assert abs(image_ssim(a, b) - image_ssim(b, a)) <= 1e-12


def test_ssim_shape_errors():
    with pytest.raises(ValueError, match="dimension mismatch"):
        image_ssim(np.zeros((16, 16)), np.zeros((16, 17)))
    with pytest.raises(ValueError):
        image_ssim(np.zeros((4, 4)), np.zeros((4, 4)))


def test_identity_pairs_all_zero():
    cube = box_mesh((1, 2, 3), mesh_id="c")
    rep = run_similarity_benchmark([(cube, cube, "chair"), (cube, cube, "table")], n=500, seed=1)
    assert [i["cd_l1"] for i in rep.instances] == [0.0, 0.0]
    assert rep.avg_instance == 0.0 and rep.avg_class == 0.0 and rep.check_aggregation()


def test_cube_vs_sphere_against_small_n_oracle():
    cube, sphere = box_mesh(mesh_id="cube"), uv_sphere()
    # chamfer falls as sampling density rises, so compare at the oracle's n
    value = run_similarity_benchmark([(cube, sphere, "x")], n=2000, seed=0).avg_instance
    oracle = []
    for seed in (11, 12):
        a = sample_surface(normalize_mesh(cube), 2000, seed).points
        b = sample_surface(normalize_mesh(sphere), 2000, seed + 100).points
        oracle.append(brute_chamfer(a, b))
    assert abs(oracle[0] - oracle[1]) / np.mean(oracle) < 0.05
    assert abs(value - np.mean(oracle)) / np.mean(oracle) < 0.05


def test_empty_report():
    rep = run_similarity_benchmark([])
    assert rep.instances == [] and rep.avg_instance is None and rep.avg_class is None
    assert rep.to_dict()["avg_cad"] is None


def test_aggregation_identity(rng):
    rep = MetricReport([{"category": c, "cd_l1": float(v)} for c, v in
                        zip(rng.choice(["a", "b", "c"], 37), rng.random(37))])
    assert rep.check_aggregation(1e-12)
    assert rep.avg_class != pytest.approx(rep.avg_instance, abs=1e-15)


def test_markdown_columns():
    rep = MetricReport([{"category": "chair", "cd_l1": 0.1}, {"category": "sofa", "cd_l1": 0.3}])
    head = rep.to_markdown().splitlines()[0]
    assert head == "| Method | avg/CAD | avg/class | chr | sfa |"


def test_bad_pair_is_excluded(tmp_path):
    save_obj(tmp_path / "a.obj", box_mesh())
    (tmp_path / "pairs.csv").write_text("gt,retrieved,category\na.obj,missing.obj,chair\na.obj,a.obj,chair\n")
    rep = run_similarity_benchmark(read_pairs_csv(tmp_path / "pairs.csv"), n=100)
    assert len(rep.instances) == 1 and len(rep.excluded) == 1
    write_report(rep, tmp_path / "r.md")
    assert "excluded" in (tmp_path / "r.md").read_text()


def test_obj_round_trip_and_fan(tmp_path):
    (tmp_path / "q.obj").write_text("v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1/1 2/2 3/3 4/4\n")
    m = load_obj(tmp_path / "q.obj")
    assert m.faces.tolist() == [[0, 1, 2], [0, 2, 3]]
    save_obj(tmp_path / "out" / "q2.obj", m)
    assert np.array_equal(load_obj(tmp_path / "out" / "q2.obj").vertices, m.vertices)


def test_image_benchmark_files(tmp_path):
    from PIL import Image

    px = (np.random.default_rng(0).random((20, 20, 3)) * 255).astype(np.uint8)
    Image.fromarray(px).save(tmp_path / "a.png")
    rep = run_image_benchmark([(tmp_path / "a.png", tmp_path / "a.png"), (tmp_path / "a.png", tmp_path / "no.png")])
    assert rep.instances[0]["rmse"] == 0.0 and rep.instances[0]["ssim"] == 1.0
    assert len(rep.excluded) == 1
