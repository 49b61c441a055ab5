import itertools

import numpy as np
import pytest
from skimage import color as skcolor

from scenesmith.material import (
    AlbedoMap,
    MaskInput,
    MaterialDatabase,
    MaterialError,
    MaterialRecord,
    NoUsablePatches,
    ShiftSpec,
    albedo_shift,
    extract_patches,
    infer_target_color,
    lab_to_srgb,
    largest_rectangle,
    map_segments_to_patches,
    save_material,
    search_material,
    srgb_to_lab,
)
from scenesmith.material.search import MaskPatch
from scenesmith.retrieval import AssetRecord, MaterialSegment, StubEmbeddingProvider, StubOracle


def brute_rect_area(mask):
    m = np.asarray(mask, dtype=bool)
    h, w = m.shape
    s = np.zeros((h + 1, w + 1), dtype=int)
    s[1:, 1:] = m.cumsum(0).cumsum(1)
    best = 0
    for y0, y1 in itertools.combinations(range(h + 1), 2):
        for x0, x1 in itertools.combinations(range(w + 1), 2):
            area = (y1 - y0) * (x1 - x0)
            if area > best and s[y1, x1] - s[y0, x1] - s[y1, x0] + s[y0, x0] == area:
                best = area
    return best


def _check_rect(mask, rect):
    x, y, w, h = rect
    assert np.asarray(mask, bool)[y : y + h, x : x + w].all()


def test_full_frame_rect():
    assert largest_rectangle(np.ones((80, 100), bool)) == (0, 0, 100, 80)


def test_l_shape_rect():
    m = np.zeros((40, 40), bool)
    m[0:30, 0:10] = True  # vertical arm 10 wide, 30 tall
    m[30:40, 0:30] = True  # horizontal arm 30 wide, 10 tall
    rect = largest_rectangle(m)
    _check_rect(m, rect)
    assert rect[2] * rect[3] == brute_rect_area(m) == 400  # shared 10-wide column spans all 40 rows


def test_l_shape_disjoint_arms():
    m = np.zeros((40, 40), bool)
    m[0:30, 0:10] = True
    m[35:45, 10:40] = True
    rect = largest_rectangle(m)
    assert rect[2] * rect[3] == brute_rect_area(m) == 300


def test_random_masks_match_exhaustive(rng):
    for _ in range(60):
        h, w = rng.integers(1, 13, 2)
        m = rng.random((h, w)) < rng.uniform(0.3, 0.95)
        rect = largest_rectangle(m)
        if rect[2] * rect[3]:
            _check_rect(m, rect)
        assert rect[2] * rect[3] == brute_rect_area(m)


def test_smooth_patch_ranks_first():
    rng = np.random.Generator(np.random.PCG64(0))
    mask = np.ones((32, 32), bool)
    flat = np.full((32, 32, 3), 128, np.uint8)
    noisy = rng.integers(0, 256, (32, 32, 3), dtype=np.uint8)
    out = extract_patches([MaskInput("noisy", mask, noisy), MaskInput("flat", mask, flat)], k=2)
    assert [p.frame_id for p in out] == ["flat", "noisy"]
    assert out[0].area_px == out[1].area_px == 1024


def test_tiny_masks_give_no_patches():
    with pytest.raises(NoUsablePatches):
        extract_patches([MaskInput("f", np.ones((4, 4), bool))])


def _patch(pid, rgb=(128, 128, 128), size=20):
    px = np.zeros((size, size, 3), np.uint8) + np.asarray(rgb, np.uint8)
    return MaskPatch(pid, pid, np.ones((size, size), bool), (0, 0, size, size), 0.0, size * size, px)


def _asset_with_segments(n):
    v = np.zeros((1, 4))
    v[0, 0] = 1
    segs = [MaterialSegment(f"s{i}", (i, i + 1)) for i in range(n)]
    return AssetRecord("a", "chair", "", "m.obj", v, material_segments=segs, triangle_count=n)


def test_single_segment_single_patch_bypasses_oracle():
    class Boom:
        def choose(self, req):
            raise AssertionError("oracle must not be called")

    mapping, flags = map_segments_to_patches(_asset_with_segments(1), [_patch("p")], Boom())
    assert mapping == {"s0": "p"} and flags == []


def test_stub_maps_all_to_first_patch():
    mapping, _ = map_segments_to_patches(_asset_with_segments(3), [_patch("p1"), _patch("p2")], StubOracle())
    assert mapping == {"s0": "p1", "s1": "p1", "s2": "p1"}


def test_scripted_mapping_and_defaults():
    asset = AssetRecord("a", "chair", "", "m.obj", np.eye(1, 4),
                        material_segments=[MaterialSegment("seat", (0, 2)), MaterialSegment("legs", (2, 4)),
                                           MaterialSegment("trim", (4, 5))], triangle_count=5)

    class Script:
        def choose(self, req):
            return {"mapping": {"seat": "fabric", "legs": "wood", "trim": "nope"}}

    mapping, flags = map_segments_to_patches(asset, [_patch("wood"), _patch("fabric")], Script())
    assert mapping == {"seat": "fabric", "legs": "wood", "trim": "wood"}
    assert len(flags) == 1 and "trim" in flags[0]


class ConstProvider:
    def __init__(self, v):
        self.v = np.asarray(v, float)
        self.model_tag = "const"

    def embed(self, image):
        return self.v


def _mat(mid, cat, emb):
    emb = np.asarray(emb, float)
    return MaterialRecord(mid, cat, "albedo.png", emb / np.linalg.norm(emb))


def test_singleton_db():
    db = MaterialDatabase([_mat("only", "wood", [1, 0, 0])])
    rec, tr = search_material([_patch("p")], db, ConstProvider([0, 1, 0]), StubOracle())
    assert rec.id == "only" and tr.check_chain()


def test_planted_identical_embedding_first():
    rng = np.random.Generator(np.random.PCG64(2))
    q = rng.normal(size=8)
    mats = [_mat(f"m{i}", "wood", rng.normal(size=8)) for i in range(6)] + [_mat("twin", "wood", q)]
    rec, tr = search_material([_patch("p")], MaterialDatabase(mats), ConstProvider(q / np.linalg.norm(q)), StubOracle())
    assert tr.stage_b[0] == ("twin", pytest.approx(1.0, abs=1e-12))
    assert rec.id == "twin"


def test_scripted_wood_three_stage_trace():
    emb = {
        "oak": [0.9, 0.1, 0.0, 0.1], "pine": [0.5, 0.5, 0.2, 0.0], "walnut": [0.7, 0.0, 0.7, 0.1],
        "teak": [0.1, 0.9, 0.1, 0.3], "steel": [1.0, 0.0, 0.0, 0.0], "linen": [0.0, 0.0, 1.0, 0.0],
    }
    cats = {"oak": "wood", "pine": "wood", "walnut": "wood", "teak": "wood", "steel": "metal", "linen": "fabric"}
    db = MaterialDatabase([_mat(k, cats[k], v) for k, v in emb.items()])
    query = np.array([0.8, 0.3, 0.4, 0.0])
    query /= np.linalg.norm(query)

    class Script(StubOracle):
        def _material_category(self, req):
            return {"category": "wood", "candidates": ["teak", "pine", "oak", "walnut"]}

    rec, tr = search_material([_patch("p")], db, ConstProvider(query), Script())
    scores = {k: float(np.dot(query, np.asarray(v) / np.linalg.norm(v))) for k, v in emb.items() if cats[k] == "wood"}
    top3 = sorted(scores, key=lambda k: (-scores[k], k))[:3]
    assert [i for i, _ in tr.stage_b] == top3
    assert rec.id == top3[0] and tr.final == top3[0]
    assert set(tr.stage_a) == set(scores) and tr.check_chain()


def test_unknown_category_falls_back_to_full_db():
    db = MaterialDatabase([_mat("a", "wood", [1, 0]), _mat("b", "metal", [0, 1])])

    class Odd(StubOracle):
        def _material_category(self, req):
            return {"category": "plasma", "candidates": []}

    rec, tr = search_material([_patch("p")], db, ConstProvider([0.1, 1]), Odd())
    assert rec.id == "b" and "fell back" in tr.flags[0]


def test_material_record_requires_unit_embedding():
    with pytest.raises(MaterialError):
        MaterialRecord("x", "wood", "a.png", np.array([1.0, 1.0]))


def test_material_db_round_trip(tmp_path):
    rec = _mat("oak", "wood", [1, 2, 3])
    save_material(tmp_path / "oak", rec)
    back = MaterialDatabase.load(tmp_path)["oak"]
    assert back.manifest() == rec.manifest()
    assert np.allclose(back.embedding, rec.embedding, atol=1e-6)


def test_zero_shift_identity_exact():
    rng = np.random.Generator(np.random.PCG64(4))
    lab = np.stack([rng.uniform(20, 80, (6, 5)), rng.uniform(-20, 20, (6, 5)), rng.uniform(-20, 20, (6, 5))], -1)
    alb = AlbedoMap(lab)
    out = albedo_shift(alb, ShiftSpec(tuple(alb.mean())))
    assert out.albedo.lab.tobytes() == alb.lab.tobytes()
    assert np.abs(alb.lab - lab).max() <= 2.0**-33  # grid snap at construction


def test_constant_gray_to_target():
    lab = np.zeros((4, 4, 3))
    lab[..., 0] = 50
    out = albedo_shift(AlbedoMap(lab), ShiftSpec((60, 5, -5)))
    assert np.array_equal(out.albedo.lab, np.broadcast_to([60.0, 5.0, -5.0], lab.shape))


def test_four_pixel_hand_example():
    lab = np.array([[[40, 0, 0], [60, 0, 0]], [[50, 10, 0], [50, -10, 0]]], float)
    out = albedo_shift(AlbedoMap(lab), ShiftSpec((55, 2, 3)))
    assert np.array_equal(out.albedo.lab, lab + [5, 2, 3])
    assert np.array_equal(out.albedo.mean(), [55.0, 2.0, 3.0])
    assert out.clamped_fraction == 0.0


def test_clamping_reported():
    lab = np.array([[[5.0, 0, 0], [95.0, 0, 0]]])
    out = albedo_shift(AlbedoMap(lab), ShiftSpec((90, 0, 0)))
    assert out.clamped_fraction == 0.5
    assert out.albedo.lab[..., 0].max() == 100.0
    assert out.unclamped.reshape(-1, 3).mean(axis=0)[0] == pytest.approx(90.0, abs=1e-12)


def test_shift_idempotent_in_target():
    rng = np.random.Generator(np.random.PCG64(8))
    lab = np.stack([rng.uniform(30, 70, (5, 5)), rng.uniform(-10, 10, (5, 5)), rng.uniform(-10, 10, (5, 5))], -1)
    spec = ShiftSpec((45.0, 3.0, -2.0))
    once = albedo_shift(AlbedoMap(lab), spec).albedo
    twice = albedo_shift(once, spec).albedo
    assert np.allclose(twice.lab, once.lab, atol=1e-12)


def test_target_bounds_checked():
    with pytest.raises(ValueError):
        ShiftSpec((101.0, 0, 0))


def test_lab_matches_skimage(rng):
    rgb = rng.random((500, 3))
    assert np.allclose(srgb_to_lab(rgb), skcolor.rgb2lab(rgb[None])[0], atol=0.01)


def test_red_reference():
    assert np.allclose(srgb_to_lab(np.array([1.0, 0, 0])), [53.2408, 80.0925, 67.2032], atol=1e-3)


def test_lab_round_trip(rng):
    rgb = rng.random((1000, 3))
    assert np.allclose(lab_to_srgb(srgb_to_lab(rgb)), rgb, atol=1e-9)


def test_target_color_red_patch():
    lab, flags = infer_target_color([_patch("p", (255, 0, 0))], StubOracle())
    assert np.allclose(lab, skcolor.rgb2lab(np.array([[[1.0, 0, 0]]]))[0, 0], atol=0.01)
    assert flags == []


def test_target_color_median():
    class Script:
        def choose(self, req):
            return {"rgb": [[10, 10, 10], [20, 20, 20], [200, 200, 200]]}

    lab, _ = infer_target_color([_patch("a"), _patch("b"), _patch("c")], Script())
    assert np.allclose(lab, srgb_to_lab(np.array([20, 20, 20], np.uint8)), atol=1e-12)


def test_target_color_needs_patches():
    with pytest.raises(MaterialError):
        infer_target_color([], StubOracle())


def test_target_color_clamps_oracle_rgb():
    class Wild:
        def choose(self, req):
            return {"rgb": [[300, -5, 20]]}

    lab, flags = infer_target_color([_patch("a")], Wild())
    assert flags and np.allclose(lab, srgb_to_lab(np.array([1.0, 0.0, 20 / 255])), atol=1e-12)
