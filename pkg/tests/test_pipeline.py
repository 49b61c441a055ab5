import json
import socket
import subprocess

import numpy as np
import pytest
from PIL import Image

from scenesmith.fixtures import generate_demo
from scenesmith.model import ScanValidationError
from scenesmith.pipeline import (
    STAGES,
    ConfigError,
    PipelineConfig,
    run_pipeline,
    verify_manifest,
)

from conftest import FIXTURE


def _run(demo, out, cache, **kw):
    return run_pipeline(demo / "scan.json", demo / "assets", demo / "materials", PipelineConfig(), out,
                        demo / "masks", cache_dir=cache, **kw)


def test_shipped_fixture_matches_generator(tmp_path):
    fresh = generate_demo(tmp_path / "gen")
    shipped = sorted(p.relative_to(FIXTURE) for p in FIXTURE.rglob("*") if p.is_file())
    assert shipped == sorted(p.relative_to(fresh) for p in fresh.rglob("*") if p.is_file())
    for rel in shipped:
        a, b = FIXTURE / rel, fresh / rel
        if rel.suffix == ".png":
            assert np.array_equal(np.asarray(Image.open(a)), np.asarray(Image.open(b))), rel
        else:
            assert a.read_bytes() == b.read_bytes(), rel


def test_fixture_run_stable_and_cached(demo, tmp_path):
    r1 = _run(demo, tmp_path / "o1", tmp_path / "c")
    assert [s.name for s in r1.stages] == list(STAGES) and len(STAGES) == 5
    assert not any(s.cached for s in r1.stages)
    r2 = _run(demo, tmp_path / "o2", tmp_path / "c")
    assert all(s.cached for s in r2.stages)
    assert [s.sha256 for s in r1.stages] == [s.sha256 for s in r2.stages]
    assert r1.scene_path.read_bytes() == r2.scene_path.read_bytes()
    assert verify_manifest(r1.manifest_path) == []


def test_fresh_cache_and_offline_replay_identical(demo, tmp_path):
    r1 = _run(demo, tmp_path / "o1", tmp_path / "c1")
    r2 = _run(demo, tmp_path / "o2", tmp_path / "c2")
    assert r1.scene_path.read_bytes() == r2.scene_path.read_bytes()
    r3 = _run(demo, tmp_path / "o3", tmp_path / "c1", offline=True)
    assert r3.scene_path.read_bytes() == r1.scene_path.read_bytes()


def test_changed_material_recomputes_only_downstream(demo, tmp_path):
    _run(demo, tmp_path / "o1", tmp_path / "c")
    mat = next(p for p in sorted((demo / "materials").iterdir()) if (p / "manifest.json").is_file())
    man = json.loads((mat / "manifest.json").read_text())
    man["tags"] = list(man.get("tags", [])) + ["edited"]
    (mat / "manifest.json").write_text(json.dumps(man))
    r = _run(demo, tmp_path / "o2", tmp_path / "c")
    assert {s.name: s.cached for s in r.stages} == {
        "parse": True, "graph": True, "retrieve": True, "paint": False, "assemble": False,
    }


def test_corrupt_scan_fails_fast(demo, tmp_path):
    (demo / "scan.json").write_text('{"walls": [}')
    with pytest.raises(ScanValidationError):
        _run(demo, tmp_path / "o", tmp_path / "c")
    assert list((tmp_path / "o").iterdir()) == []


def test_manifest_detects_tampering(demo, tmp_path):
    r = _run(demo, tmp_path / "o", tmp_path / "c")
    (tmp_path / "o" / "graph.json").write_text("{}")
    assert verify_manifest(r.manifest_path) == ["graph"]


def test_no_network_with_stubs(demo, tmp_path, monkeypatch):
    def refuse(*a, **k):
        raise AssertionError("network access attempted")

    monkeypatch.setattr(socket.socket, "connect", refuse)
    monkeypatch.setattr(socket, "create_connection", refuse)
    r = _run(demo, tmp_path / "o", tmp_path / "c")
    assert r.scene_path.is_file()


def test_scene_contents(demo, tmp_path):
    r = _run(demo, tmp_path / "o", tmp_path / "c")
    scene = json.loads(r.scene_path.read_text())
    pl = {p["id"]: p for p in scene["placements"]}
    assert len(pl) == 8
    assert all(not p["placeholder"] for p in pl.values())
    assert pl["fridge-1"]["joints"], "articulated asset joints must pass through"
    assert pl["chair-1"]["asset_id"] == pl["chair-2"]["asset_id"]
    assert pl["vase-1"]["physics"]["body"] == "active"
    assert {o["kind"] for o in scene["openings"]} == {"door", "window"}
    assert all(o["physics"]["body"] == "passive" for o in scene["openings"])
    assert any(p["materials"] for p in pl.values())


def test_seed_override_changes_config(tmp_path):
    cfg = PipelineConfig().with_seed(7)
    assert set(cfg.seeds.values()) == {7}
    assert PipelineConfig.from_dict(cfg.to_dict()) == cfg


def test_bad_config_rejected(tmp_path):
    with pytest.raises(ConfigError):
        PipelineConfig.from_dict({"provider_endpoint": "not a url"})
    with pytest.raises(ConfigError):
        PipelineConfig.from_dict({"no_such_field": 1})
