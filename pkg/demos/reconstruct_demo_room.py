"""Reconstruct the bundled two-room scan end to end and summarize the result.

Run:  python3 demos/reconstruct_demo_room.py
"""

import json
import tempfile
from pathlib import Path

from scenesmith.fixtures import generate_demo
from scenesmith.pipeline import PipelineConfig, run_pipeline

with tempfile.TemporaryDirectory() as tmp:
    tmp = Path(tmp)
    demo = generate_demo(tmp / "demo")
    cfg = PipelineConfig()
    for attempt in ("first run", "second run (cache hits)"):
        res = run_pipeline(demo / "scan.json", demo / "assets", demo / "materials", cfg,
                           tmp / "out", demo / "masks", cache_dir=tmp / "cache")
        print(f"-- {attempt}")
        for st in res.stages:
            print(f"   {st.name:9s} {'cached' if st.cached else 'ran':6s} {st.seconds:6.3f}s")

    scene = json.loads(res.scene_path.read_text())
    print(f"\n{len(scene['rooms'])} room(s), {len(scene['placements'])} placements")
    for p in scene["placements"]:
        mats = sorted({m["material_id"] for m in p["materials"].values()})
        print(f"   {p['id']:12s} {p['label']:13s} -> {str(p['asset_id']):16s} {p['physics']['body']:8s} {', '.join(mats)}")
