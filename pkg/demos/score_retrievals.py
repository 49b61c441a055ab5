"""Score CAD retrievals with the L1 chamfer benchmark, then compare two images.

Run:  python3 demos/score_retrievals.py
"""

from scenesmith.evalbench import box_mesh, run_image_benchmark, run_similarity_benchmark
from scenesmith.fixtures import texture
from scenesmith.pipeline import png_bytes

import tempfile
from pathlib import Path

cube = box_mesh((1, 1, 1), mesh_id="cube")
slab = box_mesh((1.2, 0.1, 0.8), mesh_id="slab")
tall = box_mesh((0.4, 1.8, 0.4), mesh_id="cabinet")
pairs = [
    (cube, cube, "table"),  # perfect retrieval
    (cube, slab, "table"),  # wrong proportions
    (tall, tall, "cabinet"),
    (tall, cube, "cabinet"),
]
report = run_similarity_benchmark(pairs, n=5000, seed=0)
print(report.to_markdown(), end="")
print(f"global mean equals count-weighted category mean: {report.check_aggregation()}\n")

with tempfile.TemporaryDirectory() as tmp:
    a, b = Path(tmp) / "a.png", Path(tmp) / "b.png"
    a.write_bytes(png_bytes(texture("oak", 64, 64)))
    b.write_bytes(png_bytes(texture("oak", 64, 64, color=(150, 90, 60))))
    print(run_image_benchmark([(str(a), str(a)), (str(a), str(b))]).to_markdown(), end="")
