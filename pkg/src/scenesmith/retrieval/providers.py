"""Embedding providers and selection oracles.

Real encoders and multimodal language models sit behind these two small
interfaces.  The stubs here are deterministic and offline; networked
implementations live in :mod:`scenesmith.services`.

Every oracle request is a JSON-compatible dict with a ``task`` key; the
response is a dict.  Tasks understood by :class:`StubOracle`:

``select_asset``       candidates ranked best-first -> ``chosen_id``
``map_segments``       segments + ranked patches -> ``mapping``
``material_category``  scored materials -> ``category`` and ``candidates``
``confirm_material``   ranked materials -> ``chosen_id``
``target_rgb``         patches with ``mean_rgb`` -> ``rgb`` per patch
``patch_validity``     patches -> ``valid`` flags
``mass``               category + box volume -> ``mass_kg``
"""

from __future__ import annotations

import hashlib
from typing import Protocol

import numpy as np


class EmbeddingProvider(Protocol):
    model_tag: str

    def embed(self, image: bytes) -> np.ndarray: ...


class SelectionOracle(Protocol):
    def choose(self, request: dict) -> dict: ...


class StubEmbeddingProvider:
    """Seeded hash of the image bytes mapped to a pseudo-random unit vector."""

    def __init__(self, dim: int = 64, seed: int = 0, model_tag: str = "stub-hash"):
        self.dim = dim
        self.seed = seed
        self.model_tag = model_tag

    def embed(self, image: bytes) -> np.ndarray:
        digest = hashlib.sha256(self.seed.to_bytes(8, "little") + bytes(image)).digest()
        rng = np.random.Generator(np.random.PCG64(int.from_bytes(digest[:16], "little")))
        v = rng.standard_normal(self.dim)
        return v / np.linalg.norm(v)


DEFAULT_DENSITIES = {
    # kg per m^3 of detected bounding box
    "sofa": 60.0,
    "bed": 80.0,
    "chair": 60.0,
    "table": 70.0,
    "storage": 120.0,
    "refrigerator": 180.0,
    "oven": 300.0,
    "stove": 300.0,
    "washer-dryer": 220.0,
    "toilet": 250.0,
    "sink": 200.0,
    "bathtub": 150.0,
    "wall": 1800.0,
    "floor": 2000.0,
}


class StubOracle:
    """Deterministic stand-in for the multimodal language model."""

    def __init__(self, densities: dict | None = None, default_density: float = 150.0):
        self.densities = dict(DEFAULT_DENSITIES if densities is None else densities)
        self.default_density = default_density

    def choose(self, request: dict) -> dict:
        task = request.get("task")
        handler = getattr(self, f"_{task}", None)
        if handler is None:
            raise ValueError(f"stub oracle: unknown task {task!r}")
        return handler(request)

    def _select_asset(self, req):
        cands = req["candidates"]
        best = min(cands, key=lambda c: (-c.get("score", 0.0), c["id"]))
        return {"chosen_id": best["id"], "rationale": "stub: highest embedding similarity"}

    def _map_segments(self, req):
        first = req["patches"][0]["id"]
        return {"mapping": {s["id"]: first for s in req["segments"]}, "rationale": "stub: top-ranked patch"}

    def _material_category(self, req):
        mats = sorted(req["materials"], key=lambda m: (-m["score"], m["id"]))
        category = mats[0]["category"]
        top = [m["id"] for m in mats if m["category"] == category][:10]
        return {"category": category, "candidates": top}

    def _confirm_material(self, req):
        return {"chosen_id": req["candidates"][0]["id"], "rationale": "stub: best embedding match"}

    def _target_rgb(self, req):
        return {"rgb": [list(p["mean_rgb"]) for p in req["patches"]]}

    def _patch_validity(self, req):
        return {"valid": [True] * len(req["patches"])}

    def _mass(self, req):
        density = self.densities.get(req["category"], self.default_density)
        return {"mass_kg": density * float(req["volume"])}
