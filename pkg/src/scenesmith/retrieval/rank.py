"""Hierarchical asset retrieval: semantic filter -> visual rank -> pose-aware
re-rank -> contextual selection."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Protocol, Sequence

import numpy as np

from ..model import CameraFrame, ObjectNode
from .assets import AssetDatabase, AssetRecord
from .providers import EmbeddingProvider, SelectionOracle

logger = logging.getLogger(__name__)

STAGE2_K = 10
STAGE3_K = 4

SELECT_INSTRUCTION = (
    "Pick the candidate model that best matches the object crops in style, "
    "proportion and visual coherence. Answer with its id."
)


class RetrievalError(RuntimeError):
    pass


class Renderer(Protocol):
    def render(self, asset: AssetRecord, pose: np.ndarray, frame: CameraFrame, bbox_px) -> bytes: ...


@dataclass
class RetrievalTrace:
    object_ids: list[str]
    stage1_pool: list[str]
    stage2_top: list[tuple[str, float]]
    stage3_top: list[tuple[str, float]]
    final: str
    rationale: str = ""
    notes: list[str] = field(default_factory=list)

    def check_chain(self) -> bool:
        pool = set(self.stage1_pool)
        top10 = {i for i, _ in self.stage2_top}
        top4 = {i for i, _ in self.stage3_top}
        return self.final in top4 and top4 <= top10 and top10 <= pool

    def to_dict(self) -> dict:
        return {
            "object_ids": self.object_ids,
            "stage1_pool": self.stage1_pool,
            "stage2_top": [{"id": i, "score": s} for i, s in self.stage2_top],
            "stage3_top": [{"id": i, "score": s} for i, s in self.stage3_top],
            "final": self.final,
            "rationale": self.rationale,
            "notes": self.notes,
        }


def semantic_filter(obj: ObjectNode, db: AssetDatabase) -> list[str]:
    """Ids of assets sharing the object's subcategory, else its category."""
    if obj.subcategory:
        exact = [a.id for a in db if a.category == obj.label and a.subcategory == obj.subcategory]
        if exact:
            return exact
    same = [a.id for a in db if a.category == obj.label]
    if not same:
        raise RetrievalError(f"no assets for category {obj.label}")
    return same


def embed_all(images: Sequence[bytes], provider: EmbeddingProvider, labels: Sequence[str] | None = None) -> np.ndarray:
    rows = []
    for k, img in enumerate(images):
        try:
            rows.append(np.asarray(provider.embed(img), dtype=float))
        except Exception as exc:
            name = labels[k] if labels else str(k)
            raise RetrievalError(f"embedding provider failed on crop {name}: {exc}") from exc
    return np.stack(rows)


def similarity_score(queries: np.ndarray, views: np.ndarray) -> float:
    """Mean over queries of the best cosine similarity against any view."""
    q = queries / np.linalg.norm(queries, axis=1, keepdims=True)
    v = views / np.linalg.norm(views, axis=1, keepdims=True)
    return float(np.mean(np.max(q @ v.T, axis=1)))


def _ranked(scores: dict[str, float], k: int) -> list[tuple[str, float]]:
    return sorted(scores.items(), key=lambda kv: (-kv[1], kv[0]))[:k]


def visual_rank_embeddings(
    queries: np.ndarray, candidates: Sequence[str], db: AssetDatabase, k: int = STAGE2_K
) -> list[tuple[str, float]]:
    if len(queries) == 0:
        raise RetrievalError("visual ranking needs at least one crop")
    if not candidates:
        raise RetrievalError("visual ranking needs at least one candidate")
    scores = {c: similarity_score(queries, db[c].view_embeddings) for c in candidates}
    return _ranked(scores, k)


def visual_rank(
    crops: Sequence[bytes], candidates: Sequence[str], db: AssetDatabase, provider: EmbeddingProvider
) -> list[tuple[str, float]]:
    """Top-10 candidates by mean-over-crops of max-over-views cosine similarity."""
    return visual_rank_embeddings(embed_all(crops, provider), candidates, db)


def object_pose(obj: ObjectNode) -> np.ndarray:
    """World transform placing the asset's canonical frame on the detected box."""
    from ..model import yaw_rotation

    m = np.eye(4)
    m[:3, :3] = yaw_rotation(obj.box.yaw)
    m[:3, 3] = obj.box.center
    return m


def pose_aware_rank(
    obj: ObjectNode,
    top10: list[tuple[str, float]],
    frames: dict[str, CameraFrame],
    db: AssetDatabase,
    provider: EmbeddingProvider,
    renderer: Renderer | None,
    crop_embeddings: np.ndarray | None = None,
    crops: Sequence[bytes] = (),
    notes: list[str] | None = None,
) -> list[tuple[str, float]]:
    """Re-rank the stage-2 shortlist by rendering each candidate in the detected
    pose from the observing cameras and comparing against the real crops."""
    notes = notes if notes is not None else []
    if renderer is None:
        notes.append("pose stage skipped: no renderer configured")
        return top10[:STAGE3_K]
    observing = [c for c in obj.crops if c.frame_id in frames]
    if not observing:
        notes.append("pose stage skipped: no observing frame")
        return top10[:STAGE3_K]
    if crop_embeddings is None:
        crop_embeddings = embed_all(crops, provider)
    pose = object_pose(obj)
    scores = {}
    for asset_id, stage2 in top10:
        asset = db[asset_id]
        try:
            renders = [renderer.render(asset, pose, frames[c.frame_id], c.bbox_px) for c in observing]
            views = embed_all(renders, provider)
            scores[asset_id] = similarity_score(crop_embeddings, views)
        except Exception as exc:
            notes.append(f"render failed for {asset_id}: {exc}; kept stage-2 score")
            scores[asset_id] = stage2
    return _ranked(scores, STAGE3_K)


def contextual_select(
    crops_meta: list[dict],
    top4: list[tuple[str, float]],
    db: AssetDatabase,
    oracle: SelectionOracle,
    notes: list[str] | None = None,
) -> tuple[str, str]:
    """Ask the oracle for the final pick among the shortlisted candidates."""
    if not top4:
        raise RetrievalError("contextual selection needs at least one candidate")
    notes = notes if notes is not None else []
    request = {
        "task": "select_asset",
        "instruction": SELECT_INSTRUCTION,
        "candidates": [
            {
                "id": aid,
                "score": score,
                "images": [v.get("image", "") for v in db[aid].views],
                "metadata": {"category": db[aid].category, "subcategory": db[aid].subcategory},
            }
            for aid, score in top4
        ],
        "object_crops": crops_meta,
    }
    response = oracle.choose(request)
    chosen = response.get("chosen_id")
    ids = [aid for aid, _ in top4]
    if chosen not in ids:
        notes.append(f"oracle returned {chosen!r} outside the shortlist; fell back to stage-3 rank-1")
        return ids[0], str(response.get("rationale", ""))
    return chosen, str(response.get("rationale", ""))


def retrieve(
    members: Sequence[ObjectNode],
    crops: Sequence[bytes],
    crops_meta: list[dict],
    db: AssetDatabase,
    provider: EmbeddingProvider,
    oracle: SelectionOracle,
    frames: dict[str, CameraFrame] | None = None,
    renderer: Renderer | None = None,
) -> RetrievalTrace:
    """Full retrieval for one object or one cluster of identical objects.

    Crops of every member are pooled into a single query set.
    """
    lead = members[0]
    notes: list[str] = []
    if len(members) > 1:
        notes.append(f"joint retrieval for cluster of {len(members)} objects (pooled crops)")
    pool = semantic_filter(lead, db)
    q = embed_all(crops, provider)
    top10 = visual_rank_embeddings(q, pool, db)
    top4 = pose_aware_rank(lead, top10, frames or {}, db, provider, renderer, crop_embeddings=q, notes=notes)
    final, rationale = contextual_select(crops_meta, top4, db, oracle, notes)
    trace = RetrievalTrace(
        object_ids=[m.id for m in members],
        stage1_pool=pool,
        stage2_top=top10,
        stage3_top=top4,
        final=final,
        rationale=rationale,
        notes=notes,
    )
    if not trace.check_chain():
        raise RetrievalError(f"retrieval chain broken for {trace.object_ids}")
    return trace
