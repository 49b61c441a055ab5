from .assets import AssetDatabase, AssetRecord, MaterialSegment, load_asset, read_embeddings, save_asset, write_embeddings
from .cluster import ClusterConfig, cluster_identical, dominant_color, kmeans, select_k, silhouette_score
from .providers import EmbeddingProvider, SelectionOracle, StubEmbeddingProvider, StubOracle
from .rank import (
    RetrievalError,
    RetrievalTrace,
    contextual_select,
    pose_aware_rank,
    retrieve,
    semantic_filter,
    visual_rank,
)

__all__ = [
    "AssetDatabase",
    "AssetRecord",
    "ClusterConfig",
    "EmbeddingProvider",
    "MaterialSegment",
    "RetrievalError",
    "RetrievalTrace",
    "SelectionOracle",
    "StubEmbeddingProvider",
    "StubOracle",
    "cluster_identical",
    "contextual_select",
    "dominant_color",
    "kmeans",
    "load_asset",
    "pose_aware_rank",
    "read_embeddings",
    "retrieve",
    "save_asset",
    "select_k",
    "semantic_filter",
    "silhouette_score",
    "visual_rank",
    "write_embeddings",
]
