"""Recommender algorithms behind one train/score/recommend interface."""

from __future__ import annotations

from .base import (
    RankedList,
    Recommender,
    RecommenderSpec,
    TrainData,
    UnsupportedCombination,
    load_model,
    recommend_top_k,
    save_model,
    score,
    top_k,
)
from .baselines import Bias, Popularity, RandomRecommender
from .knn import ItemKNN, UserKNN
from .mf import BiasedMF, FunkSVD
from .nmf import NMF
from .svd import SVD

REGISTRY: dict[str, type[Recommender]] = {
    cls.kind: cls
    for cls in (RandomRecommender, Popularity, Bias, UserKNN, ItemKNN, FunkSVD, BiasedMF, SVD, NMF)
}
ALIASES = {"popular": "Popularity"}
KINDS = tuple(REGISTRY)

# kinds that refuse implicit feedback
EXPLICIT_ONLY = tuple(k for k, cls in REGISTRY.items() if cls.requires_explicit)


def resolve_kind(kind: str) -> type[Recommender]:
    kind = ALIASES.get(kind.lower(), kind)
    for name, cls in REGISTRY.items():
        if name.lower() == kind.lower():
            return cls
    raise KeyError(f"unknown algorithm {kind!r}; known: {', '.join(REGISTRY)}")


def build(spec: RecommenderSpec) -> Recommender:
    return resolve_kind(spec.kind)(spec.hyperparams, spec.seed)


def train(spec: RecommenderSpec, data: TrainData, catalog: int | None = None) -> Recommender:
    """Fit the algorithm described by ``spec`` on ``data``."""
    return build(spec).fit(data, catalog)


__all__ = [
    "ALIASES",
    "EXPLICIT_ONLY",
    "KINDS",
    "REGISTRY",
    "Bias",
    "BiasedMF",
    "FunkSVD",
    "ItemKNN",
    "NMF",
    "Popularity",
    "RandomRecommender",
    "RankedList",
    "Recommender",
    "RecommenderSpec",
    "SVD",
    "TrainData",
    "UnsupportedCombination",
    "UserKNN",
    "build",
    "load_model",
    "recommend_top_k",
    "resolve_kind",
    "save_model",
    "score",
    "top_k",
    "train",
]
