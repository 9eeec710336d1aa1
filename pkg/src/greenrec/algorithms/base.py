from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Any, ClassVar

import numpy as np
import scipy.sparse as sp

from ..ingest import Dataset

MODEL_FORMAT_VERSION = 1


class UnsupportedCombination(ValueError):
    """Algorithm cannot run on this kind of feedback."""


@dataclass(frozen=True, eq=False)
class TrainData:
    """Training interactions in dense index space.

    ``ratings`` is all ones for implicit feedback.
    """

    users: np.ndarray
    items: np.ndarray
    ratings: np.ndarray
    n_users: int
    n_items: int
    explicit: bool

    @classmethod
    def from_rows(cls, d: Dataset, rows: np.ndarray | None = None) -> "TrainData":
        rows = np.arange(d.n_interactions) if rows is None else np.asarray(rows)
        ratings = d.ratings[rows] if d.ratings is not None else np.ones(rows.size)
        return cls(
            users=d.users[rows],
            items=d.items[rows],
            ratings=np.asarray(ratings, dtype=np.float64),
            n_users=d.n_users,
            n_items=d.n_items,
            explicit=d.explicit,
        )

    def __len__(self) -> int:
        return int(self.users.shape[0])

    @cached_property
    def matrix(self) -> sp.csr_matrix:
        """User x item rating matrix (duplicates summed)."""
        m = sp.csr_matrix(
            (self.ratings, (self.users, self.items)), shape=(self.n_users, self.n_items)
        )
        m.sum_duplicates()
        return m

    @cached_property
    def binary(self) -> sp.csr_matrix:
        m = self.matrix.copy()
        m.data[:] = 1.0
        return m


@dataclass(frozen=True)
class RecommenderSpec:
    kind: str
    hyperparams: dict[str, Any] = field(default_factory=dict)
    seed: int = 0


@dataclass(frozen=True, eq=False)
class RankedList:
    user: int
    items: np.ndarray

    def __len__(self) -> int:
        return len(self.items)


class Recommender:
    """Train/score interface shared by every algorithm.

    Subclasses set the class attributes, implement ``_fit`` and
    ``_score_known``, and list learned arrays in ``state_fields``.
    """

    kind: ClassVar[str] = ""
    defaults: ClassVar[dict[str, Any]] = {}
    grid: ClassVar[dict[str, list]] = {}
    requires_explicit: ClassVar[bool] = False
    state_fields: ClassVar[tuple[str, ...]] = ()
    # hyperparameters that measure model size, used for tie-breaking in tuning
    size_params: ClassVar[tuple[str, ...]] = ()

    _base_fields = ("item_counts", "known", "seen_indptr", "seen_indices")

    def __init__(self, hyperparams: dict[str, Any] | None = None, seed: int = 0):
        hyperparams = dict(hyperparams or {})
        unknown = set(hyperparams) - set(self.defaults)
        if unknown:
            raise ValueError(f"{self.kind}: unknown hyperparameters {sorted(unknown)}")
        self.hyperparams = {**self.defaults, **hyperparams}
        self.seed = int(seed)
        self.n_users = 0
        self.n_items = 0

    def __repr__(self) -> str:
        return f"{type(self).__name__}({self.hyperparams}, seed={self.seed})"

    @property
    def hp(self) -> dict[str, Any]:
        return self.hyperparams

    # training -------------------------------------------------------------

    def fit(self, train: TrainData, catalog: int | None = None) -> "Recommender":
        if len(train) == 0:
            raise ValueError("empty training set")
        if self.requires_explicit and not train.explicit:
            raise UnsupportedCombination(f"{self.kind} needs explicit ratings")
        if catalog is not None and catalog != train.n_items:
            if catalog < train.n_items:
                raise ValueError("catalog smaller than the training item universe")
            train = TrainData(
                train.users, train.items, train.ratings, train.n_users, catalog, train.explicit
            )
        self.n_users, self.n_items = train.n_users, train.n_items
        binary = train.binary
        self.item_counts = np.asarray(binary.sum(axis=0)).ravel()
        self.known = np.diff(binary.indptr) > 0
        self.seen_indptr = binary.indptr.astype(np.int64)
        self.seen_indices = binary.indices.astype(np.int64)
        self._fit(train)
        return self

    def _fit(self, train: TrainData) -> None:
        raise NotImplementedError

    # scoring --------------------------------------------------------------

    def seen(self, user: int) -> np.ndarray:
        if not 0 <= user < self.n_users:
            return np.empty(0, dtype=np.int64)
        return self.seen_indices[self.seen_indptr[user] : self.seen_indptr[user + 1]]

    def is_known(self, user: int) -> bool:
        return 0 <= user < self.n_users and bool(self.known[user])

    def score_users(self, users) -> np.ndarray:
        """Score matrix of shape (len(users), n_items)."""
        users = np.atleast_1d(np.asarray(users, dtype=np.int64))
        out = np.empty((users.size, self.n_items))
        known = (users >= 0) & (users < self.n_users)
        known[known] = self.known[users[known]]
        if known.any():
            out[known] = self._score_known(users[known])
        if not known.all():
            out[~known] = self._fallback()
        return out

    def _score_known(self, users: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def _fallback(self) -> np.ndarray:
        return self.item_counts.astype(np.float64)

    # persistence ----------------------------------------------------------

    def state(self) -> dict[str, np.ndarray]:
        return {k: getattr(self, k) for k in self._base_fields + self.state_fields}


def _coerce_exclude(exclude, n_items: int) -> np.ndarray:
    mask = np.zeros(n_items, dtype=bool)
    if exclude is not None:
        idx = np.fromiter(exclude, dtype=np.int64) if not isinstance(exclude, np.ndarray) else exclude
        if idx.dtype == bool:
            return idx.copy()
        mask[idx] = True
    return mask


def top_k(scores: np.ndarray, k: int, excluded: np.ndarray | None = None) -> np.ndarray:
    """Indices of the k best scores, descending; ties by ascending index."""
    if k < 1:
        raise ValueError("k must be >= 1")
    idx = np.arange(scores.size) if excluded is None else np.flatnonzero(~excluded)
    vals = scores[idx]
    if idx.size > k:
        kth = np.partition(-vals, k - 1)[k - 1]
        above = -vals < kth
        need = k - int(above.sum())
        ties = np.flatnonzero(-vals == kth)[:need]
        keep = np.sort(np.concatenate([np.flatnonzero(above), ties]))
        idx, vals = idx[keep], vals[keep]
    return idx[np.argsort(-vals, kind="stable")]


def recommend_top_k(model: Recommender, user: int, k: int = 10, exclude=None) -> RankedList:
    """Top-k catalog items for ``user`` outside ``exclude``."""
    scores = model.score_users([user])[0]
    return RankedList(int(user), top_k(scores, k, _coerce_exclude(exclude, model.n_items)))


def score(model: Recommender, user: int, item: int) -> float:
    if not 0 <= item < model.n_items:
        raise KeyError(f"item {item} not in catalog of {model.n_items} items")
    return float(model.score_users([user])[0, item])


def save_model(model: Recommender, path: str | Path) -> None:
    """Write a model as an ``.npz`` archive with a JSON header."""
    meta = {
        "format_version": MODEL_FORMAT_VERSION,
        "kind": model.kind,
        "hyperparams": model.hyperparams,
        "seed": model.seed,
        "n_users": model.n_users,
        "n_items": model.n_items,
    }
    arrays = {f"state__{k}": np.asarray(v) for k, v in model.state().items()}
    with open(path, "wb") as fh:
        np.savez_compressed(fh, __meta__=np.array(json.dumps(meta)), **arrays)


def load_model(path: str | Path) -> Recommender:
    from . import REGISTRY

    with np.load(path, allow_pickle=False) as z:
        meta = json.loads(str(z["__meta__"]))
        if meta["format_version"] != MODEL_FORMAT_VERSION:
            raise ValueError(f"unsupported model format {meta['format_version']}")
        model = REGISTRY[meta["kind"]](meta["hyperparams"], meta["seed"])
        model.n_users, model.n_items = meta["n_users"], meta["n_items"]
        for key in z.files:
            if key.startswith("state__"):
                value = z[key]
                setattr(model, key[len("state__"):], value.item() if value.ndim == 0 else value)
    return model
