"""Duplicate handling and bipartite k-core pruning."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .ingest import Dataset, DatasetStats, compute_stats


@dataclass(frozen=True)
class PruneConfig:
    k: int = 10

    def __post_init__(self):
        if int(self.k) != self.k or self.k < 1:
            raise ValueError(f"core threshold must be an integer >= 1, got {self.k!r}")


@dataclass(frozen=True)
class PreprocessReport:
    duplicates_removed: int
    pairs_averaged: int
    kcore_rounds: int
    before: DatasetStats
    after: DatasetStats

    def to_dict(self) -> dict:
        return asdict(self)


def _first_rows(keys: np.ndarray) -> np.ndarray:
    """Sorted row indices of the first occurrence of each distinct key row."""
    if keys.shape[0] == 0:
        return np.empty(0, dtype=np.int64)
    _, first = np.unique(keys, axis=0, return_index=True)
    return np.sort(first)


def dedup_exact(d: Dataset) -> tuple[Dataset, int]:
    """Drop repeated (user, item, rating) rows, keeping the first copy."""
    cols = [d.users.astype(np.float64), d.items.astype(np.float64)]
    if d.ratings is not None:
        cols.append(d.ratings)
    keep = _first_rows(np.column_stack(cols) if cols[0].size else np.empty((0, len(cols))))
    removed = d.n_interactions - keep.size
    if removed == 0:
        return d, 0
    return d.take(keep), removed


def average_duplicate_pairs(d: Dataset) -> tuple[Dataset, int]:
    """Collapse each (user, item) pair to one row holding the mean rating.

    The merged row sits at the pair's first position and keeps the latest
    timestamp. Implicit data is returned unchanged.
    """
    if d.ratings is None or d.n_interactions == 0:
        return d, 0
    pair = d.users * d.n_items + d.items
    uniq, first, inverse, counts = np.unique(
        pair, return_index=True, return_inverse=True, return_counts=True
    )
    merged = int((counts > 1).sum())
    if merged == 0:
        return d, 0
    means = np.bincount(inverse, weights=d.ratings) / counts
    keep = np.sort(first)
    slot = np.searchsorted(uniq, pair[keep])
    ratings = means[slot]
    stamps = None
    if d.timestamps is not None:
        latest = np.full(uniq.size, np.iinfo(np.int64).min)
        np.maximum.at(latest, inverse, d.timestamps)
        stamps = latest[slot]
    out = d.take(keep)
    return (
        Dataset(
            name=out.name,
            feedback=out.feedback,
            users=out.users.copy(),
            items=out.items.copy(),
            ratings=ratings,
            timestamps=stamps,
            user_ids=out.user_ids,
            item_ids=out.item_ids,
        ),
        merged,
    )


def kcore_mask(users: np.ndarray, items: np.ndarray, k: int) -> tuple[np.ndarray, int]:
    """Rows surviving simultaneous peeling, and the number of peeling rounds."""
    alive = np.ones(users.shape[0], dtype=bool)
    n_u = int(users.max()) + 1 if users.size else 0
    n_i = int(items.max()) + 1 if items.size else 0
    rounds = 0
    while True:
        rounds += 1
        u_deg = np.bincount(users[alive], minlength=n_u)
        i_deg = np.bincount(items[alive], minlength=n_i)
        bad = alive & ((u_deg[users] < k) | (i_deg[items] < k))
        if not bad.any():
            return alive, rounds
        alive &= ~bad


def kcore_prune(d: Dataset, cfg: PruneConfig | int) -> tuple[Dataset, int]:
    """Maximal subgraph where every user and item has at least k interactions."""
    if not isinstance(cfg, PruneConfig):
        cfg = PruneConfig(cfg)
    alive, rounds = kcore_mask(d.users, d.items, cfg.k)
    if alive.all():
        return d, rounds
    return d.take(alive), rounds


def preprocess(d: Dataset, cfg: PruneConfig | int) -> tuple[Dataset, PreprocessReport]:
    """dedup -> pair averaging -> k-core, in that order."""
    before = compute_stats(d)
    d, removed = dedup_exact(d)
    d, averaged = average_duplicate_pairs(d)
    d, rounds = kcore_prune(d, cfg)
    return d, PreprocessReport(removed, averaged, rounds, before, compute_stats(d))
