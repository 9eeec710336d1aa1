"""nDCG@k evaluation and the aggregations behind portion curves and heat maps."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Collection, Iterable, Mapping, Sequence

import numpy as np
import pandas as pd

from .algorithms import RankedList, Recommender, top_k
from .sampling import SplitBundle

log = logging.getLogger(__name__)

ALGORITHM_GROUPS = {
    "group1": ("UserKNN", "ItemKNN", "SVD", "NMF"),
    "group2": ("FunkSVD", "Bias", "Popularity", "BiasedMF"),
}
DATASET_GROUPS = ("MovieLens", "Amazon", "Gowalla")


class EvaluationError(RuntimeError):
    pass


@dataclass(frozen=True)
class MetricRecord:
    dataset: str
    algorithm: str
    method: str
    portion: float
    seed: int
    ndcg_at_10: float
    runtime_s: float
    n_eval_users: int
    hyperparams: str = "{}"

    def __post_init__(self):
        if not 0.0 <= self.ndcg_at_10 <= 1.0:
            raise ValueError(f"nDCG out of range: {self.ndcg_at_10}")
        if not 0.0 < self.portion <= 1.0:
            raise ValueError(f"portion out of range: {self.portion}")
        if self.runtime_s < 0:
            raise ValueError("negative runtime")

    @property
    def cell(self) -> tuple:
        return (self.dataset, self.algorithm, self.method, self.portion, self.seed)


RECORD_COLUMNS = tuple(f.name for f in fields(MetricRecord))


def records_frame(records: Iterable[MetricRecord]) -> pd.DataFrame:
    return pd.DataFrame([asdict(r) for r in records], columns=list(RECORD_COLUMNS))


def write_records(records: Iterable[MetricRecord], path: str | Path, columns=RECORD_COLUMNS) -> None:
    """Delimited text, fixed column order, rows sorted by cell key."""
    rows = sorted(records, key=lambda r: (r.cell, r.hyperparams))
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            d = asdict(r)
            w.writerow([_fmt(d[c]) for c in columns])


def _fmt(v) -> str:
    return repr(v) if isinstance(v, float) else str(v)


# metric ---------------------------------------------------------------------


def dcg_discounts(n: int) -> np.ndarray:
    return 1.0 / np.log2(np.arange(2, n + 2))


def ndcg_at_k(ranked: RankedList | Sequence[int], relevant: Collection[int], k: int = 10) -> float:
    """Binary-relevance nDCG over the top ``k`` ranked items."""
    if k < 1:
        raise ValueError("k must be >= 1")
    relevant = set(int(i) for i in relevant)
    if not relevant:
        raise ValueError("nDCG needs at least one relevant item")
    items = ranked.items if isinstance(ranked, RankedList) else ranked
    top = list(items)[:k]
    gains = np.array([1.0 if int(i) in relevant else 0.0 for i in top])
    dcg = float(gains @ dcg_discounts(len(top))) if len(top) else 0.0
    idcg = float(dcg_discounts(min(k, len(relevant))).sum())
    return dcg / idcg


def _group_items(users: np.ndarray, items: np.ndarray) -> dict[int, np.ndarray]:
    order = np.lexsort((items, users))
    u, i = users[order], items[order]
    cuts = np.flatnonzero(np.diff(u)) + 1
    return {int(g[0]): iv for g, iv in zip(np.split(u, cuts), np.split(i, cuts)) if g.size}


def evaluate_bundle(
    model: Recommender,
    bundle: SplitBundle,
    k: int = 10,
    target: str = "test",
    exclude_validation: bool = False,
    batch: int = 256,
) -> tuple[float, int]:
    """Mean per-user nDCG@k on the bundle's test (or validation) rows.

    Each user's candidates are the catalog minus their training items.
    """
    d = bundle.dataset
    if d is None:
        raise EvaluationError("bundle carries no dataset")
    rows = {"test": bundle.test, "val": bundle.val}[target]
    relevant = _group_items(d.users[rows], d.items[rows])
    if not relevant:
        raise EvaluationError(f"no evaluable users in {bundle.method} bundle p={bundle.portion}")
    seen = _group_items(d.users[bundle.train], d.items[bundle.train])
    if exclude_validation and target == "test":
        val = _group_items(d.users[bundle.val], d.items[bundle.val])
    else:
        val = {}
    users = np.array(sorted(relevant), dtype=np.int64)
    empty = np.empty(0, dtype=np.int64)
    total = 0.0
    for start in range(0, users.size, batch):
        chunk = users[start : start + batch]
        scores = model.score_users(chunk)
        for row, u in zip(scores, chunk):
            mask = np.zeros(row.size, dtype=bool)
            mask[seen.get(int(u), empty)] = True
            mask[val.get(int(u), empty)] = True
            total += ndcg_at_k(top_k(row, k, mask), relevant[int(u)], k)
    return total / users.size, int(users.size)


# aggregation ----------------------------------------------------------------


def seed_means(records: Iterable[MetricRecord], value: str = "ndcg_at_10") -> pd.DataFrame:
    df = records_frame(records)
    keys = ["dataset", "algorithm", "method", "portion"]
    return df.groupby(keys, as_index=False)[value].mean()


def relative_performance(records: Iterable[MetricRecord]) -> dict[float, float]:
    """Seed-mean score at each portion as a percentage of the p=1.0 seed-mean.

    Returns NaN for every portion when the baseline is zero.
    """
    means = seed_means(records)
    groups = means[["dataset", "algorithm", "method"]].drop_duplicates()
    if len(groups) != 1:
        raise ValueError("relative_performance expects records of one (dataset, algorithm, method)")
    by_p = dict(zip(means["portion"], means["ndcg_at_10"]))
    if 1.0 not in by_p:
        raise ValueError("no p=1.0 baseline records")
    base = by_p[1.0]
    if not base > 0:
        log.warning("zero baseline for %s; relative performance undefined", groups.iloc[0].to_dict())
        return {p: math.nan for p in sorted(by_p)}
    out = {p: 100.0 * by_p[p] / base for p in sorted(by_p)}
    out[1.0] = 100.0
    return out


def relative_table(records: Iterable[MetricRecord]) -> pd.DataFrame:
    """relative_performance for every (dataset, algorithm, method) in the records."""
    records = list(records)
    out = []
    keyed: dict[tuple, list[MetricRecord]] = {}
    for r in records:
        keyed.setdefault((r.dataset, r.algorithm, r.method), []).append(r)
    for (ds, alg, method), recs in sorted(keyed.items()):
        for p, rel in relative_performance(recs).items():
            out.append({"dataset": ds, "algorithm": alg, "method": method, "portion": p,
                        "relative_pct": rel})
    return pd.DataFrame(out, columns=["dataset", "algorithm", "method", "portion", "relative_pct"])


def normalize_scores(cells: Mapping[tuple[str, float], float]) -> dict[tuple[str, float], float]:
    """Min-max scale (algorithm, portion) cells of one dataset to [0, 1]."""
    if not cells:
        return {}
    vals = np.array(list(cells.values()), dtype=np.float64)
    lo, hi = vals.min(), vals.max()
    if hi == lo:
        return {key: 0.5 for key in cells}
    return {key: float((v - lo) / (hi - lo)) for key, v in cells.items()}


def normalized_table(records: Iterable[MetricRecord]) -> pd.DataFrame:
    """Per (dataset, method) normalised seed-mean scores."""
    means = seed_means(records)
    parts = []
    for (ds, method), g in means.groupby(["dataset", "method"], sort=True):
        cells = {(a, p): v for a, p, v in zip(g["algorithm"], g["portion"], g["ndcg_at_10"])}
        norm = normalize_scores(cells)
        parts.append(g.assign(normalized=[norm[(a, p)] for a, p in zip(g["algorithm"], g["portion"])]))
    cols = ["dataset", "algorithm", "method", "portion", "ndcg_at_10", "normalized"]
    return pd.concat(parts, ignore_index=True)[cols] if parts else pd.DataFrame(columns=cols)


def dataset_family(name: str) -> str:
    low = name.lower()
    if "movielens" in low or low.startswith("ml"):
        return "MovieLens"
    if "amazon" in low:
        return "Amazon"
    if "gowalla" in low:
        return "Gowalla"
    return name


def aggregate_groups(
    records: Iterable[MetricRecord],
    grouping: str = "by_algorithm_group",
    algorithm_groups: Mapping[str, Sequence[str]] = ALGORITHM_GROUPS,
) -> pd.DataFrame:
    """Mean and population std of relative performance per group and portion.

    Members are (dataset, algorithm) curves; NaN curves (zero baseline) are
    dropped.
    """
    rel = relative_table(records).dropna(subset=["relative_pct"])
    if grouping == "by_algorithm_group":
        lookup = {a: g for g, algs in algorithm_groups.items() for a in algs}
        rel["group"] = rel["algorithm"].map(lookup)
        names = list(algorithm_groups)
    elif grouping == "by_dataset_group":
        rel["group"] = rel["dataset"].map(dataset_family)
        names = sorted(set(rel["group"]))
    else:
        raise ValueError(f"unknown grouping {grouping!r}")
    rows = []
    for method in sorted(rel["method"].unique()):
        for name in names:
            g = rel[(rel["method"] == method) & (rel["group"] == name)]
            if g.empty:
                log.warning("group %s has no members for %s; omitted", name, method)
                continue
            for p, vals in g.groupby("portion")["relative_pct"]:
                rows.append({"method": method, "group": name, "portion": p,
                             "mean": float(vals.mean()), "spread": float(vals.std(ddof=0)),
                             "n_members": int(vals.size)})
    return pd.DataFrame(rows, columns=["method", "group", "portion", "mean", "spread", "n_members"])
