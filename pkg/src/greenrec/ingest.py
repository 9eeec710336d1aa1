"""Loading interaction logs into indexed datasets and describing them."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from datetime import datetime
from functools import cached_property
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import numpy as np


class Feedback(str, enum.Enum):
    EXPLICIT = "explicit"
    IMPLICIT = "implicit"


class DataError(ValueError):
    """Raised for unreadable or inconsistent interaction data."""


@dataclass(frozen=True)
class Interaction:
    user: str
    item: str
    rating: float | None = None
    timestamp: int | None = None

    def __post_init__(self):
        if not self.user or not self.item:
            raise DataError("user and item ids must be non-empty")
        if self.rating is not None and not math.isfinite(self.rating):
            raise DataError(f"non-finite rating for ({self.user}, {self.item})")


def _densify(codes: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Relabel integer codes to 0..n-1 in first-occurrence order.

    Returns the relabelled array and, for each new label, the old code.
    """
    if codes.size == 0:
        return codes.astype(np.int64), np.empty(0, dtype=np.int64)
    uniq, first, inverse = np.unique(codes, return_index=True, return_inverse=True)
    order = np.argsort(first, kind="stable")
    rank = np.empty_like(order)
    rank[order] = np.arange(order.size)
    return rank[inverse].astype(np.int64), uniq[order]


def _readonly(a: np.ndarray | None) -> np.ndarray | None:
    if a is not None:
        a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Dataset:
    """Immutable interaction store with dense user/item indices.

    Row ``r`` is the interaction ``(user_ids[users[r]], item_ids[items[r]])``.
    Dense indices follow first-occurrence order of the rows.
    """

    name: str
    feedback: Feedback
    users: np.ndarray
    items: np.ndarray
    ratings: np.ndarray | None
    timestamps: np.ndarray | None
    user_ids: tuple[str, ...]
    item_ids: tuple[str, ...]

    def __post_init__(self):
        n = self.users.shape[0]
        if self.items.shape[0] != n:
            raise DataError("users and items must have equal length")
        if self.feedback is Feedback.IMPLICIT and self.ratings is not None:
            raise DataError("implicit datasets carry no ratings")
        if self.feedback is Feedback.EXPLICIT and self.ratings is None:
            raise DataError("explicit datasets need a rating per interaction")
        for arr in (self.ratings, self.timestamps):
            if arr is not None and arr.shape[0] != n:
                raise DataError("column length mismatch")
        if n:
            if self.users.max() >= len(self.user_ids) or self.items.max() >= len(self.item_ids):
                raise DataError("interaction refers to an unindexed id")
        for a in (self.users, self.items, self.ratings, self.timestamps):
            _readonly(a)

    # construction ---------------------------------------------------------

    @classmethod
    def from_interactions(
        cls,
        interactions: Iterable[Interaction],
        feedback: Feedback | str = Feedback.EXPLICIT,
        name: str = "dataset",
    ) -> "Dataset":
        feedback = Feedback(feedback)
        user_index: dict[str, int] = {}
        item_index: dict[str, int] = {}
        users, items, ratings, stamps = [], [], [], []
        for it in interactions:
            users.append(user_index.setdefault(it.user, len(user_index)))
            items.append(item_index.setdefault(it.item, len(item_index)))
            ratings.append(it.rating)
            stamps.append(it.timestamp)
        return cls._from_columns(
            name, feedback, users, items, ratings, stamps, list(user_index), list(item_index)
        )

    @classmethod
    def _from_columns(cls, name, feedback, users, items, ratings, stamps, user_ids, item_ids):
        if feedback is Feedback.IMPLICIT:
            if any(r is not None for r in ratings):
                raise DataError("rating present in implicit data")
            rating_arr = None
        else:
            if any(r is None for r in ratings):
                raise DataError("explicit data with a missing rating")
            rating_arr = np.asarray(ratings, dtype=np.float64)
        if stamps and all(t is not None for t in stamps):
            stamp_arr = np.asarray(stamps, dtype=np.int64)
        else:
            stamp_arr = None
        return cls(
            name=name,
            feedback=feedback,
            users=np.asarray(users, dtype=np.int64),
            items=np.asarray(items, dtype=np.int64),
            ratings=rating_arr,
            timestamps=stamp_arr,
            user_ids=tuple(user_ids),
            item_ids=tuple(item_ids),
        )

    def take(self, rows: np.ndarray, name: str | None = None) -> "Dataset":
        """Sub-dataset of the given rows (or boolean mask), re-densified."""
        rows = np.asarray(rows)
        if rows.dtype == bool:
            rows = np.flatnonzero(rows)
        users, old_u = _densify(self.users[rows])
        items, old_i = _densify(self.items[rows])
        return Dataset(
            name=name or self.name,
            feedback=self.feedback,
            users=users,
            items=items,
            ratings=None if self.ratings is None else self.ratings[rows].copy(),
            timestamps=None if self.timestamps is None else self.timestamps[rows].copy(),
            user_ids=tuple(self.user_ids[k] for k in old_u),
            item_ids=tuple(self.item_ids[k] for k in old_i),
        )

    # views ----------------------------------------------------------------

    @property
    def n_users(self) -> int:
        return len(self.user_ids)

    @property
    def n_items(self) -> int:
        return len(self.item_ids)

    @property
    def n_interactions(self) -> int:
        return int(self.users.shape[0])

    def __len__(self) -> int:
        return self.n_interactions

    @property
    def explicit(self) -> bool:
        return self.feedback is Feedback.EXPLICIT

    @cached_property
    def user_index(self) -> dict[str, int]:
        return {u: k for k, u in enumerate(self.user_ids)}

    @cached_property
    def item_index(self) -> dict[str, int]:
        return {i: k for k, i in enumerate(self.item_ids)}

    @property
    def interactions(self) -> Iterator[Interaction]:
        for r in range(self.n_interactions):
            yield self.interaction(r)

    def interaction(self, row: int) -> Interaction:
        return Interaction(
            user=self.user_ids[self.users[row]],
            item=self.item_ids[self.items[row]],
            rating=None if self.ratings is None else float(self.ratings[row]),
            timestamp=None if self.timestamps is None else int(self.timestamps[row]),
        )

    def user_rows(self) -> list[np.ndarray]:
        """Row indices of each user's interactions, in row order."""
        order = np.argsort(self.users, kind="stable")
        bounds = np.cumsum(np.bincount(self.users, minlength=self.n_users))
        return np.split(order, bounds[:-1])


# loading --------------------------------------------------------------------

COLUMN_ROLES = ("user", "item", "rating", "timestamp")


@dataclass(frozen=True)
class Schema:
    """How to read a delimited interaction file.

    ``columns`` names each field in file order; fields named anything other
    than user/item/rating/timestamp are discarded.
    """

    columns: tuple[str, ...]
    sep: str = "\t"
    header: bool = False

    def __post_init__(self):
        if "user" not in self.columns or "item" not in self.columns:
            raise DataError("schema must name user and item columns")
        for role in COLUMN_ROLES:
            if self.columns.count(role) > 1:
                raise DataError(f"column {role!r} named twice")

    @property
    def has_rating(self) -> bool:
        return "rating" in self.columns


SCHEMAS: dict[str, Schema] = {
    "ml100k": Schema(("user", "item", "rating", "timestamp"), sep="\t"),
    "ml1m": Schema(("user", "item", "rating", "timestamp"), sep="::"),
    "ml10m": Schema(("user", "item", "rating", "timestamp"), sep="::"),
    "amazon": Schema(("item", "user", "rating", "timestamp"), sep=","),
    "gowalla": Schema(("user", "timestamp", "lat", "lon", "item"), sep="\t"),
    "csv": Schema(("user", "item", "rating", "timestamp"), sep=",", header=True),
    "csv-implicit": Schema(("user", "item"), sep=",", header=True),
}


def get_schema(schema: str | Schema) -> Schema:
    if isinstance(schema, Schema):
        return schema
    try:
        return SCHEMAS[schema]
    except KeyError:
        raise DataError(f"unknown schema {schema!r}; known: {', '.join(SCHEMAS)}") from None


def _parse_timestamp(text: str) -> int:
    try:
        return int(float(text))
    except ValueError:
        stamp = datetime.fromisoformat(text.replace("Z", "+00:00"))
        return int(stamp.timestamp())


def load_dataset(
    path: str | Path,
    schema: str | Schema = "ml100k",
    feedback: Feedback | str = Feedback.EXPLICIT,
    name: str | None = None,
) -> Dataset:
    """Read a delimited interaction file; row order is preserved."""
    path = Path(path)
    schema = get_schema(schema)
    feedback = Feedback(feedback)
    if not path.is_file():
        raise FileNotFoundError(f"no such dataset file: {path}")
    if feedback is Feedback.IMPLICIT and schema.has_rating:
        raise DataError("schema names a rating column but feedback is implicit")
    if feedback is Feedback.EXPLICIT and not schema.has_rating:
        raise DataError("explicit feedback needs a rating column")

    pos = {role: schema.columns.index(role) for role in COLUMN_ROLES if role in schema.columns}
    width = len(schema.columns)
    user_index: dict[str, int] = {}
    item_index: dict[str, int] = {}
    users, items, ratings, stamps = [], [], [], []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if schema.header and lineno == 1:
                continue
            line = line.rstrip("\r\n")
            if not line.strip():
                continue
            fields = line.split(schema.sep)
            if len(fields) < width:
                raise DataError(f"{path}:{lineno}: expected {width} fields, got {len(fields)}")
            user, item = fields[pos["user"]].strip(), fields[pos["item"]].strip()
            if not user or not item:
                raise DataError(f"{path}:{lineno}: empty user or item id")
            try:
                rating = float(fields[pos["rating"]]) if "rating" in pos else None
                stamp = _parse_timestamp(fields[pos["timestamp"]].strip()) if "timestamp" in pos else None
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: {exc}") from None
            if rating is not None and not math.isfinite(rating):
                raise DataError(f"{path}:{lineno}: non-finite rating")
            users.append(user_index.setdefault(user, len(user_index)))
            items.append(item_index.setdefault(item, len(item_index)))
            ratings.append(rating)
            stamps.append(stamp)
    return Dataset._from_columns(
        name or path.stem, feedback, users, items, ratings, stamps, list(user_index), list(item_index)
    )


def write_dataset(d: Dataset, path: str | Path, sep: str = "\t") -> None:
    """Write ``user sep item [sep rating] [sep timestamp]`` lines, no header."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        for r in range(d.n_interactions):
            row = [d.user_ids[d.users[r]], d.item_ids[d.items[r]]]
            if d.ratings is not None:
                row.append(_fmt_rating(d.ratings[r]))
            if d.timestamps is not None:
                row.append(str(int(d.timestamps[r])))
            fh.write(sep.join(row) + "\n")


def _fmt_rating(x: float) -> str:
    return str(int(x)) if float(x).is_integer() else repr(float(x))


def output_schema(d: Dataset, sep: str = "\t") -> Schema:
    """Schema matching what :func:`write_dataset` produces for ``d``."""
    cols = ["user", "item"]
    if d.ratings is not None:
        cols.append("rating")
    if d.timestamps is not None:
        cols.append("timestamp")
    return Schema(tuple(cols), sep=sep)


# statistics -----------------------------------------------------------------


@dataclass(frozen=True)
class DatasetStats:
    n_users: int
    n_items: int
    n_interactions: int
    avg_int_per_user: float | None
    avg_int_per_item: float | None
    sparsity_pct: float | None
    entropy: float | None = None

    def as_row(self) -> dict:
        return {
            "users": self.n_users,
            "items": self.n_items,
            "interactions": self.n_interactions,
            "avg_int_per_user": self.avg_int_per_user,
            "avg_int_per_item": self.avg_int_per_item,
            "sparsity_pct": self.sparsity_pct,
            "entropy": self.entropy,
        }


def rating_entropy(ratings: Sequence[float] | np.ndarray, base: float = math.e) -> float:
    """Shannon entropy of the rating-value distribution."""
    ratings = np.asarray(ratings, dtype=np.float64)
    if ratings.size == 0:
        raise DataError("entropy of an empty rating set")
    _, counts = np.unique(ratings, return_counts=True)
    q = counts / counts.sum()
    h = float(-(q * np.log(q)).sum()) / math.log(base)
    return abs(h) if h == 0 else h


def compute_stats(d: Dataset, entropy_base: float = math.e) -> DatasetStats:
    n_u, n_i, n = d.n_users, d.n_items, d.n_interactions
    if n_u == 0 or n_i == 0:
        return DatasetStats(n_u, n_i, n, None, None, None, None)
    entropy = rating_entropy(d.ratings, entropy_base) if d.explicit and n else None
    return DatasetStats(
        n_users=n_u,
        n_items=n_i,
        n_interactions=n,
        avg_int_per_user=n / n_u,
        avg_int_per_item=n / n_i,
        sparsity_pct=100.0 * (1.0 - n / (n_u * n_i)),
        entropy=entropy,
    )
