"""Random holdout splits and the two training-set downsampling strategies.

Bundles reference interactions by row index into the source dataset, so
disjointness is checked on row identity.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .ingest import Dataset

DEFAULT_PORTIONS = tuple(round(0.1 * k, 1) for k in range(1, 11))

# stream tags for SeedSequence so the independent random draws never share a stream
_HOLDOUT, _PORTION, _USER_ORDER, _SUBSET_ROWS = 0, 1, 2, 3


class SplitError(ValueError):
    """A split configuration cannot be realised on the given dataset."""


class Method(str, enum.Enum):
    USER_BASED = "user_based"
    USER_SUBSET = "user_subset"


def round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


@dataclass(frozen=True)
class SplitConfig:
    train_frac: float = 0.8
    val_frac: float = 0.1
    test_frac: float = 0.1
    seed: int = 42

    def __post_init__(self):
        fracs = (self.train_frac, self.val_frac, self.test_frac)
        if min(fracs) <= 0:
            raise SplitError(f"split fractions must be positive, got {fracs}")
        if not math.isclose(sum(fracs), 1.0, abs_tol=1e-9):
            raise SplitError(f"split fractions must sum to 1, got {sum(fracs)}")


@dataclass(frozen=True)
class DownsamplePlan:
    method: Method = Method.USER_BASED
    portions: tuple[float, ...] = DEFAULT_PORTIONS
    seed: int = 42

    def __post_init__(self):
        object.__setattr__(self, "method", Method(self.method))
        object.__setattr__(self, "portions", tuple(float(p) for p in self.portions))
        ps = self.portions
        if not ps:
            raise SplitError("at least one portion is required")
        if any(not 0 < p <= 1 for p in ps):
            raise SplitError(f"portions must lie in (0, 1], got {ps}")
        if any(b <= a for a, b in zip(ps, ps[1:])):
            raise SplitError(f"portions must be strictly increasing, got {ps}")


@dataclass(frozen=True, eq=False)
class SplitBundle:
    portion: float
    train: np.ndarray
    val: np.ndarray
    test: np.ndarray
    users_included: np.ndarray
    method: str = Method.USER_BASED.value
    dataset: Dataset | None = field(default=None, repr=False)

    def sizes(self) -> tuple[int, int, int]:
        return len(self.train), len(self.val), len(self.test)


def _rows_array(parts: list[np.ndarray]) -> np.ndarray:
    out = np.sort(np.concatenate(parts)) if parts else np.empty(0, dtype=np.int64)
    out = out.astype(np.int64)
    out.setflags(write=False)
    return out


def _portion_key(p: float) -> int:
    return round_half_up(p * 1_000_000)


def _per_user_holdout(d: Dataset, cfg: SplitConfig):
    """Shuffle each user's rows and cut test, then validation, off the front.

    Returns lists (test, val, train_pool) of per-user row arrays.
    """
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, _HOLDOUT]))
    tests, vals, pools = [], [], []
    for u, rows in enumerate(d.user_rows()):
        n = rows.size
        n_test = max(1, round_half_up(cfg.test_frac * n))
        n_val = max(1, round_half_up(cfg.val_frac * n))
        if n < 3 or n - n_test - n_val < 1:
            raise SplitError(
                f"user {d.user_ids[u]!r} has {n} interactions; cannot place one in each of "
                f"train/validation/test (prune with k >= 3)"
            )
        perm = rng.permutation(rows)
        tests.append(perm[:n_test])
        vals.append(perm[n_test : n_test + n_val])
        pools.append(perm[n_test + n_val :])
    return tests, vals, pools


def split_user_based(d: Dataset, cfg: SplitConfig, plan: DownsamplePlan) -> list[SplitBundle]:
    """Per-user 80/10/10 holdout, then per-user sampling of the training pool.

    Validation and test arrays are the same objects in every bundle.
    """
    if plan.method is not Method.USER_BASED:
        raise SplitError(f"plan method is {plan.method.value}, expected user_based")
    tests, vals, pools = _per_user_holdout(d, cfg)
    test, val = _rows_array(tests), _rows_array(vals)
    users = np.arange(d.n_users, dtype=np.int64)
    bundles = []
    for p in plan.portions:
        rng = np.random.default_rng(np.random.SeedSequence([plan.seed, _PORTION, _portion_key(p)]))
        train = []
        for pool in pools:
            n = max(1, round_half_up(p * pool.size))
            train.append(pool if n == pool.size else rng.choice(pool, size=n, replace=False))
        bundles.append(
            SplitBundle(p, _rows_array(train), val, test, users, Method.USER_BASED.value, d)
        )
    return bundles


def apportion(total: int, quota: np.ndarray, lower: np.ndarray, upper: np.ndarray) -> np.ndarray:
    """Integer allocation summing to ``total`` within [lower, upper], near ``quota``.

    Largest-remainder rounding; ties go to the earlier position.
    """
    quota = np.asarray(quota, dtype=np.float64)
    lower = np.asarray(lower, dtype=np.int64)
    upper = np.asarray(upper, dtype=np.int64)
    if lower.sum() > total or upper.sum() < total or np.any(lower > upper):
        raise SplitError(f"cannot allocate {total} within bounds [{lower.sum()}, {upper.sum()}]")
    x = np.clip(np.floor(quota).astype(np.int64), lower, upper)
    pos = np.arange(x.size)
    while (diff := total - int(x.sum())) != 0:
        gap = quota - x
        if diff > 0:
            cand = np.flatnonzero(x < upper)
            order = cand[np.lexsort((pos[cand], -gap[cand]))]
            x[order[:diff]] += 1
        else:
            cand = np.flatnonzero(x > lower)
            order = cand[np.lexsort((-pos[cand], gap[cand]))]
            x[order[:-diff]] -= 1
    return x


def split_user_subset(d: Dataset, cfg: SplitConfig, plan: DownsamplePlan) -> list[SplitBundle]:
    """Grow a seeded user subset until it covers the portion's interaction budget.

    Validation and test keep exactly round(val_frac*N) and round(test_frac*N)
    interactions at every portion; the remaining rows of selected users train.
    """
    if plan.method is not Method.USER_SUBSET:
        raise SplitError(f"plan method is {plan.method.value}, expected user_subset")
    n_total = d.n_interactions
    n_val = round_half_up(cfg.val_frac * n_total)
    n_test = round_half_up(cfg.test_frac * n_total)
    held = n_val + n_test
    user_rows = d.user_rows()
    row_rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, _SUBSET_ROWS]))
    shuffled = [row_rng.permutation(rows) for rows in user_rows]
    order = np.random.default_rng(np.random.SeedSequence([plan.seed, _USER_ORDER])).permutation(
        d.n_users
    )
    counts = np.array([rows.size for rows in user_rows], dtype=np.int64)[order]
    cum = np.cumsum(counts)

    bundles = []
    for p in plan.portions:
        target = held + round_half_up(p * cfg.train_frac * n_total)
        m = min(int(np.searchsorted(cum, target)) + 1, d.n_users)
        sel, n_sel = order[:m], counts[:m]
        covered = int(n_sel.sum())
        if held > int((n_sel - 1).sum()):
            raise SplitError(
                f"portion {p}: {held} validation+test interactions exceed the "
                f"{int((n_sel - 1).sum())} available from {m} selected users"
            )
        q = n_sel * held / covered
        both = q >= 2
        h = apportion(held, q, np.where(both, 2, 0), n_sel - 1)
        v = apportion(
            n_val,
            h * n_val / held,
            np.where(both, 1, 0),
            h - np.where(both, 1, 0),
        )
        tr, va, te = [], [], []
        for u, h_u, v_u in zip(sel, h, v):
            rows = shuffled[u]
            va.append(rows[:v_u])
            te.append(rows[v_u:h_u])
            tr.append(rows[h_u:])
        bundles.append(
            SplitBundle(
                p,
                _rows_array(tr),
                _rows_array(va),
                _rows_array(te),
                np.sort(sel).astype(np.int64),
                Method.USER_SUBSET.value,
                d,
            )
        )
    return bundles


def split_fixed_users_varying_ratio(
    d: Dataset,
    ratios: Sequence[tuple[float, float]],
    seed: int = 42,
    val_frac: float = 0.1,
) -> list[SplitBundle]:
    """All users in every bundle; each bundle uses its own (train, test) fractions.

    The bundle's ``portion`` holds its train fraction.
    """
    users = np.arange(d.n_users, dtype=np.int64)
    bundles = []
    for train_frac, test_frac in ratios:
        cfg = SplitConfig(train_frac, val_frac, test_frac, seed)
        tests, vals, pools = _per_user_holdout(d, cfg)
        bundles.append(
            SplitBundle(
                float(train_frac),
                _rows_array(pools),
                _rows_array(vals),
                _rows_array(tests),
                users,
                "fixed_users",
                d,
            )
        )
    return bundles


def make_splits(d: Dataset, cfg: SplitConfig, plan: DownsamplePlan) -> list[SplitBundle]:
    if plan.method is Method.USER_BASED:
        return split_user_based(d, cfg, plan)
    return split_user_subset(d, cfg, plan)
