import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from greenrec.ingest import load_dataset
from greenrec.preprocess import preprocess
from greenrec.sampling import (
    DownsamplePlan,
    Method,
    SplitConfig,
    SplitError,
    apportion,
    make_splits,
    round_half_up,
    split_fixed_users_varying_ratio,
    split_user_based,
    split_user_subset,
)

from conftest import make_dataset, random_dataset

PORTIONS = (0.2, 0.4, 0.6, 0.8, 1.0)


def grid_dataset(n_users, per_user):
    users = np.repeat(np.arange(n_users), per_user)
    items = np.tile(np.arange(per_user), n_users)
    return make_dataset(users, items, np.ones(users.size))


def users_of(d, rows):
    return set(d.users[rows].tolist())


def test_round_half_up():
    assert [round_half_up(x) for x in (0.5, 1.5, 2.5, 2.4999)] == [1, 2, 3, 2]


def test_user_based_twenty_interactions():
    d = grid_dataset(1, 20)
    full, half = split_user_based(d, SplitConfig(), DownsamplePlan("user_based", (0.5, 1.0)))[::-1]
    assert full.sizes() == (16, 2, 2)
    assert half.sizes() == (8, 2, 2)
    assert set(half.train) <= set(full.train)  # single user: the half sample comes from the pool


def test_user_based_full_portion_is_whole_pool():
    d = grid_dataset(4, 10)
    (b,) = split_user_based(d, SplitConfig(), DownsamplePlan("user_based", (1.0,)))
    assert b.sizes() == (32, 4, 4)
    assert np.array_equal(np.sort(np.concatenate([b.train, b.val, b.test])), np.arange(40))


def test_user_based_rejects_tiny_user():
    d = make_dataset([0, 0, 0, 1, 1], [0, 1, 2, 0, 1], [1] * 5)
    with pytest.raises(SplitError, match="'u1'"):
        split_user_based(d, SplitConfig(), DownsamplePlan())


def test_user_subset_toy():
    d = grid_dataset(10, 10)
    half, full = split_user_subset(d, SplitConfig(), DownsamplePlan("user_subset", (0.5, 1.0)))
    assert half.users_included.size == 6
    assert half.sizes() == (40, 10, 10)
    assert full.users_included.size == 10
    assert full.sizes() == (80, 10, 10)


def test_fixed_users_ratio_example():
    d = grid_dataset(1, 10)
    (b,) = split_fixed_users_varying_ratio(d, [(0.5, 0.4)])
    assert b.sizes() == (5, 1, 4)


def test_fixed_users_default_ratio_equals_user_based_full():
    d = random_dataset(np.random.default_rng(3), 12, 30, per_user_min=5)
    (a,) = split_fixed_users_varying_ratio(d, [(0.8, 0.1)], seed=42)
    (b,) = split_user_based(d, SplitConfig(seed=42), DownsamplePlan("user_based", (1.0,), 42))
    for part in ("train", "val", "test"):
        np.testing.assert_array_equal(getattr(a, part), getattr(b, part))


def test_fixed_users_monotone_ratios():
    d = random_dataset(np.random.default_rng(5), 15, 60, per_user_min=30)
    ratios = [(round(0.1 * t, 1), round(0.9 - 0.1 * t, 1)) for t in range(1, 9)]
    sizes = [b.sizes() for b in split_fixed_users_varying_ratio(d, ratios)]
    trains = [s[0] for s in sizes]
    tests = [s[2] for s in sizes]
    assert all(a < b for a, b in zip(trains, trains[1:]))
    assert all(a > b for a, b in zip(tests, tests[1:]))


def test_plan_validation():
    with pytest.raises(SplitError):
        DownsamplePlan(portions=(0.5, 0.5))
    with pytest.raises(SplitError):
        DownsamplePlan(portions=(0.0, 1.0))
    with pytest.raises(SplitError):
        SplitConfig(0.7, 0.1, 0.1)


def test_apportion_respects_bounds():
    # floor gives [2, 2, 4] after capping the third share at its bound
    x = apportion(10, np.array([2.5, 2.5, 5.0]), np.array([0, 0, 0]), np.array([4, 4, 4]))
    assert x.tolist() == [3, 3, 4]
    # equal remainders: the earlier position wins
    assert apportion(5, np.array([2.5, 2.5]), np.array([0, 0]), np.array([5, 5])).tolist() == [3, 2]
    assert apportion(4, np.array([0.2, 3.8]), np.array([2, 0]), np.array([5, 5])).tolist() == [2, 2]
    with pytest.raises(SplitError):
        apportion(10, np.array([5.0, 5.0]), np.array([0, 0]), np.array([3, 3]))


@given(st.lists(st.floats(0, 10), min_size=1, max_size=8))
def test_apportion_sums_and_stays_in_bounds(quota):
    quota = np.array(quota)
    total = int(round(quota.sum()))
    upper = np.ceil(quota).astype(int) + 1
    x = apportion(total, quota, np.zeros(quota.size, int), upper)
    assert x.sum() == total
    assert np.all(x >= 0) and np.all(x <= upper)
    assert np.all(np.abs(x - quota) < 2)


def test_user_subset_infeasible_raises():
    # two users with three interactions each cannot hold 20% of the data with one train row each
    d = make_dataset([0, 0, 0, 1, 1, 1, 2] * 1, [0, 1, 2, 0, 1, 2, 0], [1] * 7)
    with pytest.raises(SplitError):
        split_user_subset(d, SplitConfig(0.2, 0.4, 0.4), DownsamplePlan("user_subset", (0.1, 1.0)))


@st.composite
def datasets(draw):
    n_users = draw(st.integers(3, 14))
    n_items = draw(st.integers(8, 20))
    seed = draw(st.integers(0, 2**32 - 1))
    explicit = draw(st.booleans())
    return random_dataset(np.random.default_rng(seed), n_users, n_items, per_user_min=5, explicit=explicit)


def check_common(d, b):
    tr, va, te = set(b.train.tolist()), set(b.val.tolist()), set(b.test.tolist())
    assert len(tr) == b.train.size and len(va) == b.val.size and len(te) == b.test.size
    assert not (tr & va) and not (tr & te) and not (va & te)
    assert users_of(d, b.val) | users_of(d, b.test) <= users_of(d, b.train)
    assert users_of(d, b.train) <= set(b.users_included.tolist())


@settings(max_examples=120)
@given(datasets(), st.integers(0, 10_000))
def test_split_invariants(d, seed):
    cfg = SplitConfig(seed=seed)
    based = make_splits(d, cfg, DownsamplePlan("user_based", PORTIONS, seed))
    subset = make_splits(d, cfg, DownsamplePlan("user_subset", PORTIONS, seed))
    n_val = round_half_up(0.1 * d.n_interactions)
    n_test = round_half_up(0.1 * d.n_interactions)

    for b in based:
        check_common(d, b)
        assert b.val is based[-1].val and b.test is based[-1].test
        assert users_of(d, b.train) == set(range(d.n_users))
    assert based[-1].train.size + based[-1].val.size + based[-1].test.size == d.n_interactions

    prev = set()
    for b in subset:
        check_common(d, b)
        assert b.val.size == n_val and b.test.size == n_test
        included = set(b.users_included.tolist())
        assert prev <= included
        prev = included
    assert subset[-1].users_included.size == d.n_users

    # bit-determinism: a second run reproduces every array
    for method, first in (("user_based", based), ("user_subset", subset)):
        again = make_splits(d, cfg, DownsamplePlan(method, PORTIONS, seed))
        for a, b in zip(first, again):
            for part in ("train", "val", "test", "users_included"):
                assert getattr(a, part).tobytes() == getattr(b, part).tobytes()


@given(datasets())
def test_user_based_train_size_rule(d):
    (b_half,) = split_user_based(d, SplitConfig(), DownsamplePlan("user_based", (0.5,)))
    (b_full,) = split_user_based(d, SplitConfig(), DownsamplePlan("user_based", (1.0,)))
    pool = np.bincount(d.users[b_full.train], minlength=d.n_users)
    half = np.bincount(d.users[b_half.train], minlength=d.n_users)
    expected = [max(1, round_half_up(0.5 * n)) for n in pool]
    assert half.tolist() == expected


def test_ml100k_user_based_keeps_all_users(ml100k_file):
    d, _ = preprocess(load_dataset(ml100k_file, "ml100k"), 10)
    for b in split_user_based(d, SplitConfig(seed=21), DownsamplePlan("user_based", (0.1, 1.0), 21)):
        for part in (b.train, b.val, b.test):
            assert len(users_of(d, part)) == 943
