"""Acceptance criteria 1-10, one test each.

Every test records a verdict that is printed as a PASS/FAIL line in the
terminal summary. Criteria 7-9 share one MovieLens 100K run (10-core,
User-Based, portions 0.1-1.0, five seeds, default tuning grids) and take
several minutes on one core.
"""

import math

import numpy as np
import pytest
from scipy.stats import spearmanr

from greenrec.evaluation import ndcg_at_k, relative_performance, seed_means
from greenrec.ingest import compute_stats, load_dataset
from greenrec.preprocess import kcore_mask, preprocess
from greenrec.runner import DEFAULT_SEEDS, ExperimentConfig, run_experiment
from greenrec.sampling import DownsamplePlan, SplitConfig, make_splits, round_half_up
from greenrec.sustainability import build_runtime_profile, co2e_savings_kg

import conftest
from test_algorithms import numeric_gradient
from test_evaluation import oracle_ndcg
from test_preprocess import brute_force_core

PORTIONS = tuple(round(0.1 * k, 1) for k in range(1, 11))
KNN = ("UserKNN", "ItemKNN")
MF = ("SVD", "NMF", "FunkSVD", "BiasedMF")


def verdict(number, name, ok, detail):
    conftest.VERDICTS[number] = (name, bool(ok), detail)
    assert ok, detail


@pytest.fixture(scope="session")
def ml100k_required():
    path = conftest.ml100k_path()
    if not path.is_file():
        pytest.fail(f"MovieLens 100K not found at {path}; run scripts/fetch_ml100k.py")
    return path


def suite_config(path, out, algorithms, portions=PORTIONS, seeds=DEFAULT_SEEDS):
    return ExperimentConfig.from_dict({
        "datasets": [{"path": str(path), "schema": "ml100k", "prune_k": 10, "name": "ml-100k"}],
        "algorithms": list(algorithms),
        "methods": ["user_based"],
        "portions": list(portions),
        "seeds": list(seeds),
        "output_dir": str(out),
    })


@pytest.fixture(scope="session")
def ml100k_suite(ml100k_required, tmp_path_factory):
    algorithms = ["Random", "Popularity", *KNN, *MF]
    cfg = suite_config(ml100k_required, tmp_path_factory.mktemp("suite"), algorithms)
    store = run_experiment(cfg)
    assert not store.skips, store.skips
    return store.records


# 1 ---------------------------------------------------------------------------


def test_criterion_01_emission_model():
    expected = {0.64: 35.32, 0.73: 26.49, 0.82: 17.66, 0.48: 51.02, 0.61: 38.26, 0.76: 23.54}
    got = {rel: co2e_savings_kg(rel) for rel in expected}
    worst = max(abs(got[r] - kg) for r, kg in expected.items())
    verdict(1, "emission model", worst <= 0.01,
            " ".join(f"{got[r]:.2f}" for r in expected) + f" (max error {worst:.4f} kg)")


# 2 ---------------------------------------------------------------------------


def test_criterion_02_movielens_tables(ml100k_required):
    raw = load_dataset(ml100k_required, "ml100k")
    s = compute_stats(raw)
    c10, _ = preprocess(raw, 10)
    c30, _ = preprocess(raw, 30)
    shape = lambda d: (d.n_users, d.n_items, d.n_interactions)
    ok = (
        shape(raw) == (943, 1682, 100_000)
        and abs(s.sparsity_pct - 93.7) <= 0.05
        and abs(s.entropy - 1.46) <= 0.01
        and shape(c10) == (943, 1152, 97_953)
        and shape(c30) == (720, 795, 86_295)
    )
    verdict(2, "MovieLens 100K tables", ok,
            f"raw {shape(raw)} sparsity {s.sparsity_pct:.3f}% entropy {s.entropy:.4f}; "
            f"10-core {shape(c10)}; 30-core {shape(c30)}")


# 3 ---------------------------------------------------------------------------


def test_criterion_03_kcore():
    rng = np.random.default_rng(2024)
    degree_ok = oracle_ok = 0
    n_oracle = 0
    for t in range(200):
        n_u, n_i = int(rng.integers(2, 9)), int(rng.integers(2, 9))
        density = rng.uniform(0.2, 0.9)
        users, items = np.nonzero(rng.random((n_u, n_i)) < density)
        k = int(rng.integers(1, 5))
        alive, _ = kcore_mask(users, items, k)
        u_deg = np.bincount(users[alive], minlength=n_u)
        i_deg = np.bincount(items[alive], minlength=n_i)
        kept_u, kept_i = np.unique(users[alive]), np.unique(items[alive])
        degree_ok += bool(np.all(u_deg[kept_u] >= k) and np.all(i_deg[kept_i] >= k))
        if n_u + n_i <= 12:
            n_oracle += 1
            oracle_ok += bool(np.array_equal(alive, brute_force_core(users.tolist(), items.tolist(), k)))
    ok = degree_ok == 200 and oracle_ok == n_oracle and n_oracle >= 50
    verdict(3, "k-core correctness", ok,
            f"min-degree {degree_ok}/200, brute-force oracle {oracle_ok}/{n_oracle}")


# 4 ---------------------------------------------------------------------------


def split_violations(d, seed, portions):
    cfg = SplitConfig(seed=seed)
    errors = []
    n_val = round_half_up(0.1 * d.n_interactions)
    n_test = round_half_up(0.1 * d.n_interactions)
    for method in ("user_based", "user_subset"):
        bundles = make_splits(d, cfg, DownsamplePlan(method, portions, seed))
        again = make_splits(d, cfg, DownsamplePlan(method, portions, seed))
        prev_users = set()
        for b, b2 in zip(bundles, again):
            tr, va, te = (set(x.tolist()) for x in (b.train, b.val, b.test))
            if tr & va or tr & te or va & te:
                errors.append(f"{method} p={b.portion}: overlap")
            train_users = set(d.users[b.train].tolist())
            if not set(d.users[b.val].tolist()) | set(d.users[b.test].tolist()) <= train_users:
                errors.append(f"{method} p={b.portion}: val/test user missing from train")
            if any(getattr(b, f).tobytes() != getattr(b2, f).tobytes()
                   for f in ("train", "val", "test", "users_included")):
                errors.append(f"{method} p={b.portion}: not deterministic")
            if method == "user_based":
                if not (np.array_equal(b.val, bundles[-1].val) and np.array_equal(b.test, bundles[-1].test)):
                    errors.append(f"user_based p={b.portion}: val/test differ across portions")
            else:
                if (b.val.size, b.test.size) != (n_val, n_test):
                    errors.append(f"user_subset p={b.portion}: sizes {b.val.size}/{b.test.size}")
                users = set(b.users_included.tolist())
                if not prev_users <= users:
                    errors.append(f"user_subset p={b.portion}: user sets not nested")
                prev_users = users
    return errors


def test_criterion_04_split_invariants():
    rng = np.random.default_rng(7)
    portions = (0.2, 0.4, 0.6, 0.8, 1.0)
    failures = []
    n = 120
    for t in range(n):
        d = conftest.random_dataset(rng, int(rng.integers(3, 15)), int(rng.integers(8, 21)),
                                    per_user_min=5, explicit=bool(t % 2))
        failures += split_violations(d, int(rng.integers(0, 10_000)), portions)
    verdict(4, "split invariants", not failures,
            f"{n} datasets x 2 methods x {len(portions)} portions, {len(failures)} violations"
            + (f"; first: {failures[0]}" if failures else ""))


# 5 ---------------------------------------------------------------------------


def test_criterion_05_ndcg_oracle():
    import itertools

    worst, cases, range_ok = 0.0, 0, True
    for n in range(1, 8):
        for n_rel in range(1, min(3, n) + 1):
            for relevant in itertools.combinations(range(n), n_rel):
                rel = set(relevant)
                for ranking in itertools.permutations(range(n)):
                    got = ndcg_at_k(list(ranking), rel, 10)
                    worst = max(worst, abs(got - oracle_ndcg(ranking, rel, 10)))
                    range_ok &= 0.0 <= got <= 1.0
                    cases += 1
    perfect = ndcg_at_k([2, 0, 1, 5], {0, 1, 2}) == 1.0
    zero = ndcg_at_k([3, 4, 5], {0}) == 0.0
    ok = worst <= 1e-12 and range_ok and perfect and zero
    verdict(5, "nDCG oracle", ok, f"{cases} rankings, max error {worst:.1e}, perfect/zero cases hold")


# 6 ---------------------------------------------------------------------------


def test_criterion_06_numerics():
    from greenrec.algorithms.mf import mf_gradient, mf_loss
    from greenrec.algorithms.nmf import nmf_multiplicative
    from greenrec.algorithms.svd import randomized_svd

    rng = np.random.default_rng(11)
    grad_err = 0.0
    for biased in (False, True):
        for _ in range(5):
            users, items = rng.integers(0, 5, 20), rng.integers(0, 6, 20)
            ratings = rng.integers(1, 6, 20).astype(float)
            P, Q = rng.normal(size=(5, 3)), rng.normal(size=(6, 3))
            bu, bi = rng.normal(size=5), rng.normal(size=6)
            loss = lambda: mf_loss(P, Q, bu, bi, 3.5, users, items, ratings, 0.02, biased)
            analytic = mf_gradient(P, Q, bu, bi, 3.5, users, items, ratings, 0.02, biased)
            for a, x in zip(analytic, (P, Q, bu, bi) if biased else (P, Q)):
                num = numeric_gradient(loss, x)
                grad_err = max(grad_err, np.linalg.norm(a - num) / np.linalg.norm(num))

    orth_err = recon_err = 0.0
    for seed in range(20):
        a = rng.normal(size=(4, 3))
        u, s, vt = randomized_svd(a, 3, rng=seed)
        orth_err = max(orth_err, np.abs(u.T @ u - np.eye(3)).max(), np.abs(vt @ vt.T - np.eye(3)).max())
        recon_err = max(recon_err, np.abs((u * s) @ vt - a).max())

    nmf_ok = True
    for seed in range(10):
        x = rng.uniform(0, 5, (20, 15))
        _, _, losses = nmf_multiplicative(x, 5, 100, rng=seed, track_loss=True)
        steps = np.diff(losses)
        nmf_ok &= bool(np.all(steps <= 1e-9 * np.array(losses[:-1])))

    ok = grad_err <= 1e-4 and orth_err <= 1e-8 and recon_err <= 1e-8 and nmf_ok
    verdict(6, "algorithm numerics", ok,
            f"MF gradient rel. error {grad_err:.1e}; SVD orthonormality {orth_err:.1e}, "
            f"reconstruction {recon_err:.1e}; NMF monotone over 100 iterations: {nmf_ok}")


# 7-9 -------------------------------------------------------------------------


@pytest.mark.slow
def test_criterion_07_ordering(ml100k_suite):
    full = seed_means(r for r in ml100k_suite if r.portion == 1.0)
    mean = dict(zip(full["algorithm"], full["ndcg_at_10"]))
    ok = all(mean[a] > mean["Popularity"] for a in ("ItemKNN", "UserKNN", "SVD")) and (
        mean["Popularity"] > mean["Random"]
    )
    verdict(7, "ordering at p=1.0", ok,
            ", ".join(f"{a} {mean[a]:.4f}" for a in ("ItemKNN", "UserKNN", "SVD", "Popularity", "Random")))


@pytest.mark.slow
def test_criterion_08_trend(ml100k_suite):
    means = seed_means(ml100k_suite)
    rho = {}
    for alg in ("ItemKNN", "UserKNN", "SVD"):
        g = means[means["algorithm"] == alg].sort_values("portion")
        rho[alg] = float(spearmanr(g["portion"], g["ndcg_at_10"]).statistic)
    baseline_ok = all(
        relative_performance([r for r in ml100k_suite if r.algorithm == alg])[1.0] == 100.0
        for alg in {r.algorithm for r in ml100k_suite}
    )
    ok = all(v >= 0.8 for v in rho.values()) and baseline_ok
    verdict(8, "portion trend", ok,
            ", ".join(f"{a} rho={v:.3f}" for a, v in rho.items()) + f"; rel(1.0)=100 for all: {baseline_ok}")


@pytest.mark.slow
def test_criterion_09_runtime(ml100k_suite):
    recs = [r for r in ml100k_suite if r.algorithm in KNN + MF]
    lo_hi = {}
    for alg in KNN + MF:
        rt = {p: np.mean([r.runtime_s for r in recs if r.algorithm == alg and r.portion == p]) for p in (0.1, 1.0)}
        lo_hi[alg] = (rt[0.1], rt[1.0])
    profile = build_runtime_profile(recs).relative_runtime
    rel = [profile[p] for p in sorted(profile)]
    increasing = all(a < b for a, b in zip(rel, rel[1:]))
    ok = all(lo < hi for lo, hi in lo_hi.values()) and increasing
    verdict(9, "runtime monotonicity", ok,
            ", ".join(f"{a} {lo:.3f}s<{hi:.3f}s" for a, (lo, hi) in lo_hi.items())
            + "; relative runtime " + " ".join(f"{v:.3f}" for v in rel))


# 10 --------------------------------------------------------------------------


@pytest.mark.slow
def test_criterion_10_reproducibility(ml100k_required, tmp_path):
    files = []
    for run in ("a", "b"):
        cfg = suite_config(ml100k_required, tmp_path / run, ["Popularity", "ItemKNN"], (0.5, 1.0), (21, 42))
        store = run_experiment(cfg)
        files.append((tmp_path / run / "records.csv").read_bytes())
    ok = files[0] == files[1] and len(store.records) == 8
    verdict(10, "reproducibility", ok,
            f"{len(store.records)} records, records.csv byte-identical: {files[0] == files[1]}")
