"""Experiment grid: datasets x methods x portions x algorithms x seeds.

Each (dataset, method, seed) is one work unit: the dataset is split once
and every algorithm/portion cell of the unit trains on those bundles.
Hyperparameters are chosen by validation nDCG@k; the reported runtime is
the selected configuration's training time plus its test evaluation.
"""

from __future__ import annotations

import hashlib
import itertools
import json
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from functools import lru_cache
from pathlib import Path
from typing import Any, Iterable

import pandas as pd
import yaml

from . import __version__
from .algorithms import RecommenderSpec, TrainData, resolve_kind, train
from .algorithms.mf import warmup
from .evaluation import (
    MetricRecord,
    aggregate_groups,
    evaluate_bundle,
    normalized_table,
    relative_table,
    write_records,
)
from .ingest import Feedback, get_schema, load_dataset
from .preprocess import preprocess
from .sampling import DEFAULT_PORTIONS, DownsamplePlan, Method, SplitConfig, make_splits
from .sustainability import EmissionModel, build_runtime_profile, co2_table

log = logging.getLogger(__name__)

CONFIG_VERSION = 1
DEFAULT_SEEDS = (21, 42, 63, 84, 105)
REPORT_KINDS = ("normalized_heatmap", "relative_curves", "runtime_profile", "co2_table")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class DatasetConfig:
    path: str
    schema: str = "ml100k"
    feedback: str = "explicit"
    prune_k: int = 10
    name: str | None = None

    @property
    def label(self) -> str:
        return self.name or Path(self.path).stem


@dataclass(frozen=True)
class AlgorithmConfig:
    """One algorithm and its search space.

    ``grid`` maps hyperparameter names to candidate lists (None means the
    algorithm's default grid); ``fixed`` pins the rest.
    """

    kind: str
    grid: dict[str, list] | None = None
    fixed: dict[str, Any] = field(default_factory=dict)

    @property
    def name(self) -> str:
        return resolve_kind(self.kind).kind

    def combos(self) -> list[dict[str, Any]]:
        """Grid points, smallest model first (by the kind's size parameters)."""
        cls = resolve_kind(self.kind)
        grid = cls.grid if self.grid is None else self.grid
        names = sorted(grid)
        points = [
            {**self.fixed, **dict(zip(names, values))}
            for values in itertools.product(*(grid[n] for n in names))
        ] or [dict(self.fixed)]
        size = lambda hp: tuple(hp.get(p, cls.defaults.get(p, 0)) for p in cls.size_params)
        return sorted(points, key=size)


@dataclass(frozen=True)
class ExperimentConfig:
    datasets: tuple[DatasetConfig, ...]
    algorithms: tuple[AlgorithmConfig, ...]
    methods: tuple[str, ...] = (Method.USER_BASED.value, Method.USER_SUBSET.value)
    portions: tuple[float, ...] = DEFAULT_PORTIONS
    seeds: tuple[int, ...] = DEFAULT_SEEDS
    output_dir: str = "results"
    parallelism: int = 1
    train_frac: float = 0.8
    val_frac: float = 0.1
    test_frac: float = 0.1
    k: int = 10
    tune_per_portion: bool = True
    exclude_validation: bool = False
    version: int = CONFIG_VERSION

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        raw = dict(raw)
        try:
            datasets = tuple(DatasetConfig(**d) for d in raw.pop("datasets"))
            algorithms = tuple(
                AlgorithmConfig(**a) if isinstance(a, dict) else AlgorithmConfig(a)
                for a in raw.pop("algorithms")
            )
        except (KeyError, TypeError) as exc:
            raise ConfigError(f"bad config: {exc}") from None
        for key in ("methods", "portions", "seeds"):
            if key in raw:
                raw[key] = tuple(raw[key])
        if "portions" in raw:
            raw["portions"] = tuple(float(p) for p in raw["portions"])
        unknown = set(raw) - {f for f in cls.__dataclass_fields__}
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(datasets=datasets, algorithms=algorithms, **raw)

    @classmethod
    def load(cls, path: str | Path) -> "ExperimentConfig":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(yaml.safe_load(fh))

    def to_dict(self) -> dict:
        d = asdict(self)
        for key in ("methods", "portions", "seeds"):
            d[key] = list(d[key])
        return d

    def dump(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            yaml.safe_dump(self.to_dict(), fh, sort_keys=False)

    def config_hash(self) -> str:
        """Hash of everything that affects results (not output_dir/parallelism)."""
        d = self.to_dict()
        d.pop("output_dir")
        d.pop("parallelism")
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()[:16]

    def validate(self) -> None:
        if self.version != CONFIG_VERSION:
            raise ConfigError(f"config version {self.version} unsupported")
        if not self.seeds or len(set(self.seeds)) != len(self.seeds):
            raise ConfigError("seeds must be non-empty and distinct")
        if 1.0 not in self.portions:
            raise ConfigError("portions must include 1.0 (the relative-performance baseline)")
        DownsamplePlan(Method.USER_BASED, self.portions)
        SplitConfig(self.train_frac, self.val_frac, self.test_frac)
        for m in self.methods:
            Method(m)
        if self.parallelism < 1:
            raise ConfigError("parallelism must be >= 1")
        labels = [d.label for d in self.datasets]
        if len(set(labels)) != len(labels):
            raise ConfigError("dataset names must be unique")
        names = [a.name for a in self.algorithms]
        if len(set(names)) != len(names):
            raise ConfigError("each algorithm kind may appear once")
        for d in self.datasets:
            if not Path(d.path).is_file():
                raise ConfigError(f"dataset file not found: {d.path}")
            get_schema(d.schema)
            Feedback(d.feedback)
        for a in self.algorithms:
            cls = resolve_kind(a.kind)
            for hp in a.combos():
                cls(hp)

    def cells(self) -> list[tuple]:
        return [
            (d.label, m, float(p), a.name, int(s))
            for d in self.datasets
            for m in self.methods
            for p in self.portions
            for a in self.algorithms
            for s in self.seeds
        ]


def derive_seed(*parts) -> int:
    """Stable 31-bit seed from arbitrary key parts (blake2b of their repr)."""
    digest = hashlib.blake2b(repr(parts).encode(), digest_size=8).digest()
    return int.from_bytes(digest, "little") & 0x7FFFFFFF


@dataclass
class ResultStore:
    records: list[MetricRecord] = field(default_factory=list)
    skips: list[dict] = field(default_factory=list)
    manifest: dict = field(default_factory=dict)

    def cells_done(self) -> set[tuple]:
        done = {(r.dataset, r.method, r.portion, r.algorithm, r.seed) for r in self.records}
        done |= {
            (s["dataset"], s["method"], float(s["portion"]), s["algorithm"], int(s["seed"]))
            for s in self.skips
        }
        return done

    def add(self, records: Iterable[MetricRecord], skips: Iterable[dict]) -> None:
        keys = {(r.cell, r.hyperparams) for r in self.records}
        for r in records:
            if (r.cell, r.hyperparams) in keys:
                raise ValueError(f"duplicate record for {r.cell}")
            keys.add((r.cell, r.hyperparams))
            self.records.append(r)
        self.skips.extend(skips)

    def sorted(self) -> "ResultStore":
        return ResultStore(
            sorted(self.records, key=lambda r: (r.cell, r.hyperparams)),
            sorted(self.skips, key=_skip_key),
            dict(self.manifest),
        )

    # persistence ------------------------------------------------------------

    def save(self, out_dir: str | Path) -> None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        cols = tuple(c for c in MetricRecord.__dataclass_fields__ if c != "runtime_s")
        write_records(self.records, out / "records.csv", columns=cols)
        write_records(
            self.records, out / "runtimes.csv",
            columns=("dataset", "algorithm", "method", "portion", "seed", "hyperparams", "runtime_s"),
        )
        skip_cols = ["dataset", "algorithm", "method", "portion", "seed", "reason"]
        pd.DataFrame(sorted(self.skips, key=_skip_key), columns=skip_cols).to_csv(
            out / "skips.csv", index=False, lineterminator="\n"
        )
        with open(out / "manifest.json", "w", encoding="utf-8") as fh:
            json.dump(self.manifest, fh, indent=2, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, out_dir: str | Path) -> "ResultStore":
        out = Path(out_dir)
        with open(out / "manifest.json", encoding="utf-8") as fh:
            manifest = json.load(fh)
        opts = dict(keep_default_na=False, float_precision="round_trip",
                    dtype={"dataset": str, "algorithm": str, "method": str, "hyperparams": str})
        rec = pd.read_csv(out / "records.csv", **opts)
        rt = pd.read_csv(out / "runtimes.csv", **opts)
        keys = ["dataset", "algorithm", "method", "portion", "seed", "hyperparams"]
        df = rec.merge(rt, on=keys, how="left", validate="one_to_one")
        records = [
            MetricRecord(
                dataset=str(r.dataset), algorithm=str(r.algorithm), method=str(r.method),
                portion=float(r.portion), seed=int(r.seed), ndcg_at_10=float(r.ndcg_at_10),
                runtime_s=float(r.runtime_s), n_eval_users=int(r.n_eval_users),
                hyperparams=str(r.hyperparams),
            )
            for r in df.itertuples(index=False)
        ]
        skips_path = out / "skips.csv"
        skips = []
        if skips_path.exists() and skips_path.stat().st_size:
            sk = pd.read_csv(skips_path, keep_default_na=False, float_precision="round_trip",
                             dtype={"dataset": str, "algorithm": str, "method": str})
            skips = [
                {**row, "portion": float(row["portion"]), "seed": int(row["seed"])}
                for row in sk.to_dict("records")
            ]
        return cls(records, skips, manifest)


def _skip_key(s: dict) -> tuple:
    return (s["dataset"], s["method"], float(s["portion"]), s["algorithm"], int(s["seed"]))


@lru_cache(maxsize=8)
def _prepared(ds: DatasetConfig):
    d = load_dataset(ds.path, ds.schema, ds.feedback, name=ds.label)
    d, _ = preprocess(d, ds.prune_k)
    return d


def _fit(kind, hp, seed, data, catalog):
    start = time.perf_counter()
    model = train(RecommenderSpec(kind, hp, seed), data, catalog)
    return model, time.perf_counter() - start


def _evaluate(model, bundle, target, cfg):
    start = time.perf_counter()
    ndcg, n_users = evaluate_bundle(model, bundle, cfg.k, target, cfg.exclude_validation)
    return ndcg, n_users, time.perf_counter() - start


def _select(algo: AlgorithmConfig, seed: int, data, catalog, bundle, cfg):
    """Best grid point on validation, with its fitted model and fit time.

    The first (smallest) grid point wins ties.
    """
    combos = algo.combos()
    if len(combos) == 1:
        model, fit_s = _fit(algo.name, combos[0], seed, data, catalog)
        return combos[0], model, fit_s
    best = None
    for hp in combos:
        model, fit_s = _fit(algo.name, hp, seed, data, catalog)
        score = _evaluate(model, bundle, "val", cfg)[0]
        if best is None or score > best[0]:
            best = (score, hp, model, fit_s)
    return best[1:]


def run_unit(cfg: ExperimentConfig, dataset: DatasetConfig, method: str, seed: int,
             only: set[tuple] | None = None) -> tuple[list[MetricRecord], list[dict]]:
    """All algorithm x portion cells of one (dataset, method, seed)."""
    label = dataset.label
    wanted = lambda p, a: only is None or (label, method, float(p), a, seed) in only
    records, skips = [], []
    warmup()
    try:
        d = _prepared(dataset)
        split_cfg = SplitConfig(cfg.train_frac, cfg.val_frac, cfg.test_frac, seed)
        bundles = make_splits(d, split_cfg, DownsamplePlan(method, cfg.portions, seed))
    except Exception as exc:  # recorded per cell; the grid keeps going
        reason = f"error: {type(exc).__name__}: {exc}"
        for p in cfg.portions:
            for a in cfg.algorithms:
                if wanted(p, a.name):
                    skips.append(_skip(label, a.name, method, p, seed, reason))
        return records, skips
    by_portion = {b.portion: b for b in bundles}
    # tuning once at full size needs the p=1.0 selection before other portions
    order = sorted(cfg.portions, key=lambda p: (p != 1.0, p))
    for algo in cfg.algorithms:
        cls = resolve_kind(algo.kind)
        if cls.requires_explicit and not d.explicit:
            for p in cfg.portions:
                if wanted(p, algo.name):
                    skips.append(_skip(label, algo.name, method, p, seed,
                                       "requires explicit ratings; dataset is implicit"))
            continue
        reused = None
        for p in order:
            if not wanted(p, algo.name) and (cfg.tune_per_portion or p != 1.0):
                continue
            bundle = by_portion[p]
            try:
                model_seed = derive_seed(seed, label, method, float(p), algo.name)
                data = TrainData.from_rows(d, bundle.train)
                if cfg.tune_per_portion or reused is None:
                    hp, model, fit_s = _select(algo, model_seed, data, d.n_items, bundle, cfg)
                    reused = hp
                else:
                    hp = reused
                    model, fit_s = _fit(algo.name, hp, model_seed, data, d.n_items)
                if not wanted(p, algo.name):
                    continue
                ndcg, n_users, eval_s = _evaluate(model, bundle, "test", cfg)
                runtime = fit_s + eval_s
                records.append(MetricRecord(
                    dataset=label, algorithm=algo.name, method=method, portion=float(p),
                    seed=seed, ndcg_at_10=float(ndcg), runtime_s=float(runtime),
                    n_eval_users=n_users, hyperparams=json.dumps(hp, sort_keys=True),
                ))
            except Exception as exc:
                log.exception("cell %s failed", (label, method, p, algo.name, seed))
                skips.append(_skip(label, algo.name, method, p, seed,
                                   f"error: {type(exc).__name__}: {exc}"))
    return records, skips


def _skip(dataset, algorithm, method, portion, seed, reason) -> dict:
    return {"dataset": dataset, "algorithm": algorithm, "method": method,
            "portion": float(portion), "seed": int(seed), "reason": reason}


def _units(cfg: ExperimentConfig, missing: set[tuple] | None):
    for ds in cfg.datasets:
        for m in cfg.methods:
            for s in cfg.seeds:
                if missing is None or any(
                    c[0] == ds.label and c[1] == m and c[4] == s for c in missing
                ):
                    yield ds, m, int(s)


def _execute(cfg: ExperimentConfig, store: ResultStore, missing: set[tuple] | None) -> ResultStore:
    units = list(_units(cfg, missing))
    if cfg.parallelism > 1 and len(units) > 1:
        with ProcessPoolExecutor(max_workers=cfg.parallelism) as pool:
            futures = [pool.submit(run_unit, cfg, ds, m, s, missing) for ds, m, s in units]
            results = [f.result() for f in futures]
    else:
        results = [run_unit(cfg, ds, m, s, missing) for ds, m, s in units]
    for records, skips in results:
        store.add(records, skips)
    return store.sorted()


def _manifest(cfg: ExperimentConfig) -> dict:
    return {
        "config_hash": cfg.config_hash(),
        "toolkit_version": __version__,
        "config_version": cfg.version,
        "grid_cells": len(cfg.cells()),
        "started": datetime.now(timezone.utc).isoformat(timespec="seconds"),
    }


def run_experiment(cfg: ExperimentConfig, save: bool = True) -> ResultStore:
    """Run every cell; per-cell failures become skip entries."""
    cfg.validate()
    store = ResultStore(manifest=_manifest(cfg))
    store = _execute(cfg, store, None)
    store.manifest["finished"] = datetime.now(timezone.utc).isoformat(timespec="seconds")
    if save:
        store.save(cfg.output_dir)
    return store


def resume(cfg: ExperimentConfig, store: ResultStore, save: bool = True) -> ResultStore:
    """Run only the cells ``store`` has neither a record nor a skip for."""
    cfg.validate()
    if store.manifest.get("config_hash") != cfg.config_hash():
        raise ConfigError("store was produced by a different configuration; refusing to mix")
    missing = set(cfg.cells()) - store.cells_done()
    if not missing:
        return store
    out = _execute(cfg, ResultStore(list(store.records), list(store.skips), dict(store.manifest)),
                   missing)
    out.manifest["finished"] = datetime.now(timezone.utc).isoformat(timespec="seconds")
    if save:
        out.save(cfg.output_dir)
    return out


# reports ------------------------------------------------------------------------


def report(store: ResultStore, kind: str, out_dir: str | Path,
           emission: EmissionModel = EmissionModel()) -> list[Path]:
    """Write one report table (CSV) plus its plot data (JSON)."""
    if not store.records:
        raise ValueError("empty result store")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []

    def emit(name: str, df: pd.DataFrame, plot: dict | None = None):
        csv_path = out / f"{name}.csv"
        df.to_csv(csv_path, index=False, lineterminator="\n")
        written.append(csv_path)
        if plot is not None:
            json_path = out / f"{name}.json"
            with open(json_path, "w", encoding="utf-8") as fh:
                json.dump(plot, fh, indent=2, sort_keys=True)
                fh.write("\n")
            written.append(json_path)

    if kind == "normalized_heatmap":
        table = normalized_table(store.records)
        plot = {}
        for (ds, method), g in table.groupby(["dataset", "method"], sort=True):
            mat = g.pivot(index="algorithm", columns="portion", values="normalized").sort_index()
            plot.setdefault(ds, {})[method] = {
                "algorithms": list(mat.index),
                "portions": [float(p) for p in mat.columns],
                "values": [[None if pd.isna(v) else float(v) for v in row] for row in mat.to_numpy()],
            }
        emit("normalized_heatmap", table, plot)
    elif kind == "relative_curves":
        _require_baseline(store)
        rel = relative_table(store.records)
        emit("relative_curves", rel, _curves(rel, ["dataset", "method", "algorithm"], "relative_pct"))
        for grouping in ("by_algorithm_group", "by_dataset_group"):
            agg = aggregate_groups(store.records, grouping)
            emit(f"relative_{grouping}", agg, _curves(agg, ["method", "group"], "mean", "spread"))
    elif kind in ("runtime_profile", "co2_table"):
        _require_baseline(store)
        frames = []
        for method in sorted({r.method for r in store.records}):
            prof = build_runtime_profile(r for r in store.records if r.method == method)
            df = prof.to_frame() if kind == "runtime_profile" else co2_table(
                [min(max(v, 0.0), 1.0) for v in prof.relative_runtime.values()], emission
            ).assign(portion=list(prof.relative_runtime))
            frames.append(df.assign(method=method))
        table = pd.concat(frames, ignore_index=True)
        value = "relative_runtime" if kind == "runtime_profile" else "co2e_savings_kg"
        emit(kind, table, _curves(table, ["method"], value))
    else:
        raise ValueError(f"unknown report kind {kind!r}; choose from {REPORT_KINDS}")
    return written


def _require_baseline(store: ResultStore) -> None:
    if not any(r.portion == 1.0 for r in store.records):
        raise ValueError("report needs p=1.0 baseline records")


def _curves(df: pd.DataFrame, keys: list[str], value: str, spread: str | None = None) -> dict:
    out: dict = {}
    for key, g in df.groupby(keys, sort=True):
        key = key if isinstance(key, tuple) else (key,)
        g = g.sort_values("portion")
        entry = {"portions": [float(p) for p in g["portion"]],
                 value: [None if pd.isna(v) else float(v) for v in g[value]]}
        if spread:
            entry[spread] = [float(v) for v in g[spread]]
        out["/".join(map(str, key))] = entry
    return out
