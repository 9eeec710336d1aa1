"""Run a config, then print seed-mean nDCG@10 and the runtime profile per portion.

    python3 scripts/run_ml100k_suite.py [configs/ml100k.yaml]
"""

import sys
import time

import pandas as pd

from greenrec.evaluation import records_frame
from greenrec.runner import ExperimentConfig, run_experiment
from greenrec.sustainability import build_runtime_profile


def main(path: str = "configs/ml100k.yaml") -> None:
    cfg = ExperimentConfig.load(path)
    start = time.perf_counter()
    store = run_experiment(cfg)
    print(f"{len(store.records)} records, {len(store.skips)} skips in {time.perf_counter() - start:.0f}s")
    df = records_frame(store.records)
    with pd.option_context("display.width", 200, "display.max_columns", 20):
        for method, g in df.groupby("method"):
            print(f"\nmean nDCG@10 ({method})")
            print(g.pivot_table(index="portion", columns="algorithm", values="ndcg_at_10").round(4))
            print(f"\nmean runtime_s ({method})")
            print(g.pivot_table(index="portion", columns="algorithm", values="runtime_s").round(3))
            prof = build_runtime_profile(r for r in store.records if r.method == method)
            print("\nrelative runtime:", {p: round(v, 3) for p, v in prof.relative_runtime.items()})


if __name__ == "__main__":
    main(*sys.argv[1:])
