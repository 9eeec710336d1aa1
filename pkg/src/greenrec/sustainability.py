"""Runtime profiles and modelled CO2e savings from shorter training runs.

Emissions are assumed linear in runtime: a run that takes a fraction
``rel`` of the full-data runtime saves ``(1 - rel)`` of the full-data
energy, scaled by tuning configurations, grid intensity and a workflow
multiplier for prototyping and reruns.
"""

from __future__ import annotations

import time
from contextlib import contextmanager
from dataclasses import dataclass
from typing import Iterable, Iterator

import pandas as pd

from .evaluation import MetricRecord, records_frame


@dataclass(frozen=True)
class EmissionModel:
    energy_per_run_kwh: float = 0.51
    tuning_configs: int = 10
    intensity_g_per_kwh: float = 481.0
    scale_factor: float = 40.0

    def __post_init__(self):
        for name in ("energy_per_run_kwh", "tuning_configs", "intensity_g_per_kwh", "scale_factor"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")

    @property
    def full_run_kg(self) -> float:
        """Emissions of the full-data workflow, i.e. the savings ceiling."""
        return (
            self.energy_per_run_kwh
            * self.tuning_configs
            * self.intensity_g_per_kwh
            * self.scale_factor
            / 1000.0
        )


def co2e_savings_kg(relative_runtime: float, model: EmissionModel = EmissionModel()) -> float:
    if not 0.0 <= relative_runtime <= 1.0:
        raise ValueError(f"relative runtime must lie in [0, 1], got {relative_runtime}")
    return (1.0 - relative_runtime) * model.full_run_kg


@dataclass(frozen=True)
class RuntimeProfile:
    mean_runtime_s: dict[float, float]
    relative_runtime: dict[float, float]

    def to_frame(self, model: EmissionModel | None = None) -> pd.DataFrame:
        df = pd.DataFrame(
            {
                "portion": list(self.mean_runtime_s),
                "mean_runtime_s": list(self.mean_runtime_s.values()),
                "relative_runtime": [self.relative_runtime[p] for p in self.mean_runtime_s],
            }
        )
        if model is not None:
            df["co2e_savings_kg"] = [
                co2e_savings_kg(min(max(r, 0.0), 1.0), model) for r in df["relative_runtime"]
            ]
        return df


def build_runtime_profile(records: Iterable[MetricRecord]) -> RuntimeProfile:
    """Mean runtime per portion (every cell weighted equally), relative to p=1.0."""
    df = records_frame(records)
    if df.empty or not (df["portion"] == 1.0).any():
        raise ValueError("runtime profile needs p=1.0 records as the baseline")
    means = df.groupby("portion")["runtime_s"].mean().sort_index()
    base = float(means.loc[1.0])
    if not base > 0:
        raise ValueError("baseline runtime is zero")
    mean_rt = {float(p): float(v) for p, v in means.items()}
    rel = {p: v / base for p, v in mean_rt.items()}
    rel[1.0] = 1.0
    return RuntimeProfile(mean_rt, rel)


def co2_table(relative_runtimes: Iterable[float], model: EmissionModel = EmissionModel()) -> pd.DataFrame:
    rel = [float(r) for r in relative_runtimes]
    return pd.DataFrame(
        {
            "relative_runtime": rel,
            "runtime_reduction_pct": [100.0 * (1.0 - r) for r in rel],
            "co2e_savings_kg": [co2e_savings_kg(r, model) for r in rel],
        }
    )


class Stopwatch:
    """Accumulates monotonic wall-clock time over ``with`` blocks."""

    def __init__(self):
        self.elapsed = 0.0

    @contextmanager
    def running(self) -> Iterator["Stopwatch"]:
        start = time.perf_counter()
        try:
            yield self
        finally:
            self.elapsed += time.perf_counter() - start
