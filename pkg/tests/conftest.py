import os
from pathlib import Path

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from greenrec.ingest import Dataset, Feedback, Interaction

settings.register_profile(
    "default", deadline=None, suppress_health_check=[HealthCheck.too_slow], max_examples=100
)
settings.register_profile("ci", parent=settings.get_profile("default"), max_examples=200)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

ROOT = Path(__file__).resolve().parents[1]


def ml100k_path() -> Path:
    return Path(os.environ.get("ML100K_PATH", ROOT / "data" / "ml-100k" / "u.data"))


@pytest.fixture(scope="session")
def ml100k_file():
    path = ml100k_path()
    if not path.is_file():
        pytest.skip(f"MovieLens 100K not found at {path}; run scripts/fetch_ml100k.py")
    return path


def make_dataset(users, items, ratings=None, name="toy"):
    """Dataset straight from integer columns; ids are the stringified ints."""
    users = np.asarray(users, dtype=np.int64)
    items = np.asarray(items, dtype=np.int64)
    rows = [
        Interaction(f"u{u}", f"i{i}", None if ratings is None else float(r))
        for u, i, r in zip(users, items, ratings if ratings is not None else [None] * len(users))
    ]
    feedback = Feedback.IMPLICIT if ratings is None else Feedback.EXPLICIT
    return Dataset.from_interactions(rows, feedback, name)


def random_dataset(rng, n_users, n_items, per_user_min=3, per_user_max=None, explicit=True):
    """Each user rates a random subset of distinct items."""
    per_user_max = per_user_max or n_items
    users, items = [], []
    for u in range(n_users):
        n = int(rng.integers(per_user_min, per_user_max + 1))
        for i in rng.choice(n_items, size=n, replace=False):
            users.append(u)
            items.append(int(i))
    ratings = rng.integers(1, 6, size=len(users)).astype(float) if explicit else None
    return make_dataset(users, items, ratings)


# acceptance verdicts, printed as one line per criterion at the end of the run
VERDICTS: dict[int, tuple[str, bool, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(VERDICTS):
        name, ok, detail = VERDICTS[number]
        terminalreporter.write_line(f"criterion {number:2d} {'PASS' if ok else 'FAIL'}  {name}: {detail}")
