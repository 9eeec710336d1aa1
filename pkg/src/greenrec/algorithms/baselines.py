from __future__ import annotations

import numpy as np

from .base import Recommender, TrainData


class RandomRecommender(Recommender):
    """Uniform scores drawn from a generator keyed by (seed, user)."""

    kind = "Random"

    def _fit(self, train: TrainData) -> None:
        pass

    def _score_known(self, users):
        return np.stack(
            [np.random.default_rng([self.seed, int(u)]).random(self.n_items) for u in users]
        )


class Popularity(Recommender):
    """Scores each item by its number of training interactions."""

    kind = "Popularity"

    def _fit(self, train: TrainData) -> None:
        pass

    def _score_known(self, users):
        return np.broadcast_to(self.item_counts.astype(np.float64), (users.size, self.n_items))


class Bias(Recommender):
    """Global mean plus damped item and user offsets.

    b_i = sum(r - mu) / (n_i + damping), then
    b_u = sum(r - mu - b_i) / (n_u + damping).
    """

    kind = "Bias"
    defaults = {"damping": 0.0}
    grid = {"damping": [0.0, 5.0]}
    requires_explicit = True
    state_fields = ("mu", "user_bias", "item_bias")

    def _fit(self, train: TrainData) -> None:
        lam = float(self.hp["damping"])
        if lam < 0:
            raise ValueError("damping must be >= 0")
        r = train.ratings
        self.mu = float(r.mean())
        self.item_bias = _damped_mean(train.items, r - self.mu, train.n_items, lam)
        resid = r - self.mu - self.item_bias[train.items]
        self.user_bias = _damped_mean(train.users, resid, train.n_users, lam)

    def _score_known(self, users):
        return self.mu + self.user_bias[users, None] + self.item_bias[None, :]

    def _fallback(self):
        return np.full(self.n_items, self.mu)


def _damped_mean(keys: np.ndarray, values: np.ndarray, n: int, damping: float) -> np.ndarray:
    sums = np.bincount(keys, weights=values, minlength=n)
    denom = np.bincount(keys, minlength=n) + damping
    out = np.zeros(n)
    np.divide(sums, denom, out=out, where=denom > 0)
    return out
