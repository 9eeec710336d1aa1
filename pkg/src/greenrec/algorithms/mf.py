"""Matrix factorisation trained by stochastic gradient descent on observed ratings.

Per observation the loss is (r - pred)^2 + reg * (|p_u|^2 + |q_i|^2), plus
reg * (b_u^2 + b_i^2) for the biased variant. The SGD step moves each
parameter by ``-lr/2`` times its gradient.
"""

from __future__ import annotations

import numpy as np
from numba import njit

from .base import Recommender, TrainData


@njit(cache=True)
def _sgd_epoch(users, items, ratings, order, P, Q, bu, bi, mu, lr, reg, biased):
    n_factors = P.shape[1]
    for k in order:
        u = users[k]
        i = items[k]
        pred = 0.0
        for f in range(n_factors):
            pred += P[u, f] * Q[i, f]
        if biased:
            pred += mu + bu[u] + bi[i]
        err = ratings[k] - pred
        if biased:
            bu[u] += lr * (err - reg * bu[u])
            bi[i] += lr * (err - reg * bi[i])
        for f in range(n_factors):
            pu = P[u, f]
            qi = Q[i, f]
            P[u, f] += lr * (err * qi - reg * pu)
            Q[i, f] += lr * (err * pu - reg * qi)


def predict(P, Q, bu, bi, mu, users, items, biased):
    pred = np.einsum("ij,ij->i", P[users], Q[items])
    if biased:
        pred = pred + mu + bu[users] + bi[items]
    return pred


def mf_loss(P, Q, bu, bi, mu, users, items, ratings, reg, biased=False) -> float:
    err = ratings - predict(P, Q, bu, bi, mu, users, items, biased)
    penalty = (P[users] ** 2).sum() + (Q[items] ** 2).sum()
    if biased:
        penalty += (bu[users] ** 2).sum() + (bi[items] ** 2).sum()
    return float((err**2).sum() + reg * penalty)


def mf_gradient(P, Q, bu, bi, mu, users, items, ratings, reg, biased=False):
    """Analytic gradient of :func:`mf_loss` w.r.t. (P, Q, bu, bi)."""
    err = ratings - predict(P, Q, bu, bi, mu, users, items, biased)
    gP = np.zeros_like(P)
    gQ = np.zeros_like(Q)
    np.add.at(gP, users, -2 * err[:, None] * Q[items] + 2 * reg * P[users])
    np.add.at(gQ, items, -2 * err[:, None] * P[users] + 2 * reg * Q[items])
    gbu = np.zeros_like(bu)
    gbi = np.zeros_like(bi)
    if biased:
        np.add.at(gbu, users, -2 * err + 2 * reg * bu[users])
        np.add.at(gbi, items, -2 * err + 2 * reg * bi[items])
    return gP, gQ, gbu, gbi


def sgd_step(P, Q, bu, bi, mu, user, item, rating, lr, reg, biased=False):
    """One in-place SGD update on a single observation."""
    _sgd_epoch(
        np.array([user], dtype=np.int64),
        np.array([item], dtype=np.int64),
        np.array([rating], dtype=np.float64),
        np.zeros(1, dtype=np.int64),
        P, Q, bu, bi, float(mu), float(lr), float(reg), bool(biased),
    )


def warmup() -> None:
    """Compile the SGD kernel so the first timed fit does not pay for it."""
    sgd_step(np.zeros((1, 1)), np.zeros((1, 1)), np.zeros(1), np.zeros(1), 0.0, 0, 0, 1.0, 0.01, 0.0)
    sgd_step(np.zeros((1, 1)), np.zeros((1, 1)), np.zeros(1), np.zeros(1), 0.0, 0, 0, 1.0, 0.01, 0.0,
             biased=True)


class FunkSVD(Recommender):
    kind = "FunkSVD"
    biased = False
    defaults = {"factors": 50, "lr": 0.005, "reg": 0.02, "epochs": 20, "init_std": 0.1}
    grid = {"factors": [50, 100]}
    size_params = ("factors",)
    requires_explicit = True
    state_fields = ("P", "Q", "user_bias", "item_bias", "mu")

    def _fit(self, train: TrainData) -> None:
        rng = np.random.default_rng(self.seed)
        f = int(self.hp["factors"])
        std = float(self.hp["init_std"])
        self.P = rng.normal(0.0, std, (train.n_users, f))
        self.Q = rng.normal(0.0, std, (train.n_items, f))
        self.user_bias = np.zeros(train.n_users)
        self.item_bias = np.zeros(train.n_items)
        self.mu = float(train.ratings.mean()) if self.biased else 0.0
        users = train.users.astype(np.int64)
        items = train.items.astype(np.int64)
        ratings = train.ratings.astype(np.float64)
        for _ in range(int(self.hp["epochs"])):
            order = rng.permutation(len(train)).astype(np.int64)
            _sgd_epoch(
                users, items, ratings, order, self.P, self.Q, self.user_bias, self.item_bias,
                self.mu, float(self.hp["lr"]), float(self.hp["reg"]), self.biased,
            )

    def _score_known(self, users):
        s = self.P[users] @ self.Q.T
        if self.biased:
            s += self.mu + self.user_bias[users, None] + self.item_bias[None, :]
        return s

    def loss(self, train: TrainData) -> float:
        return mf_loss(
            self.P, self.Q, self.user_bias, self.item_bias, self.mu,
            train.users, train.items, train.ratings, float(self.hp["reg"]), self.biased,
        )


class BiasedMF(FunkSVD):
    """FunkSVD with global mean and learned user/item biases."""

    kind = "BiasedMF"
    biased = True
