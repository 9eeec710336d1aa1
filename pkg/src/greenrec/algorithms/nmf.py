from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from .base import Recommender, TrainData

EPS = 1e-12


def frobenius_loss(x, w: np.ndarray, h: np.ndarray) -> float:
    """||X - WH||_F^2 without forming WH when X is sparse."""
    if sp.issparse(x):
        xx = float(x.multiply(x).sum())
        cross = float(np.einsum("ij,ij->", w, np.asarray(x @ h.T)))
    else:
        x = np.asarray(x, dtype=np.float64)
        xx = float((x * x).sum())
        cross = float(np.einsum("ij,ij->", w, x @ h.T))
    quad = float(np.einsum("ij,ij->", w.T @ w, h @ h.T))
    return max(xx - 2.0 * cross + quad, 0.0)


def nmf_multiplicative(x, rank: int, iterations: int = 100, rng=None, track_loss: bool = False):
    """Lee-Seung multiplicative updates for min ||X - WH||_F^2, W, H >= 0.

    Returns ``(W, H, losses)``; ``losses`` holds the loss after
    initialisation and after every iteration when ``track_loss`` is set.
    """
    rng = np.random.default_rng(rng)
    m, n = x.shape
    if sp.issparse(x):
        x = sp.csr_matrix(x, dtype=np.float64)
        mean = x.sum() / (m * n)
    else:
        x = np.asarray(x, dtype=np.float64)
        mean = x.mean()
    if (x.data if sp.issparse(x) else x).min(initial=0.0) < 0:
        raise ValueError("NMF input must be nonnegative")
    scale = np.sqrt(max(mean, EPS) / rank)
    w = rng.uniform(0.0, 1.0, (m, rank)) * scale
    h = rng.uniform(0.0, 1.0, (rank, n)) * scale
    xt = x.T.tocsr() if sp.issparse(x) else x.T
    losses = [frobenius_loss(x, w, h)] if track_loss else []
    for _ in range(int(iterations)):
        h *= np.asarray(xt @ w).T / ((w.T @ w) @ h + EPS)
        w *= np.asarray(x @ h.T) / (w @ (h @ h.T) + EPS)
        if track_loss:
            losses.append(frobenius_loss(x, w, h))
    return w, h, losses


class NMF(Recommender):
    """Nonnegative factors of the zero-filled rating (or binary) matrix."""

    kind = "NMF"
    defaults = {"factors": 50, "iterations": 100}
    grid = {"factors": [50, 100]}
    size_params = ("factors",)
    state_fields = ("W", "H")

    def _fit(self, train: TrainData) -> None:
        x = train.matrix if train.explicit else train.binary
        self.W, self.H, _ = nmf_multiplicative(
            x, int(self.hp["factors"]), int(self.hp["iterations"]), rng=self.seed
        )

    def _score_known(self, users):
        return self.W[users] @ self.H
