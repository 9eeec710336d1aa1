"""User- and item-neighbourhood collaborative filtering with cosine similarity."""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from .base import Recommender, TrainData

SIGNALS = ("centered", "binary")


def interaction_vectors(train: TrainData, signal: str = "centered") -> sp.csr_matrix:
    """User x item matrix the similarities are computed on.

    Explicit data with ``signal="centered"`` subtracts each user's mean
    rating from their observed ratings; everything else is binary.
    """
    if signal not in SIGNALS:
        raise ValueError(f"signal must be one of {SIGNALS}")
    if not train.explicit or signal == "binary":
        return train.binary.copy()
    m = train.matrix.astype(np.float64).copy()
    counts = np.diff(m.indptr)
    means = np.zeros(m.shape[0])
    np.divide(np.asarray(m.sum(axis=1)).ravel(), counts, out=means, where=counts > 0)
    m.data = m.data - np.repeat(means, counts)
    return m


def cosine_similarity(x: sp.csr_matrix) -> np.ndarray:
    """Dense row-by-row cosine similarity; zero rows get similarity 0."""
    x = sp.csr_matrix(x, dtype=np.float64)
    norms = np.sqrt(np.asarray(x.multiply(x).sum(axis=1)).ravel())
    inv = np.zeros_like(norms)
    np.divide(1.0, norms, out=inv, where=norms > 0)
    xn = sp.diags(inv) @ x
    sim = (xn @ xn.T).toarray()
    sim = 0.5 * (sim + sim.T)
    nz = norms > 0
    sim[np.flatnonzero(nz), np.flatnonzero(nz)] = 1.0
    return sim


def top_neighbours(sim: np.ndarray, m: int, min_sim: float = 0.0) -> tuple[np.ndarray, np.ndarray]:
    """Per row, the m most similar other rows with similarity > min_sim.

    Returns (index, similarity) arrays of shape (n, m) padded with -1 / 0.
    Ties go to the smaller index.
    """
    n = sim.shape[0]
    m = max(0, min(int(m), n - 1))
    idx = np.full((n, m), -1, dtype=np.int64)
    val = np.zeros((n, m))
    if m == 0:
        return idx, val
    s = sim.copy()
    np.fill_diagonal(s, -np.inf)
    s[s <= min_sim] = -np.inf
    order = np.argsort(-s, axis=1, kind="stable")[:, :m]
    top = np.take_along_axis(s, order, axis=1)
    ok = np.isfinite(top)
    idx[ok] = order[ok]
    val[ok] = top[ok]
    return idx, val


def _neighbour_matrix(idx: np.ndarray, val: np.ndarray, n_cols: int) -> sp.csr_matrix:
    rows = np.repeat(np.arange(idx.shape[0]), idx.shape[1])
    ok = idx.ravel() >= 0
    return sp.csr_matrix(
        (val.ravel()[ok], (rows[ok], idx.ravel()[ok])), shape=(idx.shape[0], n_cols)
    )


class _KNN(Recommender):
    defaults = {"neighbors": 20, "signal": "centered", "min_sim": 0.0}
    grid = {"neighbors": [20, 50], "signal": ["centered", "binary"]}
    size_params = ("neighbors",)
    state_fields = ("nbr_index", "nbr_sim", "x_indptr", "x_indices", "x_data", "offset")

    def _vectors(self, train: TrainData) -> sp.csr_matrix:
        x = interaction_vectors(train, self.hp["signal"])
        x.sort_indices()
        self.x_indptr, self.x_indices, self.x_data = x.indptr, x.indices, x.data
        # centred signals are shifted back by the user mean so scores read as ratings
        self.offset = np.zeros(train.n_users)
        if train.explicit and self.hp["signal"] == "centered":
            counts = np.diff(train.matrix.indptr)
            sums = np.asarray(train.matrix.sum(axis=1)).ravel()
            np.divide(sums, counts, out=self.offset, where=counts > 0)
        return x

    @property
    def x(self) -> sp.csr_matrix:
        return sp.csr_matrix(
            (self.x_data, self.x_indices, self.x_indptr), shape=(self.n_users, self.n_items)
        )


class UserKNN(_KNN):
    """Similarity-weighted average of the M nearest neighbours' signals.

    score(u, i) = sum_v sim(u, v) x_vi / sum_v |sim(u, v)| over u's
    neighbours v. ``x`` is the zero-filled signal the similarities were
    computed on, so a neighbour who never saw i contributes 0 to the
    numerator and its weight to the denominator.
    """

    kind = "UserKNN"

    def _fit(self, train: TrainData) -> None:
        x = self._vectors(train)
        self.nbr_index, self.nbr_sim = top_neighbours(
            cosine_similarity(x), self.hp["neighbors"], self.hp["min_sim"]
        )

    def _score_known(self, users):
        w = _neighbour_matrix(self.nbr_index[users], self.nbr_sim[users], self.n_users)
        num = (w @ self.x).toarray()
        den = np.abs(self.nbr_sim[users]).sum(axis=1, keepdims=True)
        out = np.zeros_like(num)
        np.divide(num, den, out=out, where=den > 0)
        return out + self.offset[users, None]


class ItemKNN(_KNN):
    """Sum of similarities to the user's items, weighted by the user's signal.

    score(u, i) = sum_{j seen by u} sim(i, j) x_uj, with sim(i, .) kept only
    for i's M nearest neighbours.
    """

    kind = "ItemKNN"

    def _fit(self, train: TrainData) -> None:
        x = self._vectors(train)
        self.nbr_index, self.nbr_sim = top_neighbours(
            cosine_similarity(x.T.tocsr()), self.hp["neighbors"], self.hp["min_sim"]
        )

    def _score_known(self, users):
        s = _neighbour_matrix(self.nbr_index, self.nbr_sim, self.n_items)
        return (self.x[users] @ s.T).toarray()
