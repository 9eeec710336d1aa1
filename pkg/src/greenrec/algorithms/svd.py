from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from .base import Recommender, TrainData


def randomized_svd(a, rank: int, oversample: int = 10, power_iters: int = 4, rng=None):
    """Truncated SVD by randomized range finding with subspace iteration.

    Works on dense arrays and scipy sparse matrices. Returns ``(U, s, Vt)``
    with ``min(rank, *a.shape)`` components, singular values descending.
    """
    rng = np.random.default_rng(rng)
    m, n = a.shape
    rank = min(int(rank), m, n)
    width = min(rank + int(oversample), m, n)
    q, _ = np.linalg.qr(a @ rng.standard_normal((n, width)))
    for _ in range(int(power_iters)):
        # re-orthonormalise after each product to keep small singular directions
        z, _ = np.linalg.qr(a.T @ q)
        q, _ = np.linalg.qr(a @ z)
    b = np.asarray((a.T @ q).T)
    ub, s, vt = np.linalg.svd(b, full_matrices=False)
    return q @ ub[:, :rank], s[:rank], vt[:rank]


class SVD(Recommender):
    """Rank-f reconstruction of the user-item matrix.

    Explicit ratings are shifted by the global mean on observed entries when
    ``centering="mean"`` and used as-is with ``"none"``; unobserved entries
    are 0. Implicit data is binary.
    """

    kind = "SVD"
    defaults = {"factors": 50, "oversample": 10, "power_iters": 4, "centering": "mean"}
    grid = {"factors": [50, 100], "centering": ["mean", "none"]}
    size_params = ("factors",)
    state_fields = ("U", "s", "Vt", "mu")

    def _fit(self, train: TrainData) -> None:
        if self.hp["centering"] not in ("mean", "none"):
            raise ValueError("centering must be 'mean' or 'none'")
        if train.explicit and self.hp["centering"] == "mean":
            m = train.matrix.copy()
            self.mu = float(train.ratings.mean())
            m.data = m.data - self.mu
        elif train.explicit:
            m = train.matrix
            self.mu = 0.0
        else:
            m = train.binary
            self.mu = 0.0
        self.U, self.s, self.Vt = randomized_svd(
            sp.csr_matrix(m),
            self.hp["factors"],
            self.hp["oversample"],
            self.hp["power_iters"],
            rng=self.seed,
        )

    def _score_known(self, users):
        return (self.U[users] * self.s) @ self.Vt
