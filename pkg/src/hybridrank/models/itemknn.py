"""Item-based KNN with shrunk cosine similarity."""
from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from ..data import Dataset
from .base import HyperParams, TrainedRanker, _meta_init

EPS = 1e-9


def rating_matrix(train: Dataset) -> sp.csr_matrix:
    return sp.csr_matrix(
        (train.ratings, (train.users, train.items)), shape=(train.n_users, train.n_items)
    )


def cosine_similarity(ratings: sp.spmatrix, shrink: float = 0.0) -> np.ndarray:
    """Dense item-item similarity r_i.r_j / (|r_i||r_j| + shrink); zero-norm items get 0."""
    ratings = sp.csc_matrix(ratings, dtype=np.float64)
    dots = (ratings.T @ ratings).toarray()
    norms = np.sqrt(np.asarray(ratings.multiply(ratings).sum(axis=0)).ravel())
    denom = np.outer(norms, norms) + shrink
    sim = np.zeros_like(dots)
    np.divide(dots, denom, out=sim, where=denom > 0)
    return sim


def top_k_neighbors(sim: np.ndarray, k: int) -> np.ndarray:
    """Keep the k largest off-diagonal entries per row (ties: lower item index)."""
    n = sim.shape[0]
    sim = sim.copy()
    np.fill_diagonal(sim, 0.0)
    if k >= n - 1:
        return sim
    # stable sort on -sim keeps lower indices first among equal similarities
    order = np.argsort(-sim, axis=1, kind="stable")[:, :k]
    kept = np.zeros_like(sim)
    rows = np.arange(n)[:, None]
    kept[rows, order] = sim[rows, order]
    return kept


class ItemKNN(TrainedRanker):
    kind = "itemknn"

    def __init__(self, neighbors: np.ndarray, train_ratings: sp.csr_matrix, hp: HyperParams, seed: int):
        super().__init__(train_ratings.shape[0], train_ratings.shape[1], hp, seed)
        self.neighbors = neighbors  # (n_items, n_items), row i holds sim(i, j) for j in topk(i)
        self.train_ratings = train_ratings
        self._abs_t = np.abs(neighbors).T.copy()
        self._sim_t = neighbors.T.copy()

    def score_users(self, users: np.ndarray) -> np.ndarray:
        r = self.train_ratings[users]
        rated = r.copy()
        rated.data[:] = 1.0
        num = np.asarray(r @ self._sim_t)
        den = np.asarray(rated @ self._abs_t)
        return num / (den + EPS)

    def state_arrays(self) -> dict[str, np.ndarray]:
        r = self.train_ratings
        return {
            "neighbors": self.neighbors,
            "r_data": r.data,
            "r_indices": r.indices,
            "r_indptr": r.indptr,
        }

    @classmethod
    def from_state(cls, arrays, meta):
        obj = _meta_init(cls, meta)
        r = sp.csr_matrix(
            (arrays["r_data"], arrays["r_indices"], arrays["r_indptr"]),
            shape=(meta["n_users"], meta["n_items"]),
        )
        cls.__init__(obj, arrays["neighbors"], r, obj.hyperparameters, obj.training_seed)
        return obj


def train_itemknn(
    train: Dataset, k_neighbors: int = 100, shrink: float = 0.0, hp: HyperParams | None = None, seed: int = 0
) -> ItemKNN:
    if k_neighbors < 1:
        raise ValueError("k_neighbors must be >= 1")
    if shrink < 0:
        raise ValueError("shrink must be >= 0")
    hp = HyperParams(**{**(hp or HyperParams()).to_dict(), "k_neighbors": k_neighbors, "shrink": shrink})
    r = rating_matrix(train)
    sim = cosine_similarity(r, shrink)
    return ItemKNN(top_k_neighbors(sim, k_neighbors), r, hp, seed)
