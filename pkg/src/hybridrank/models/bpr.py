"""Matrix factorization trained with the BPR pairwise objective.

Score is ``x_ui = b_i + <p_u, q_i>``. Each epoch visits every training
interaction once as the positive of a sampled triple (u, i, j) with j drawn
uniformly among items the user has not rated in train. Minibatch gradients of
the mean triple objective are applied with Adam.
"""
from __future__ import annotations

import logging
from typing import Callable

import numpy as np

from ..data import Dataset
from .base import (
    Adam,
    EarlyStopper,
    HyperParams,
    TrainedRanker,
    _meta_init,
    sample_unseen,
    saturated_users,
    train_positive_sets,
)

logger = logging.getLogger(__name__)

INIT_SCALE = 0.01


def log_sigmoid(x: np.ndarray) -> np.ndarray:
    return -np.logaddexp(0.0, -x)


def sigmoid(x: np.ndarray) -> np.ndarray:
    return np.exp(-np.logaddexp(0.0, -x))


def triple_objective(p_u, q_i, q_j, b_i, b_j, l2: float) -> float:
    """ln sigma(x_ui - x_uj) minus the L2 penalty on every parameter the triple touches."""
    x = b_i - b_j + p_u @ (q_i - q_j)
    penalty = p_u @ p_u + q_i @ q_i + q_j @ q_j + b_i * b_i + b_j * b_j
    return float(log_sigmoid(np.asarray(x)) - l2 * penalty)


def triple_gradient(p_u, q_i, q_j, b_i, b_j, l2: float) -> dict[str, np.ndarray | float]:
    """Analytic gradient of :func:`triple_objective`."""
    x = b_i - b_j + p_u @ (q_i - q_j)
    g = float(sigmoid(np.asarray(-x)))
    return {
        "p_u": g * (q_i - q_j) - 2 * l2 * p_u,
        "q_i": g * p_u - 2 * l2 * q_i,
        "q_j": -g * p_u - 2 * l2 * q_j,
        "b_i": g - 2 * l2 * b_i,
        "b_j": -g - 2 * l2 * b_j,
    }


def batch_gradient(params: dict[str, np.ndarray], u, i, j, l2: float) -> dict[str, np.ndarray]:
    """Gradient of the batch-mean triple objective, scattered onto full parameter arrays."""
    P, Q, b = params["P"], params["Q"], params["b"]
    pu, qi, qj = P[u], Q[i], Q[j]
    x = b[i] - b[j] + np.einsum("bd,bd->b", pu, qi - qj)
    g = sigmoid(-x)[:, None] / u.size
    scale = 2 * l2 / u.size
    gP = np.zeros_like(P)
    gQ = np.zeros_like(Q)
    gb = np.zeros_like(b)
    np.add.at(gP, u, g * (qi - qj) - scale * pu)
    np.add.at(gQ, i, g * pu - scale * qi)
    np.add.at(gQ, j, -g * pu - scale * qj)
    np.add.at(gb, i, g[:, 0] - scale * b[i])
    np.add.at(gb, j, -g[:, 0] - scale * b[j])
    return {"P": gP, "Q": gQ, "b": gb}


class BPR(TrainedRanker):
    kind = "bpr"

    def __init__(self, P: np.ndarray, Q: np.ndarray, b: np.ndarray, hp: HyperParams, seed: int):
        super().__init__(P.shape[0], Q.shape[0], hp, seed)
        self.P, self.Q, self.b = P, Q, b

    @property
    def params(self) -> dict[str, np.ndarray]:
        return {"P": self.P, "Q": self.Q, "b": self.b}

    def score_users(self, users: np.ndarray) -> np.ndarray:
        return self.P[users] @ self.Q.T + self.b[None, :]

    def state_arrays(self):
        return dict(self.params)

    @classmethod
    def from_state(cls, arrays, meta):
        obj = _meta_init(cls, meta)
        cls.__init__(obj, arrays["P"], arrays["Q"], arrays["b"], obj.hyperparameters, obj.training_seed)
        return obj


def train_bpr(
    train: Dataset,
    hp: HyperParams | None = None,
    seed: int = 0,
    validate: Callable[[TrainedRanker], float] | None = None,
) -> BPR:
    """Fit BPR-MF; with ``validate`` the best epoch by that metric is kept (early stop)."""
    hp = hp or HyperParams()
    if hp.embedding_dim < 1:
        raise ValueError("embedding_dim must be >= 1")
    if hp.epochs < 0:
        raise ValueError("epochs must be >= 0")
    rng = np.random.default_rng(seed)
    d = hp.embedding_dim
    model = BPR(
        rng.normal(0.0, INIT_SCALE, (train.n_users, d)),
        rng.normal(0.0, INIT_SCALE, (train.n_items, d)),
        rng.normal(0.0, INIT_SCALE, train.n_items),
        hp,
        seed,
    )
    positives = train_positive_sets(train.users, train.items, train.n_users)
    skip = set(saturated_users(positives, train.n_items))
    opt = Adam(model.params, hp.learning_rate)
    stopper = EarlyStopper(hp.patience) if validate else None

    for epoch in range(hp.epochs):
        order = rng.permutation(train.n_interactions)
        users, items = train.users[order], train.items[order]
        negs = sample_unseen(users, positives, train.n_items, rng)
        keep = negs >= 0
        if skip:
            keep &= ~np.isin(users, list(skip))
        users, items, negs = users[keep], items[keep], negs[keep]
        for start in range(0, users.size, hp.batch_size):
            sl = slice(start, start + hp.batch_size)
            opt.ascend(batch_gradient(model.params, users[sl], items[sl], negs[sl], hp.l2_reg))
        if stopper is not None:
            metric = validate(model)
            logger.debug("bpr epoch %d validation %.5f", epoch + 1, metric)
            if stopper.update(metric, model.params):
                logger.info("bpr early stop after epoch %d", epoch + 1)
                break
    if stopper is not None:
        stopper.restore(model.params)
    return model
