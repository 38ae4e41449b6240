"""MLP-only neural collaborative filtering, written directly in numpy.

score(u, i) = sigmoid(MLP([p_u ; q_i])) with ReLU hidden layers and inverted
dropout during training. Trained on binary cross-entropy with uniformly
sampled negatives.
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
from .bpr import log_sigmoid, sigmoid

logger = logging.getLogger(__name__)


def init_params(n_users: int, n_items: int, dim: int, hidden: list[int], rng: np.random.Generator) -> dict[str, np.ndarray]:
    params = {
        "P": rng.normal(0.0, 0.01, (n_users, dim)),
        "Q": rng.normal(0.0, 0.01, (n_items, dim)),
    }
    widths = [2 * dim, *hidden, 1]
    for layer, (fan_in, fan_out) in enumerate(zip(widths[:-1], widths[1:])):
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        params[f"W{layer}"] = rng.uniform(-bound, bound, (fan_in, fan_out))
        params[f"c{layer}"] = np.zeros(fan_out)
    return params


def n_layers(params: dict[str, np.ndarray]) -> int:
    return sum(1 for k in params if k.startswith("W"))


def forward(params, users, items, dropout: float = 0.0, rng: np.random.Generator | None = None):
    """Return (logits, cache). Dropout is applied only when ``rng`` is given."""
    a = np.concatenate([params["P"][users], params["Q"][items]], axis=1)
    cache = {"inputs": [], "masks": [], "pre": []}
    last = n_layers(params) - 1
    for layer in range(last):
        cache["inputs"].append(a)
        z = a @ params[f"W{layer}"] + params[f"c{layer}"]
        cache["pre"].append(z)
        a = np.maximum(z, 0.0)
        if rng is not None and dropout > 0:
            mask = (rng.random(a.shape) >= dropout) / (1.0 - dropout)
            a = a * mask
        else:
            mask = None
        cache["masks"].append(mask)
    cache["inputs"].append(a)
    logits = (a @ params[f"W{last}"] + params[f"c{last}"])[:, 0]
    return logits, cache


def bce_loss(params, users, items, labels) -> float:
    """Mean binary cross-entropy of sigmoid(logits) against 0/1 labels (no dropout)."""
    logits, _ = forward(params, users, items)
    return float(-np.mean(labels * log_sigmoid(logits) + (1 - labels) * log_sigmoid(-logits)))


def backward(params, users, items, labels, logits, cache) -> dict[str, np.ndarray]:
    """Gradient of the mean BCE loss with respect to every parameter array."""
    grads: dict[str, np.ndarray] = {}
    last = n_layers(params) - 1
    delta = ((sigmoid(logits) - labels) / labels.size)[:, None]
    grads[f"W{last}"] = cache["inputs"][last].T @ delta
    grads[f"c{last}"] = delta.sum(axis=0)
    upstream = delta @ params[f"W{last}"].T
    for layer in range(last - 1, -1, -1):
        if cache["masks"][layer] is not None:
            upstream = upstream * cache["masks"][layer]
        dz = upstream * (cache["pre"][layer] > 0)
        grads[f"W{layer}"] = cache["inputs"][layer].T @ dz
        grads[f"c{layer}"] = dz.sum(axis=0)
        upstream = dz @ params[f"W{layer}"].T
    dim = params["P"].shape[1]
    gP = np.zeros_like(params["P"])
    gQ = np.zeros_like(params["Q"])
    np.add.at(gP, users, upstream[:, :dim])
    np.add.at(gQ, items, upstream[:, dim:])
    grads["P"], grads["Q"] = gP, gQ
    return grads


class NCF(TrainedRanker):
    kind = "ncf"

    def __init__(self, params: dict[str, np.ndarray], hp: HyperParams, seed: int):
        super().__init__(params["P"].shape[0], params["Q"].shape[0], hp, seed)
        self.params = params

    def score_users(self, users: np.ndarray) -> np.ndarray:
        users = np.asarray(users, dtype=np.int64)
        items = np.arange(self.n_items)
        u = np.repeat(users, self.n_items)
        i = np.tile(items, users.size)
        logits, _ = forward(self.params, u, i)
        return sigmoid(logits).reshape(users.size, self.n_items)

    def state_arrays(self):
        return dict(self.params)

    @classmethod
    def from_state(cls, arrays, meta):
        obj = _meta_init(cls, meta)
        cls.__init__(obj, dict(arrays), obj.hyperparameters, obj.training_seed)
        return obj


def train_ncf(
    train: Dataset,
    hp: HyperParams | None = None,
    seed: int = 0,
    validate: Callable[[TrainedRanker], float] | None = None,
) -> NCF:
    hp = hp or HyperParams()
    if not hp.mlp_hidden:
        raise ValueError("mlp_hidden must be non-empty")
    if not 0.0 <= hp.dropout < 1.0:
        raise ValueError("dropout must lie in [0, 1)")
    if hp.embedding_dim < 1:
        raise ValueError("embedding_dim must be >= 1")
    rng = np.random.default_rng(seed)
    model = NCF(init_params(train.n_users, train.n_items, hp.embedding_dim, list(hp.mlp_hidden), rng), hp, seed)
    positives = train_positive_sets(train.users, train.items, train.n_users)
    skip = set(saturated_users(positives, train.n_items))
    opt = Adam(model.params, hp.learning_rate)
    stopper = EarlyStopper(hp.patience) if validate else None
    n_neg = hp.negatives_per_positive

    for epoch in range(hp.epochs):
        neg_users = np.repeat(train.users, n_neg)
        neg_items = sample_unseen(neg_users, positives, train.n_items, rng)
        keep = neg_items >= 0
        if skip:
            keep &= ~np.isin(neg_users, list(skip))
        users = np.concatenate([train.users, neg_users[keep]])
        items = np.concatenate([train.items, neg_items[keep]])
        labels = np.concatenate([np.ones(train.n_interactions), np.zeros(int(keep.sum()))])
        order = rng.permutation(users.size)
        users, items, labels = users[order], items[order], labels[order]
        for start in range(0, users.size, hp.batch_size):
            sl = slice(start, start + hp.batch_size)
            logits, cache = forward(model.params, users[sl], items[sl], hp.dropout, rng)
            opt.step(backward(model.params, users[sl], items[sl], labels[sl], logits, cache))
        if stopper is not None:
            metric = validate(model)
            logger.debug("ncf epoch %d validation %.5f", epoch + 1, metric)
            if stopper.update(metric, model.params):
                logger.info("ncf early stop after epoch %d", epoch + 1)
                break
    if stopper is not None:
        stopper.restore(model.params)
    return model
