from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import ClassVar, Sequence

import numpy as np

logger = logging.getLogger(__name__)

ARTIFACT_VERSION = 1


@dataclass
class HyperParams:
    learning_rate: float = 1e-3
    epochs: int = 30
    embedding_dim: int = 64
    mlp_hidden: list[int] = field(default_factory=lambda: [64, 32, 16])
    dropout: float = 0.0
    k_neighbors: int = 100
    shrink: float = 0.0
    l2_reg: float = 1e-4
    negatives_per_positive: int = 4
    batch_size: int = 2048
    patience: int = 5

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, values: dict) -> "HyperParams":
        known = {f.name for f in fields(cls)}
        unknown = set(values) - known
        if unknown:
            raise ValueError(f"unknown hyperparameters: {sorted(unknown)}")
        return cls(**values)


class TrainedRanker:
    """Common surface of the three rankers.

    Subclasses implement ``score_users`` (batch of user indices to a dense
    score matrix) and ``state_arrays``/``from_state`` for persistence.
    """

    kind: ClassVar[str] = ""

    def __init__(self, n_users: int, n_items: int, hyperparameters: HyperParams, training_seed: int):
        self.n_users = n_users
        self.n_items = n_items
        self.hyperparameters = hyperparameters
        self.training_seed = training_seed

    def score_users(self, users: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def state_arrays(self) -> dict[str, np.ndarray]:
        raise NotImplementedError

    @classmethod
    def from_state(cls, arrays: dict[str, np.ndarray], meta: dict) -> "TrainedRanker":
        raise NotImplementedError

    def _check_user(self, user: int) -> None:
        if not 0 <= user < self.n_users:
            raise KeyError(f"user index {user} out of range [0, {self.n_users})")

    def _check_items(self, items: np.ndarray) -> None:
        if items.size and (items.min() < 0 or items.max() >= self.n_items):
            raise KeyError(f"item index out of range [0, {self.n_items})")

    def score_items(self, user: int, items: Sequence[int]) -> np.ndarray:
        self._check_user(user)
        items = np.asarray(items, dtype=np.int64)
        self._check_items(items)
        return self.score_users(np.array([user]))[0, items]

    def save(self, path: str | Path) -> None:
        meta = {
            "artifact_version": ARTIFACT_VERSION,
            "kind": self.kind,
            "n_users": self.n_users,
            "n_items": self.n_items,
            "training_seed": self.training_seed,
            "hyperparameters": self.hyperparameters.to_dict(),
        }
        arrays = self.state_arrays()
        arrays["__meta__"] = np.frombuffer(json.dumps(meta, sort_keys=True).encode(), dtype=np.uint8)
        with open(path, "wb") as fh:
            np.savez(fh, **arrays)


def score(model: TrainedRanker, user: int, item: int) -> float:
    """Score of one (user index, item index) pair; higher is better."""
    return float(model.score_items(user, [item])[0])


def rank_candidates(model: TrainedRanker, user: int, candidates: Sequence[int]) -> list[int]:
    """Candidates by descending score, ties by ascending item index."""
    items = np.asarray(list(candidates), dtype=np.int64)
    if items.size == 0:
        raise ValueError("candidates must be non-empty")
    if np.unique(items).size != items.size:
        raise ValueError("candidates must be de-duplicated")
    scores = model.score_items(user, items)
    order = np.lexsort((items, -scores))
    return [int(i) for i in items[order]]


def load_ranker(path: str | Path) -> TrainedRanker:
    from . import RANKERS

    with np.load(path) as data:
        arrays = {k: data[k] for k in data.files}
    meta = json.loads(arrays.pop("__meta__").tobytes().decode())
    if meta.get("artifact_version") != ARTIFACT_VERSION:
        raise ValueError(f"unsupported model artifact version {meta.get('artifact_version')}")
    return RANKERS[meta["kind"]].from_state(arrays, meta)


def _meta_init(cls, meta: dict):
    obj = cls.__new__(cls)
    TrainedRanker.__init__(
        obj,
        meta["n_users"],
        meta["n_items"],
        HyperParams.from_dict(meta["hyperparameters"]),
        meta["training_seed"],
    )
    return obj


class Adam:
    """Dense Adam state for a dict of parameter arrays (updated in place)."""

    def __init__(self, params: dict[str, np.ndarray], lr: float, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = params
        self.lr = lr
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def ascend(self, grads: dict[str, np.ndarray]) -> None:
        self.step({k: -g for k, g in grads.items()})

    def step(self, grads: dict[str, np.ndarray]) -> None:
        """Descent step on the given loss gradients."""
        self.t += 1
        c1 = 1 - self.beta1**self.t
        c2 = 1 - self.beta2**self.t
        for k, g in grads.items():
            m, v = self.m[k], self.v[k]
            m *= self.beta1
            m += (1 - self.beta1) * g
            v *= self.beta2
            v += (1 - self.beta2) * g * g
            self.params[k] -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def train_positive_sets(users: np.ndarray, items: np.ndarray, n_users: int) -> list[set[int]]:
    sets: list[set[int]] = [set() for _ in range(n_users)]
    for u, i in zip(users.tolist(), items.tolist()):
        sets[u].add(i)
    return sets


def sample_unseen(
    users: np.ndarray, positives: list[set[int]], n_items: int, rng: np.random.Generator
) -> np.ndarray:
    """One uniformly drawn item outside each user's positive set (-1 if none exists)."""
    out = rng.integers(0, n_items, size=users.size)
    for k, u in enumerate(users.tolist()):
        pos = positives[u]
        if len(pos) >= n_items:
            out[k] = -1
            continue
        while int(out[k]) in pos:
            out[k] = rng.integers(0, n_items)
    return out


def saturated_users(positives: list[set[int]], n_items: int) -> list[int]:
    full = [u for u, s in enumerate(positives) if len(s) >= n_items]
    if full:
        logger.warning("%d users interacted with every item; skipping negative sampling for them", len(full))
    return full


class EarlyStopper:
    """Tracks a validation metric; keeps the best parameter snapshot."""

    def __init__(self, patience: int):
        self.patience = patience
        self.best = -np.inf
        self.best_state: dict[str, np.ndarray] | None = None
        self.bad_epochs = 0

    def update(self, metric: float, params: dict[str, np.ndarray]) -> bool:
        """Record one epoch; True when training should stop."""
        if metric > self.best:
            self.best = metric
            self.best_state = {k: v.copy() for k, v in params.items()}
            self.bad_epochs = 0
            return False
        self.bad_epochs += 1
        return self.bad_epochs >= self.patience

    def restore(self, params: dict[str, np.ndarray]) -> None:
        if self.best_state is not None:
            for k, v in self.best_state.items():
                params[k][...] = v
