"""Per-user ranking quality, activity density and weak-user classification."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Callable, Hashable, Iterable, Mapping, Sequence

import numpy as np

from .data import Dataset, SplitDataset


class UndefinedAUC(ValueError):
    """AUC needs at least one relevant and one irrelevant item."""


@dataclass(frozen=True)
class Thresholds:
    t_p: float = 0.5
    t_s: float | None = None  # None: use the mean density of the dataset
    relevance_cutoff: float = 4.0
    n_sampled_negatives: int = 0  # 0: pool is the held-out items only

    def __post_init__(self) -> None:
        if not 0.0 <= self.t_p <= 1.0:
            raise ValueError(f"t_p must lie in [0, 1], got {self.t_p}")
        if self.t_s is not None and not 0.0 < self.t_s < 1.0:
            raise ValueError(f"t_s must lie in (0, 1), got {self.t_s}")
        if self.n_sampled_negatives < 0:
            raise ValueError("n_sampled_negatives must be >= 0")


@dataclass
class UserAssessment:
    user_id: str
    user_index: int
    auc: float | None  # None when the pool has no relevant or no irrelevant item
    sparsity_index: float
    inactive: bool
    weak: bool
    n_train: int
    n_test: int

    @property
    def assessable(self) -> bool:
        return self.auc is not None

    def to_dict(self) -> dict:
        return asdict(self)


def user_auc(
    scores: Mapping[Hashable, float],
    relevant: Iterable[Hashable],
    irrelevant: Iterable[Hashable],
) -> float:
    """Fraction of (relevant, irrelevant) pairs the scores order correctly.

    Ties count one half.
    """
    rel = np.array([scores[r] for r in relevant], dtype=np.float64)
    irr = np.array([scores[r] for r in irrelevant], dtype=np.float64)
    return auc_from_arrays(rel, irr)


def auc_from_arrays(rel: np.ndarray, irr: np.ndarray) -> float:
    """Mann-Whitney AUC via sorting, O((n + m) log(n + m))."""
    n_rel, n_irr = rel.size, irr.size
    if n_rel == 0 or n_irr == 0:
        raise UndefinedAUC(f"need relevant and irrelevant items, got {n_rel} and {n_irr}")
    irr_sorted = np.sort(irr)
    below = np.searchsorted(irr_sorted, rel, side="left")
    not_above = np.searchsorted(irr_sorted, rel, side="right")
    wins = below.sum() + 0.5 * (not_above - below).sum()
    return float(wins) / (n_rel * n_irr)


def ranking_auc(ranked: Sequence[Hashable], relevant: set) -> float:
    """AUC of an ordered list: earlier positions count as higher scores."""
    n = len(ranked)
    scores = {item: float(n - pos) for pos, item in enumerate(ranked)}
    irrelevant = [item for item in ranked if item not in relevant]
    return user_auc(scores, [item for item in ranked if item in relevant], irrelevant)


def sparsity_index(n_rated: int, n_items: int) -> float:
    """Rating density |R| / N of one user."""
    if n_items <= 0 or not 0 <= n_rated <= n_items:
        raise ValueError(f"need 0 <= n_rated <= n_items and n_items > 0, got {n_rated}, {n_items}")
    return n_rated / n_items


def mean_sparsity_threshold(dataset: Dataset) -> float:
    if dataset.n_users == 0:
        raise ValueError("empty dataset")
    counts = dataset.user_counts()
    return float(np.mean([sparsity_index(int(c), dataset.n_items) for c in counts]))


def dcg_at_k(gains: Sequence[float], k: int) -> float:
    return sum(g / math.log2(pos + 2) for pos, g in enumerate(gains[:k]))


def ndcg_at_k(ranked: Sequence[Hashable], relevance: Mapping[Hashable, float], k: int = 10) -> float:
    """Binary-gain NDCG@k; 0 when no ranked item is relevant."""
    if k < 1:
        raise ValueError("k must be >= 1")
    gains = [float(relevance.get(item, 0)) for item in ranked]
    ideal = dcg_at_k(sorted(gains, reverse=True), k)
    if ideal == 0:
        return 0.0
    return dcg_at_k(gains, k) / ideal


@dataclass
class UserPools:
    relevant: np.ndarray  # item indices
    irrelevant: np.ndarray

    @property
    def defined(self) -> bool:
        return self.relevant.size > 0 and self.irrelevant.size > 0


def sample_negatives(
    n_items: int, seen: np.ndarray, count: int, rng: np.random.Generator
) -> np.ndarray:
    """``count`` distinct never-interacted items, sorted; fewer if not enough exist."""
    if count <= 0:
        return np.empty(0, dtype=np.int64)
    mask = np.ones(n_items, dtype=bool)
    mask[seen] = False
    candidates = np.flatnonzero(mask)
    if candidates.size <= count:
        return candidates
    return np.sort(rng.choice(candidates, size=count, replace=False))


def build_user_pools(
    split: SplitDataset,
    user: int,
    thresholds: Thresholds,
    seed: int,
    part: str = "test",
) -> UserPools:
    """Relevant/irrelevant pools for one user index on the test (or validation) part."""
    held_out = getattr(split, part)
    rows = held_out.rows_by_user()[user]
    items, ratings = held_out.items[rows], held_out.ratings[rows]
    liked = ratings >= thresholds.relevance_cutoff
    seen = split.full.items[split.full.rows_by_user()[user]]
    rng = np.random.default_rng([seed, user])
    negatives = sample_negatives(split.n_items, seen, thresholds.n_sampled_negatives, rng)
    return UserPools(items[liked], np.concatenate([items[~liked], negatives]))


def classify(auc: float | None, density: float, t_p: float, t_s: float) -> tuple[bool, bool]:
    """(inactive, weak) for one user.

    Inactive means density below t_s. Weak additionally needs a measured
    AUC at or below t_p; users whose AUC is undefined cannot be assessed and
    are never weak.
    """
    inactive = density < t_s
    return inactive, inactive and auc is not None and auc <= t_p


def classify_users(
    assessments: Sequence[UserAssessment], thresholds: Thresholds, t_s: float | None = None
) -> tuple[set[str], set[str]]:
    """Split users into (weak, strong); updates the flags on each assessment."""
    t_s = thresholds.t_s if t_s is None else t_s
    if t_s is None:
        raise ValueError("t_s must be resolved before classification")
    weak, strong = set(), set()
    for a in assessments:
        a.inactive, a.weak = classify(a.auc, a.sparsity_index, thresholds.t_p, t_s)
        (weak if a.weak else strong).add(a.user_id)
    return weak, strong


def build_all_pools(split: SplitDataset, thresholds: Thresholds, seed: int, part: str = "test") -> list[UserPools]:
    return [build_user_pools(split, u, thresholds, seed, part) for u in range(split.n_users)]


def pool_aucs(
    score_fn: Callable[[np.ndarray], np.ndarray], pools: Sequence[UserPools], batch: int = 256
) -> list[float | None]:
    """Per-user AUC over precomputed pools, None where the pool is one-sided."""
    out: list[float | None] = []
    for start in range(0, len(pools), batch):
        users = np.arange(start, min(start + batch, len(pools)))
        scores = score_fn(users)
        for row, u in enumerate(users):
            p = pools[u]
            out.append(auc_from_arrays(scores[row, p.relevant], scores[row, p.irrelevant]) if p.defined else None)
    return out


def mean_pool_auc(pools: Sequence[UserPools]) -> Callable[[object], float]:
    """Validation metric for model selection: mean defined AUC of ``model.score_users``."""

    def metric(model) -> float:
        values = [a for a in pool_aucs(model.score_users, pools) if a is not None]
        return float(np.mean(values)) if values else 0.0

    return metric


def assess_users(
    split: SplitDataset,
    score_fn: Callable[[np.ndarray], np.ndarray],
    thresholds: Thresholds,
    seed: int,
    t_s: float,
    part: str = "test",
    pools: Sequence[UserPools] | None = None,
) -> list[UserAssessment]:
    """Score every user's pool and classify, in ascending user order.

    ``score_fn`` maps a batch of user indices to a (batch, n_items) score matrix.
    Density uses the user's full interaction count over the full item set.
    """
    pools = pools if pools is not None else build_all_pools(split, thresholds, seed, part)
    aucs = pool_aucs(score_fn, pools)
    full_counts = split.full.user_counts()
    train_counts = split.train.user_counts()
    held_counts = getattr(split, part).user_counts()
    out: list[UserAssessment] = []
    for u, auc in enumerate(aucs):
        density = sparsity_index(int(full_counts[u]), split.n_items)
        inactive, weak = classify(auc, density, thresholds.t_p, t_s)
        out.append(
            UserAssessment(
                user_id=split.full.decode_user(u),
                user_index=u,
                auc=auc,
                sparsity_index=density,
                inactive=inactive,
                weak=weak,
                n_train=int(train_counts[u]),
                n_test=int(held_counts[u]),
            )
        )
    return out


def mean_defined_auc(assessments: Iterable[UserAssessment]) -> float | None:
    values = [a.auc for a in assessments if a.auc is not None]
    return float(np.mean(values)) if values else None
