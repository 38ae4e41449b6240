from .base import HyperParams, TrainedRanker, load_ranker, rank_candidates, score
from .bpr import BPR, train_bpr
from .itemknn import ItemKNN, cosine_similarity, train_itemknn
from .ncf import NCF, train_ncf

RANKERS = {"itemknn": ItemKNN, "bpr": BPR, "ncf": NCF}

# search spaces used when grid search is enabled
GRIDS = {
    "itemknn": {
        "k_neighbors": [10, 50, 100, 200, 250, 300, 400],
        "shrink": [0.0, 0.1, 0.5, 1.0, 2.0],
    },
    "bpr": {
        "learning_rate": [5e-5, 1e-4, 5e-4, 7e-4, 1e-3, 5e-3, 7e-3],
    },
    "ncf": {
        "learning_rate": [5e-7, 1e-6, 5e-6, 1e-5, 1e-4, 1e-3],
        "dropout": [0.0, 0.1, 0.3],
    },
}


def train_ranker(kind: str, train, hp: HyperParams, seed: int, validate=None) -> TrainedRanker:
    if kind == "itemknn":
        return train_itemknn(train, hp.k_neighbors, hp.shrink, hp, seed)
    if kind == "bpr":
        return train_bpr(train, hp, seed, validate)
    if kind == "ncf":
        return train_ncf(train, hp, seed, validate)
    raise ValueError(f"unknown model kind {kind!r}")


__all__ = [
    "BPR",
    "GRIDS",
    "HyperParams",
    "ItemKNN",
    "NCF",
    "RANKERS",
    "TrainedRanker",
    "cosine_similarity",
    "load_ranker",
    "rank_candidates",
    "score",
    "train_bpr",
    "train_itemknn",
    "train_ncf",
    "train_ranker",
]
