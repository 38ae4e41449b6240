import json
from pathlib import Path

import numpy as np
import pytest

from hybridrank.data import Interaction, from_interactions, split_per_user

ROOT = Path(__file__).resolve().parents[1]
ML100K_DIR = ROOT / "data" / "ml-100k"
ML100K_RATINGS = ML100K_DIR / "u.data"
ML100K_ITEMS = ML100K_DIR / "u.item"
MISSING_DATA = "ML-100k not found; run scripts/extract_ml100k.py first"


def have_ml100k() -> bool:
    return ML100K_RATINGS.exists() and ML100K_ITEMS.exists()


@pytest.fixture
def ml100k():
    if not have_ml100k():
        pytest.skip(MISSING_DATA)
    return ML100K_RATINGS, ML100K_ITEMS


def two_block(n_per_block: int = 50):
    """Users 0..n-1 rate items 1-5 only, users n..2n-1 rate items 6-10 only."""
    rows = []
    for u in range(2 * n_per_block):
        block = range(1, 6) if u < n_per_block else range(6, 11)
        rows += [Interaction(str(u), str(i), 5.0) for i in block]
    return from_interactions(rows)


def block_scores(model, dataset, n_per_block: int = 50):
    """Per user: (scores of own-block items, scores of other-block items)."""
    scores = model.score_users(np.arange(dataset.n_users))
    out = []
    for u in range(dataset.n_users):
        own = np.arange(5) if int(dataset.decode_user(u)) < n_per_block else np.arange(5, 10)
        other = np.setdiff1d(np.arange(10), own)
        out.append((scores[u, own], scores[u, other]))
    return out


def small_ratings(n_users: int = 12, n_items: int = 30, per_user: int = 10, seed: int = 0):
    """Random explicit ratings with timestamps, every user rating ``per_user`` items."""
    rng = np.random.default_rng(seed)
    rows = []
    for u in range(1, n_users + 1):
        for k, i in enumerate(rng.choice(np.arange(1, n_items + 1), size=per_user, replace=False)):
            rows.append(Interaction(str(u), str(i), float(rng.integers(1, 6)), 1000 + k))
    return from_interactions(rows, item_catalog={str(i): f"Film {i} ({1950 + i})" for i in range(1, n_items + 1)})


@pytest.fixture
def small_split():
    return split_per_user(small_ratings(), (0.8, 0.1, 0.1), seed=0)


def write_config(directory: Path, **overrides) -> Path:
    """Minimal ML-100k run config; nested dicts in ``overrides`` replace whole sections."""
    cfg = {
        "dataset": {"path": str(ML100K_RATINGS), "items_path": str(ML100K_ITEMS), "format": "ml100k"},
        "model": {"kind": "itemknn", "hyperparameters": {"k_neighbors": 300, "shrink": 2.0}},
        "llm": {"mode": "mock", "mock": {"kind": "oracle"}},
        "output_dir": str(directory / "out"),
        "figures": False,
    }
    cfg.update(overrides)
    path = directory / "config.json"
    path.write_text(json.dumps(cfg))
    return path


# one line per acceptance criterion, printed after the test session
ACCEPTANCE_LINES: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for number in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[number])
