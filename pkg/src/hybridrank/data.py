"""Rating-dataset ingest, activity filtering and per-user splits.

Interactions are held column-wise in numpy arrays indexed by contiguous
user/item indices. Index order follows ascending id order (numeric ids
compare numerically), so "ascending user index" and "ascending user id"
mean the same thing everywhere downstream.
"""
from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import dataclass, field
from typing import BinaryIO, Iterable, Iterator, Sequence

import numpy as np

logger = logging.getLogger(__name__)

FORMATS = ("ml100k", "ml1m", "bookcrossing")
RATING_SCALES = {"ml100k": (1.0, 5.0), "ml1m": (1.0, 5.0), "bookcrossing": (0.0, 10.0)}
NO_TIMESTAMP = -1


class DataError(ValueError):
    """Raised on malformed or unusable rating data."""


@dataclass(frozen=True)
class Interaction:
    user_id: str
    item_id: str
    rating: float
    timestamp: int | None = None


def id_sort_key(value: str) -> tuple[int, int, str]:
    """Numeric ids sort numerically and before non-numeric ones."""
    if value.isdigit():
        return (0, int(value), value)
    return (1, 0, value)


@dataclass
class IngestSummary:
    users: int = 0
    items: int = 0
    interactions: int = 0
    duplicates_dropped: int = 0
    fallback_titles: int = 0

    def to_dict(self) -> dict:
        return {
            "users": self.users,
            "items": self.items,
            "interactions": self.interactions,
            "duplicates_dropped": self.duplicates_dropped,
            "fallback_titles": self.fallback_titles,
        }


@dataclass
class Dataset:
    """Explicit ratings plus the id <-> index maps they are expressed in.

    ``users``/``items``/``ratings``/``timestamps`` are parallel arrays, one
    entry per interaction. ``user_ids[k]`` is the external id of user index k.
    """

    user_ids: list[str]
    item_ids: list[str]
    users: np.ndarray
    items: np.ndarray
    ratings: np.ndarray
    timestamps: np.ndarray
    rating_scale: tuple[float, float]
    item_catalog: dict[str, str] = field(default_factory=dict)
    summary: IngestSummary = field(default_factory=IngestSummary)

    def __post_init__(self) -> None:
        self.user_index = {u: k for k, u in enumerate(self.user_ids)}
        self.item_index = {i: k for k, i in enumerate(self.item_ids)}
        self._by_user: list[np.ndarray] | None = None

    @property
    def n_users(self) -> int:
        return len(self.user_ids)

    @property
    def n_items(self) -> int:
        return len(self.item_ids)

    @property
    def n_interactions(self) -> int:
        return int(self.users.shape[0])

    def encode_user(self, user_id: str) -> int:
        try:
            return self.user_index[str(user_id)]
        except KeyError:
            raise KeyError(f"unknown user id {user_id!r}") from None

    def encode_item(self, item_id: str) -> int:
        try:
            return self.item_index[str(item_id)]
        except KeyError:
            raise KeyError(f"unknown item id {item_id!r}") from None

    def decode_user(self, index: int) -> str:
        return self.user_ids[index]

    def decode_item(self, index: int) -> str:
        return self.item_ids[index]

    def title(self, item_id: str) -> str:
        """Display title, or the ``item-<id>`` fallback when the catalog has none."""
        title = self.item_catalog.get(item_id)
        return title if title else f"item-{item_id}"

    def fallback_title_count(self) -> int:
        return sum(1 for i in self.item_ids if not self.item_catalog.get(i))

    def rows_by_user(self) -> list[np.ndarray]:
        """Interaction row positions per user index, each sorted by item index."""
        if self._by_user is None:
            order = np.lexsort((self.items, self.users))
            counts = np.bincount(self.users, minlength=self.n_users)
            self._by_user = np.split(order, np.cumsum(counts)[:-1])
        return self._by_user

    def user_counts(self) -> np.ndarray:
        return np.bincount(self.users, minlength=self.n_users)

    def interactions(self) -> Iterator[Interaction]:
        for u, i, r, t in zip(self.users, self.items, self.ratings, self.timestamps):
            yield Interaction(
                self.user_ids[u],
                self.item_ids[i],
                float(r),
                None if t == NO_TIMESTAMP else int(t),
            )

    def with_catalog(self, catalog: dict[str, str]) -> "Dataset":
        self.item_catalog = dict(catalog)
        self.summary.fallback_titles = self.fallback_title_count()
        return self

    def subset(self, rows: np.ndarray) -> "Dataset":
        """Same index space, restricted to the given interaction rows."""
        return Dataset(
            self.user_ids,
            self.item_ids,
            self.users[rows],
            self.items[rows],
            self.ratings[rows],
            self.timestamps[rows],
            self.rating_scale,
            self.item_catalog,
            self.summary,
        )


def from_interactions(
    interactions: Iterable[Interaction],
    rating_scale: tuple[float, float] = (1.0, 5.0),
    item_catalog: dict[str, str] | None = None,
) -> Dataset:
    """Build a Dataset; duplicate (user, item) pairs keep the last occurrence."""
    latest: dict[tuple[str, str], Interaction] = {}
    total = 0
    for it in interactions:
        total += 1
        latest[(str(it.user_id), str(it.item_id))] = it
    if not latest:
        raise DataError("empty dataset")
    lo, hi = rating_scale
    rows = list(latest.values())
    for it in rows:
        if not lo <= it.rating <= hi:
            raise DataError(f"rating {it.rating} outside scale {rating_scale} for ({it.user_id}, {it.item_id})")
    user_ids = sorted({str(it.user_id) for it in rows}, key=id_sort_key)
    item_ids = sorted({str(it.item_id) for it in rows}, key=id_sort_key)
    uidx = {u: k for k, u in enumerate(user_ids)}
    iidx = {i: k for k, i in enumerate(item_ids)}
    ds = Dataset(
        user_ids,
        item_ids,
        np.fromiter((uidx[str(it.user_id)] for it in rows), dtype=np.int64, count=len(rows)),
        np.fromiter((iidx[str(it.item_id)] for it in rows), dtype=np.int64, count=len(rows)),
        np.fromiter((it.rating for it in rows), dtype=np.float64, count=len(rows)),
        np.fromiter(
            (NO_TIMESTAMP if it.timestamp is None else it.timestamp for it in rows),
            dtype=np.int64,
            count=len(rows),
        ),
        rating_scale,
        dict(item_catalog or {}),
    )
    ds.summary = IngestSummary(
        users=ds.n_users,
        items=ds.n_items,
        interactions=ds.n_interactions,
        duplicates_dropped=total - len(rows),
        fallback_titles=ds.fallback_title_count() if item_catalog is not None else 0,
    )
    if ds.summary.duplicates_dropped:
        logger.warning("dropped %d duplicate (user, item) rows", ds.summary.duplicates_dropped)
    return ds


def _read_text(source: BinaryIO | bytes | str, encoding: str) -> str:
    if isinstance(source, str):
        return source
    raw = source if isinstance(source, bytes) else source.read()
    text = raw.decode(encoding, errors="replace")
    if "�" in text:
        logger.warning("replaced undecodable byte sequences while reading %s data", encoding)
    return text


def _split_line(line: str, fmt: str) -> list[str]:
    if fmt == "ml100k":
        return line.split()
    return line.split("::")


def _iter_ratings(text: str, fmt: str) -> Iterator[Interaction]:
    if fmt == "bookcrossing":
        reader = csv.reader(io.StringIO(text), delimiter=";", quotechar='"')
        header = next(reader, None)
        if header is None:
            return
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) < 3:
                raise DataError(f"line {lineno}: expected 3 fields, got {len(row)}")
            try:
                rating = float(row[2])
            except ValueError:
                raise DataError(f"line {lineno}: bad rating {row[2]!r}") from None
            yield Interaction(row[0].strip(), row[1].strip(), rating, None)
        return

    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        parts = _split_line(line.strip(), fmt)
        if len(parts) < 3:
            raise DataError(f"line {lineno}: expected at least 3 fields, got {len(parts)}")
        try:
            rating = float(parts[2])
            ts = int(parts[3]) if len(parts) > 3 and parts[3] != "" else None
        except ValueError:
            raise DataError(f"line {lineno}: malformed record {line!r}") from None
        yield Interaction(parts[0], parts[1], rating, ts)


def parse_ratings(source: BinaryIO | bytes | str, format: str) -> Dataset:
    """Parse an ML-100k, ML-1M or Book-Crossing rating file."""
    if format not in FORMATS:
        raise DataError(f"unknown format {format!r}; expected one of {FORMATS}")
    encoding = "latin-1" if format in ("bookcrossing", "ml1m") else "utf-8"
    text = _read_text(source, encoding)
    rows = list(_iter_ratings(text, format))
    if not rows:
        raise DataError("empty dataset")
    return from_interactions(rows, RATING_SCALES[format])


def parse_item_catalog(source: BinaryIO | bytes | str, format: str) -> dict[str, str]:
    """Map item id to display title; empty titles fall back to ``item-<id>``."""
    if format not in FORMATS:
        raise DataError(f"unknown format {format!r}")
    text = _read_text(source, "latin-1")
    catalog: dict[str, str] = {}
    fallbacks = 0

    def add(item_id: str, title: str) -> None:
        nonlocal fallbacks
        item_id = item_id.strip()
        if not item_id or item_id in catalog:
            return
        title = title.strip()
        if not title:
            fallbacks += 1
            title = f"item-{item_id}"
        catalog[item_id] = title

    if format == "bookcrossing":
        reader = csv.reader(io.StringIO(text), delimiter=";", quotechar='"')
        next(reader, None)
        for row in reader:
            if len(row) >= 2:
                add(row[0], row[1])
    else:
        sep = "|" if format == "ml100k" else "::"
        for line in text.splitlines():
            if not line.strip():
                continue
            parts = line.split(sep)
            add(parts[0], parts[1] if len(parts) > 1 else "")
    if fallbacks:
        logger.warning("%d catalog entries had empty titles; using item-<id> fallback", fallbacks)
    return catalog


def filter_min_interactions(dataset: Dataset, min_count: int) -> Dataset:
    """Drop users with fewer than ``min_count`` ratings and reindex."""
    if min_count < 0:
        raise DataError("min_count must be >= 0")
    ds = dataset
    while True:
        counts = ds.user_counts()
        keep = counts[ds.users] >= min_count
        if keep.all():
            break
        if not keep.any():
            raise DataError("no users survive filter")
        ds = _reindexed(ds, np.flatnonzero(keep))
    return ds


def _reindexed(ds: Dataset, rows: np.ndarray) -> Dataset:
    users, items = ds.users[rows], ds.items[rows]
    kept_u = np.unique(users)
    kept_i = np.unique(items)
    umap = np.full(ds.n_users, -1, dtype=np.int64)
    umap[kept_u] = np.arange(kept_u.size)
    imap = np.full(ds.n_items, -1, dtype=np.int64)
    imap[kept_i] = np.arange(kept_i.size)
    out = Dataset(
        [ds.user_ids[k] for k in kept_u],
        [ds.item_ids[k] for k in kept_i],
        umap[users],
        imap[items],
        ds.ratings[rows],
        ds.timestamps[rows],
        ds.rating_scale,
        ds.item_catalog,
    )
    out.summary = IngestSummary(
        users=out.n_users,
        items=out.n_items,
        interactions=out.n_interactions,
        duplicates_dropped=ds.summary.duplicates_dropped,
        fallback_titles=out.fallback_title_count() if ds.item_catalog else 0,
    )
    return out


@dataclass
class SplitDataset:
    train: Dataset
    validation: Dataset
    test: Dataset
    split_seed: int
    ratios: tuple[float, float, float]
    full: Dataset

    @property
    def n_users(self) -> int:
        return self.full.n_users

    @property
    def n_items(self) -> int:
        return self.full.n_items


def _part_sizes(n: int, ratios: Sequence[float]) -> tuple[int, int, int]:
    # small epsilon so e.g. 10 * 0.1 lands on 1 despite float rounding
    n_val = math.floor(n * ratios[1] + 1e-9)
    n_test = math.floor(n * ratios[2] + 1e-9)
    if n < 3:
        n_val = n_test = 0
    n_train = n - n_val - n_test
    if n_train < 1:
        n_test = max(0, n_test - 1)
        n_train = n - n_val - n_test
    return n_train, n_val, n_test


def split_per_user(
    dataset: Dataset,
    ratios: Sequence[float] = (0.8, 0.1, 0.1),
    seed: int = 0,
) -> SplitDataset:
    """Shuffle each user's ratings with a seeded generator and cut train/valid/test.

    Floor boundaries are applied to the validation and test parts; the
    remainder goes to train.
    """
    ratios = tuple(float(r) for r in ratios)
    if len(ratios) != 3 or abs(sum(ratios) - 1.0) > 1e-9 or min(ratios) < 0:
        raise DataError(f"split ratios must be three non-negative numbers summing to 1, got {ratios}")
    rng = np.random.default_rng(seed)
    parts: list[list[np.ndarray]] = [[], [], []]
    for rows in dataset.rows_by_user():
        shuffled = rows[rng.permutation(rows.size)]
        n_train, n_val, _ = _part_sizes(rows.size, ratios)
        parts[0].append(shuffled[:n_train])
        parts[1].append(shuffled[n_train : n_train + n_val])
        parts[2].append(shuffled[n_train + n_val :])
    train, val, test = (
        dataset.subset(np.sort(np.concatenate(p)).astype(np.int64)) for p in parts
    )
    return SplitDataset(train, val, test, seed, ratios, dataset)
