"""Turn a weak user's training history into a ranking instruction."""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from importlib import resources
from string import Template

import numpy as np

from ..data import SplitDataset

TEMPLATE_VERSION = "ranking_v1"
HISTORY_CAP = 20

# minimum rating phrased as "liked", per rating scale upper bound
LIKED_FLOOR = {5.0: 3.0, 10.0: 6.0}


class NothingToRank(ValueError):
    pass


def load_template(version: str = TEMPLATE_VERSION) -> Template:
    text = resources.files(__package__).joinpath("templates", f"{version}.txt").read_text("utf-8")
    return Template(text)


def single_line(title: str) -> str:
    return re.sub(r"\s+", " ", title).strip()


def liked_floor(rating_scale: tuple[float, float]) -> float:
    lo, hi = rating_scale
    return LIKED_FLOOR.get(hi, lo + 0.5 * (hi - lo))


@dataclass
class Instruction:
    user_id: str
    history: list[tuple[str, float]]
    candidates: list[str]
    candidate_items: list[int]  # item indices parallel to ``candidates``
    shuffle_seed: int
    rendered_text: str = ""
    history_items: list[int] = field(default_factory=list)
    history_fallback: bool = False  # no liked items; history shows raw ratings
    item_noun: tuple[str, str] = ("movies", "movie")

    def title_to_item(self) -> dict[str, int]:
        return dict(zip(self.candidates, self.candidate_items))


def _format_rating(r: float) -> str:
    return f"{r:g}"


def render_prompt(instruction: Instruction, template: Template | None = None) -> str:
    template = template or load_template()
    if instruction.history_fallback:
        history = [f"{k}. {single_line(t)} (rated {_format_rating(r)})" for k, (t, r) in enumerate(instruction.history, 1)]
    else:
        history = [f"{k}. {single_line(t)}" for k, (t, _) in enumerate(instruction.history, 1)]
    candidates = [f"{k}. {single_line(t)}" for k, t in enumerate(instruction.candidates, 1)]
    plural, singular = instruction.item_noun
    return template.substitute(
        user_id=instruction.user_id,
        items_plural=plural,
        item_singular=singular,
        history="\n".join(history),
        candidates="\n".join(candidates),
    )


def display_titles(split: SplitDataset, catalog: dict[str, str], items: list[int]) -> list[str]:
    """Single-line titles; repeated titles get an item-id suffix so each is unique."""
    titles = []
    counts: dict[str, int] = {}
    for i in items:
        item_id = split.full.decode_item(i)
        title = single_line(catalog.get(item_id) or f"item-{item_id}")
        counts[title] = counts.get(title, 0) + 1
        titles.append(title)
    return [f"{t} [#{split.full.decode_item(i)}]" if counts[t] > 1 else t for t, i in zip(titles, items)]


def build_instruction(
    split: SplitDataset,
    catalog: dict[str, str],
    user: int,
    history_cap: int = HISTORY_CAP,
    seed: int = 0,
    candidate_items: list[int] | None = None,
    item_noun: tuple[str, str] = ("movies", "movie"),
    template: Template | None = None,
) -> Instruction:
    """Sample up to ``history_cap`` liked train items, sort by preference, shuffle candidates.

    Candidates default to the user's test items.
    """
    train = split.train
    rows = train.rows_by_user()[user]
    items, ratings, stamps = train.items[rows], train.ratings[rows], train.timestamps[rows]
    rng = np.random.default_rng([seed, user])

    liked = ratings >= liked_floor(train.rating_scale)
    fallback = not liked.any()
    pool = np.arange(rows.size) if fallback else np.flatnonzero(liked)
    if pool.size > history_cap:
        pool = rng.choice(pool, size=history_cap, replace=False)
    # rating desc, then newer first, then ascending item index
    order = np.lexsort((items[pool], -stamps[pool], -ratings[pool]))
    chosen = pool[order]
    history_items = [int(i) for i in items[chosen]]
    history_titles = display_titles(split, catalog, history_items)

    if candidate_items is None:
        test_rows = split.test.rows_by_user()[user]
        candidate_items = [int(i) for i in split.test.items[test_rows]]
    candidate_items = list(dict.fromkeys(candidate_items))
    if not candidate_items:
        raise NothingToRank(f"nothing to rank for user {split.full.decode_user(user)}")
    shuffled = [candidate_items[k] for k in rng.permutation(len(candidate_items))]

    inst = Instruction(
        user_id=split.full.decode_user(user),
        history=list(zip(history_titles, (float(r) for r in ratings[chosen]))),
        candidates=display_titles(split, catalog, shuffled),
        candidate_items=shuffled,
        shuffle_seed=seed,
        history_items=history_items,
        history_fallback=bool(fallback),
        item_noun=item_noun,
    )
    inst.rendered_text = render_prompt(inst, template)
    return inst
