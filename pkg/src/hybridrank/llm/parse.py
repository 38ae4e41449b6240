"""Recover a candidate permutation from free-form LLM output."""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Sequence

_YEAR = re.compile(r"\s*\(\d{4}\)\s*$")
_ARTICLE = re.compile(r"^(.*), (the|a|an)$")
_NUMBERED = re.compile(r"^\s*(?:\d+\s*[.):-]|[-*•])\s*(.+?)\s*$")


class ParseFailure(ValueError):
    """No candidate title could be found in the response."""


def normalize(title: str, strip_year: bool = True) -> str:
    text = re.sub(r"\s+", " ", title.casefold()).strip()
    if strip_year:
        text = _YEAR.sub("", text).strip()
    return text


def title_keys(title: str) -> set[str]:
    """Every normalized spelling we accept for one title."""
    keys = {normalize(title, strip_year=False), normalize(title)}
    for key in list(keys):
        m = _ARTICLE.match(key)
        if m:  # "Usual Suspects, The" is often written "The Usual Suspects"
            keys.add(f"{m.group(2)} {m.group(1)}")
    year = _YEAR.search(title)
    if year:
        for key in list(keys):
            if not _YEAR.search(key):
                keys.add(f"{key} {year.group(0).strip().casefold()}")
    return {k for k in keys if k}


@dataclass
class ParsedRanking:
    order: list[str]
    n_matched: int
    dropped_lines: list[str] = field(default_factory=list)


def _find_mentions(text: str, candidates: Sequence[str]) -> list[tuple[int, int, str]]:
    """(start, end, key) spans of candidate keys, leftmost-longest and non-overlapping."""
    keys = sorted({k for c in candidates for k in title_keys(c)}, key=len, reverse=True)
    spans = []
    for key in keys:
        for m in re.finditer(r"(?<!\w)" + re.escape(key) + r"(?!\w)", text):
            spans.append((m.start(), m.end(), key))
    spans.sort(key=lambda s: (s[0], -(s[1] - s[0])))
    kept, frontier = [], -1
    for start, end, key in spans:
        if start >= frontier:
            kept.append((start, end, key))
            frontier = end
    return kept


def parse_ranked_response(
    text: str, candidates: Sequence[str], fallback_order: Sequence[str]
) -> ParsedRanking:
    """Candidates in the order the response mentions them, unmentioned ones appended.

    Out-of-set titles are ignored and the first mention of a repeated title
    wins. Raises :class:`ParseFailure` if no candidate is mentioned at all.
    """
    if not candidates:
        raise ValueError("candidates must be non-empty")
    if sorted(fallback_order) != sorted(candidates):
        raise ValueError("fallback_order must be a permutation of candidates")
    by_key: dict[str, list[str]] = {}
    for c in fallback_order:
        for key in title_keys(c):
            by_key.setdefault(key, []).append(c)

    normalized = re.sub(r"\s+", " ", text.casefold())
    order: list[str] = []
    taken: set[str] = set()
    for _, _, key in _find_mentions(normalized, candidates):
        # shared keys (e.g. two "Hamlet"s of different years) resolve to the
        # first not-yet-placed owner in fallback order
        owner = next((c for c in by_key[key] if c not in taken), None)
        if owner is not None:
            order.append(owner)
            taken.add(owner)
    if not order:
        raise ParseFailure("response mentions none of the candidates")

    dropped = []
    for line in text.splitlines():
        m = _NUMBERED.match(line)
        if m and not _find_mentions(re.sub(r"\s+", " ", m.group(1).casefold()), candidates):
            dropped.append(m.group(1))
    n_matched = len(order)
    order.extend(c for c in fallback_order if c not in taken)
    return ParsedRanking(order, n_matched, dropped)
