"""Deterministic stand-ins for a ranking LLM."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .prompt import Instruction

MOCK_KINDS = ("oracle", "noisy_oracle", "echo", "hallucinating")

FAKE_TITLES = (
    "The Last Lighthouse Keeper (2031)",
    "Midnight on Kepler Street (1979)",
    "A Quiet Orbit (2004)",
    "Paper Harbor (1988)",
    "Seven Winters in Lisbon (1993)",
    "The Glass Cartographer (2012)",
)


@dataclass(frozen=True)
class MockLlm:
    kind: str = "oracle"
    p: float = 0.0  # swap probability per position, noisy_oracle only
    n_fake: int = 2  # injected titles, hallucinating only
    seed: int = 0

    def __post_init__(self) -> None:
        if self.kind not in MOCK_KINDS:
            raise ValueError(f"unknown mock kind {self.kind!r}; expected one of {MOCK_KINDS}")
        if not 0.0 <= self.p <= 1.0:
            raise ValueError("p must lie in [0, 1]")

    @property
    def label(self) -> str:
        return f"noisy_oracle(p={self.p:g})" if self.kind == "noisy_oracle" else self.kind


def numbered(titles: list[str]) -> str:
    return "\n".join(f"{k}. {t}" for k, t in enumerate(titles, 1))


def oracle_order(instruction: Instruction, truth: Mapping[int, float]) -> list[str]:
    """Candidates by held-out rating, descending; ties by ascending item index."""
    missing = [i for i in instruction.candidate_items if i not in truth]
    if missing:
        raise KeyError(f"oracle needs ratings for every candidate; missing items {missing}")
    pairs = sorted(
        zip(instruction.candidate_items, instruction.candidates),
        key=lambda p: (-truth[p[0]], p[0]),
    )
    return [t for _, t in pairs]


def _rng(mock: MockLlm, instruction: Instruction) -> np.random.Generator:
    return np.random.default_rng([mock.seed, int.from_bytes(instruction.user_id.encode(), "little") % (2**63)])


def mock_complete(mock: MockLlm, instruction: Instruction, truth: Mapping[int, float] | None = None) -> str:
    """Response text for one instruction. ``truth`` maps candidate item index to rating."""
    if mock.kind == "echo":
        return numbered(list(instruction.candidates))
    if mock.kind == "hallucinating":
        rng = _rng(mock, instruction)
        titles = list(instruction.candidates)
        for fake in rng.choice(FAKE_TITLES, size=min(mock.n_fake, len(FAKE_TITLES)), replace=False):
            titles.insert(int(rng.integers(0, len(titles) + 1)), str(fake))
        return numbered(titles)

    order = oracle_order(instruction, truth or {})
    if mock.kind == "noisy_oracle" and mock.p > 0:
        rng = _rng(mock, instruction)
        for k in range(len(order) - 1):
            if rng.random() < mock.p:
                order[k], order[k + 1] = order[k + 1], order[k]
    return numbered(order)
