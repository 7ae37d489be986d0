"""Deterministic permutation math: Kendall tau distance, Kemeny-optimal
aggregation, mean reciprocal rank, weighted scoring, and seeded shuffling.

A ranking is a sequence of 0-based model indices, best first. The 1-based
rank of model ``l`` is ``order.index(l) + 1``.
"""

from __future__ import annotations

import hashlib
import json
import random
from dataclasses import dataclass, field
from itertools import permutations
from typing import Iterable, Mapping, Sequence, TypeVar

from .errors import IncompleteTableError, PoolSizeError

KEMENY_EXHAUSTIVE_LIMIT = 8

T = TypeVar("T")

Ranking = Sequence[int]


@dataclass(frozen=True, order=True)
class ModelId:
    """A model's 0-based position in the registry plus its label."""

    index: int
    name: str


@dataclass(frozen=True)
class MrrValue:
    """Mean reciprocal rank over a set of questions."""

    value: float
    question_count: int


def _check_permutation(order: Ranking) -> None:
    if sorted(order) != list(range(len(order))):
        raise ValueError(f"not a permutation of 0..{len(order) - 1}: {list(order)!r}")


def kendall_distance(a: Ranking, b: Ranking) -> int:
    """Number of discordant pairs between two rankings.

    Computed as the inversion count of the composition of one ranking with
    the inverse of the other; symmetric, bounded by n*(n-1)/2.
    """
    if len(a) != len(b):
        raise ValueError(f"rankings have different lengths: {len(a)} vs {len(b)}")
    _check_permutation(a)
    _check_permutation(b)
    pos_in_a = {item: pos for pos, item in enumerate(a)}
    composed = [pos_in_a[item] for item in b]
    return sum(
        1
        for k in range(len(composed))
        for k_prev in range(k)
        if composed[k_prev] > composed[k]
    )


def kemeny_aggregate(samples: Sequence[Ranking]) -> list[int]:
    """Exhaustive Kemeny-optimal consensus of a set of sampled rankings.

    Returns the permutation minimizing the total Kendall distance to all
    samples; ties are broken by the lexicographically smallest order.
    """
    if not samples:
        raise ValueError("no ranking samples to aggregate")
    size = len(samples[0])
    if size > KEMENY_EXHAUSTIVE_LIMIT:
        raise PoolSizeError(
            f"pool size {size} exceeds exhaustive limit {KEMENY_EXHAUSTIVE_LIMIT}"
        )
    for sample in samples:
        if len(sample) != size:
            raise ValueError("ranking samples have mismatched lengths")
        _check_permutation(sample)

    positions = [{item: pos for pos, item in enumerate(s)} for s in samples]
    best: tuple[int, ...] | None = None
    best_total = -1
    # itertools.permutations yields in lexicographic order, so strict "<"
    # keeps the lexicographically smallest optimum.
    for candidate in permutations(range(size)):
        total = 0
        for pos in positions:
            composed = [pos[item] for item in candidate]
            total += sum(
                1
                for k in range(size)
                for k_prev in range(k)
                if composed[k_prev] > composed[k]
            )
            if best is not None and total > best_total:
                break
        if best is None or total < best_total:
            best = candidate
            best_total = total
    assert best is not None
    return list(best)


def _subject_index(subject: "ModelId | int") -> int:
    return subject.index if isinstance(subject, ModelId) else int(subject)


def mrr(rankings_per_question: Sequence[Ranking], subject: "ModelId | int") -> MrrValue:
    """Mean over questions of 1 / (1-based rank of the subject)."""
    if not rankings_per_question:
        raise ValueError("mrr needs at least one per-question ranking")
    idx = _subject_index(subject)
    total = 0.0
    for ranking in rankings_per_question:
        try:
            rank = list(ranking).index(idx) + 1
        except ValueError:
            raise ValueError(f"subject {idx} absent from ranking {list(ranking)!r}")
        total += 1.0 / rank
    return MrrValue(total / len(rankings_per_question), len(rankings_per_question))


def _mrr_value(entry: "MrrValue | float") -> float:
    return entry.value if isinstance(entry, MrrValue) else float(entry)


def weighted_score(
    per_evaluator: Mapping["ModelId | int", "MrrValue | float"],
    subject: "ModelId | int",
    alpha_self: float = 0.8,
    pool: Iterable["ModelId | int"] | None = None,
) -> float:
    """Sum of per-evaluator MRRs, down-weighting the self-evaluation entry.

    Entries where the evaluator equals the subject are multiplied by
    ``alpha_self``; all others count fully. When ``pool`` is given, every
    pool member must appear as an evaluator.
    """
    if not 0 < alpha_self <= 1:
        raise ValueError(f"alpha_self must be in (0, 1], got {alpha_self}")
    entries = {_subject_index(e): _mrr_value(v) for e, v in per_evaluator.items()}
    if pool is not None:
        missing = [e for e in pool if _subject_index(e) not in entries]
        if missing:
            raise IncompleteTableError(f"missing evaluator entries: {missing!r}")
    subject_idx = _subject_index(subject)
    return sum(
        (alpha_self if evaluator == subject_idx else 1.0) * value
        for evaluator, value in entries.items()
    )


def argmax_with_tiebreak(totals: Mapping[ModelId, float]) -> ModelId:
    """Model with the maximal total; exact ties go to the smallest index."""
    if not totals:
        raise ValueError("argmax over an empty score map")
    return min(totals, key=lambda m: (-totals[m], m.index))


def seeded_shuffle(
    items: Sequence[T],
    seed_key: Sequence[object],
    global_seed: int,
) -> list[T]:
    """Deterministic shuffle keyed by a stable hash of (global_seed, seed_key).

    Identical inputs reproduce identical permutations across runs and
    platforms.
    """
    if not items:
        raise ValueError("cannot shuffle an empty sequence")
    payload = json.dumps(
        [global_seed, list(seed_key)], separators=(",", ":"), default=str
    )
    digest = hashlib.sha256(payload.encode("utf-8")).digest()
    rng = random.Random(int.from_bytes(digest[:8], "big"))
    shuffled = list(items)
    rng.shuffle(shuffled)
    return shuffled


@dataclass
class ScoreTable:
    """MRR entries per (subject, evaluator) plus self-penalized totals.

    ``entries`` maps (subject index, evaluator index) to an MrrValue. Totals
    require every (subject, evaluator) combination present.
    """

    entries: dict[tuple[int, int], MrrValue] = field(default_factory=dict)
    alpha_self: float = 0.8

    def __post_init__(self) -> None:
        if not 0 < self.alpha_self <= 1:
            raise ValueError(f"alpha_self must be in (0, 1], got {self.alpha_self}")

    def totals(self) -> dict[int, float]:
        subjects = sorted({s for s, _ in self.entries})
        evaluators = sorted({e for _, e in self.entries})
        result: dict[int, float] = {}
        for subject in subjects:
            per_evaluator: dict[int, MrrValue] = {}
            for evaluator in evaluators:
                if (subject, evaluator) not in self.entries:
                    raise IncompleteTableError(
                        f"missing entry for subject {subject}, evaluator {evaluator}"
                    )
                per_evaluator[evaluator] = self.entries[(subject, evaluator)]
            result[subject] = weighted_score(
                per_evaluator, subject, alpha_self=self.alpha_self
            )
        return result
