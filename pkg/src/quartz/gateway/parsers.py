"""Strict parsers for every structured model output the pipeline elicits."""

from __future__ import annotations

import re
from typing import Iterable, Sequence

from ..errors import ParseFailure

NOT_INCLUDED = "NOT_INCLUDED"

_QA_RE = re.compile(
    r"Q(\d+)\s*:\s*(.+?)\s*A\1\s*:\s*(.+?)(?=\s*Q\d+\s*:|\Z)", re.DOTALL
)
_RANK_LIST_RE = re.compile(r"\[\s*(\d+(?:\s*,\s*\d+)*)\s*\]")
_SCORE_RE = re.compile(r"Score\s*:?\s*\**\s*:?\s*(\d+)")
_BARE_SCORE_RE = re.compile(r"\**\s*(\d+)\s*\**")


def parse_qa_pairs(text: str) -> list[tuple[str, str]]:
    """Extract (question, answer) pairs in the ``Qk: ... Ak: ...`` format.

    Tolerant of surrounding prose and line breaks; order is preserved.
    """
    pairs = [
        (question.strip(), answer.strip())
        for _, question, answer in _QA_RE.findall(text)
        if question.strip() and answer.strip()
    ]
    if not pairs:
        raise ParseFailure(f"no Qk:/Ak: pairs found in reply: {text[:200]!r}")
    return pairs


def parse_ranking(text: str, pool_size: int) -> list[int]:
    """Parse a rank list like ``[2, 1, 3]`` into presented positions, best first.

    The k-th integer is the rank given to the k-th presented answer. The
    result lists 0-based presented positions ordered best to worst.
    """
    if pool_size < 2:
        raise ValueError(f"pool_size must be >= 2, got {pool_size}")
    match = _RANK_LIST_RE.search(text)
    if match is None:
        raise ParseFailure(f"no integer rank list in reply: {text[:200]!r}")
    ranks = [int(part) for part in match.group(1).split(",")]
    if len(ranks) != pool_size:
        raise ParseFailure(
            f"rank list has {len(ranks)} entries, expected {pool_size}: {ranks}"
        )
    if sorted(ranks) != list(range(1, pool_size + 1)):
        raise ParseFailure(
            f"rank list must be the distinct integers 1..{pool_size}, got {ranks}"
        )
    return sorted(range(pool_size), key=lambda pos: ranks[pos])


def format_ranking(order: Sequence[int]) -> str:
    """Inverse of parse_ranking: presented-position order to a rank list."""
    ranks = [0] * len(order)
    for rank, pos in enumerate(order, start=1):
        ranks[pos] = rank
    return "[" + ", ".join(str(r) for r in ranks) + "]"


def place_not_included_last(
    order: Sequence[int], flagged_positions: Iterable[int]
) -> list[int]:
    """Force NOT_INCLUDED answers to the end, keeping presentation order."""
    flagged = set(flagged_positions)
    kept = [pos for pos in order if pos not in flagged]
    return kept + sorted(pos for pos in order if pos in flagged)


def unshuffle_ranking(order: Sequence[int], presentation: Sequence[int]) -> list[int]:
    """Map a ranking over presented positions back to model indices."""
    return [presentation[pos] for pos in order]


def parse_judge_score(text: str) -> int:
    """Extract the 1-5 integer after ``Score:``, or a lone integer reply."""
    match = _SCORE_RE.search(text)
    if match is None:
        match = _BARE_SCORE_RE.fullmatch(text.strip())
    if match is None:
        raise ParseFailure(f"no score found in reply: {text[:200]!r}")
    score = int(match.group(1))
    if not 1 <= score <= 5:
        raise ParseFailure(f"score {score} outside 1..5 in reply: {text[:200]!r}")
    return score
