"""Deterministic mock model pool for offline runs and tests.

The mock operates on synthetic dialogues that plant facts as lines of the
form ``the itemK is <value>``. Each role is simulated from the prompt text
alone, so a mock reply is a pure function of (model name, behavior,
request), which makes whole pipeline runs reproducible.
"""

from __future__ import annotations

import hashlib
import random
import re
import threading
from dataclasses import dataclass, field

from ..errors import MockGapError
from .client import ChatRequest
from .parsers import NOT_INCLUDED

FACT_RE = re.compile(r"\bthe (item\d+) is ([\w-]+)", re.IGNORECASE)
_QUESTION_KEY_RE = re.compile(r"\b(item\d+)\b")
_GOLD_RE = re.compile(r"Ground Truth Answer:\s*(.+)")
_OPTION_RE = re.compile(r"^\s*(\d+)\)\s*(.*?)\s*$", re.MULTILINE)


def plant_fact(dialogue_id: str, fact_index: int) -> tuple[str, str]:
    """The (key, value) pair planted for one synthetic fact."""
    return f"item{fact_index}", f"val-{dialogue_id}-{fact_index}"


def fact_sentence(key: str, value: str) -> str:
    return f"the {key} is {value}"


@dataclass
class MockBehavior:
    """Knobs controlling how a mock model plays each role.

    coverage: fraction of planted facts a summary retains.
    answer_accuracy: probability of answering correctly when the fact is
        present in the summary (a miss produces a wrong answer, not
        NOT_INCLUDED).
    rank_noise: per-adjacent-pair swap probability applied to the
        correctness-sorted ranking.
    qa_limit: cap on generated QA pairs per dialogue.
    distinct_questions: phrase questions in a model-specific way so merged
        pools do not deduplicate across generators.
    """

    coverage: float = 1.0
    answer_accuracy: float = 1.0
    rank_noise: float = 0.0
    judge_score: int = 4
    qa_limit: int = 15
    distinct_questions: bool = False
    seed: int = 0
    script: list[tuple[str, str, str]] = field(default_factory=list)
    default_reply: str | None = None


class MockBackend:
    """Scripted, deterministic stand-in for a chat model."""

    def __init__(self, name: str, behavior: MockBehavior | None = None):
        self.name = name
        self.behavior = behavior or MockBehavior()
        self.calls = 0
        self._lock = threading.Lock()

    def _rng(self, request: ChatRequest) -> random.Random:
        payload = "\x1f".join(
            [
                self.name,
                str(self.behavior.seed),
                request.role,
                request.instruction,
                request.input_text,
            ]
        )
        digest = hashlib.sha256(payload.encode("utf-8")).digest()
        return random.Random(int.from_bytes(digest[:8], "big"))

    def complete(self, request: ChatRequest) -> str:
        with self._lock:
            self.calls += 1
        for role, needle, reply in self.behavior.script:
            if role == request.role and needle in request.text:
                return reply
        handler = {
            "summary": self._summarize,
            "qa": self._generate_qa,
            "answer": self._answer,
            "rank": self._rank,
        }.get(request.role)
        if handler is not None:
            return handler(request)
        if request.role.startswith("judge"):
            return f"**Score:** {self.behavior.judge_score}"
        if self.behavior.default_reply is not None:
            return self.behavior.default_reply
        raise MockGapError(
            f"mock {self.name!r} has no script for role {request.role!r}"
        )

    def _summarize(self, request: ChatRequest) -> str:
        facts = FACT_RE.findall(request.input_text)
        if not facts:
            if self.behavior.default_reply is not None:
                return self.behavior.default_reply
            raise MockGapError(
                f"mock {self.name!r} found no planted facts to summarize"
            )
        keep = round(self.behavior.coverage * len(facts))
        rng = self._rng(request)
        chosen = sorted(rng.sample(range(len(facts)), keep))
        body = " ".join(
            f"The {facts[i][0]} is {facts[i][1]}." for i in chosen
        )
        return f"Summary by {self.name}: {body}".strip()

    def _generate_qa(self, request: ChatRequest) -> str:
        facts = FACT_RE.findall(request.input_text)
        if not facts:
            raise MockGapError(
                f"mock {self.name!r} found no planted facts for QA generation"
            )
        lines = []
        for j, (key, value) in enumerate(facts[: self.behavior.qa_limit], start=1):
            if self.behavior.distinct_questions:
                question = f"What is the value of {key}, per {self.name}?"
            else:
                question = f"What is the value of {key}?"
            lines.append(f"Q{j}: {question} A{j}: {value}")
        return "\n".join(lines)

    def _answer(self, request: ChatRequest) -> str:
        question_match = re.search(r"Question:\s*(.+)", request.input_text)
        question = question_match.group(1) if question_match else request.input_text
        key_match = _QUESTION_KEY_RE.search(question)
        if key_match is None:
            return NOT_INCLUDED
        key = key_match.group(1)
        fact = re.search(
            rf"\bthe {re.escape(key)} is ([\w-]+)", request.input_text, re.IGNORECASE
        )
        if fact is None:
            return NOT_INCLUDED
        value = fact.group(1)
        if self._rng(request).random() < self.behavior.answer_accuracy:
            return value
        return f"wrong-{value}"

    def _rank(self, request: ChatRequest) -> str:
        gold_match = _GOLD_RE.search(request.input_text)
        if gold_match is None:
            raise MockGapError(f"mock {self.name!r}: no ground truth in rank prompt")
        gold = gold_match.group(1).strip()
        options_text = request.input_text.split("Possible answers:", 1)[-1]
        options = [answer for _, answer in _OPTION_RE.findall(options_text)]
        if not options:
            raise MockGapError(f"mock {self.name!r}: no answer options in rank prompt")

        def tier(answer: str) -> int:
            if answer.strip() == NOT_INCLUDED:
                return 2
            return 0 if answer.strip() == gold else 1

        order = sorted(range(len(options)), key=lambda pos: (tier(options[pos]), pos))
        rng = self._rng(request)
        for i in range(len(order) - 1):
            if rng.random() < self.behavior.rank_noise:
                order[i], order[i + 1] = order[i + 1], order[i]
        ranks = [0] * len(order)
        for rank, pos in enumerate(order, start=1):
            ranks[pos] = rank
        return "[" + ", ".join(str(r) for r in ranks) + "]"
