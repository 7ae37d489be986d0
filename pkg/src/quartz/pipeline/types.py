"""Record types flowing through the pipeline stages.

Artifacts refer to pool models by name; registry indices are resolved at
runtime so artifact files stay stable across registry changes.
"""

from __future__ import annotations

from dataclasses import dataclass, field

NOT_INCLUDED = "NOT_INCLUDED"

STAGE_NAMES = (
    "corpus",
    "summaries",
    "qa",
    "answers",
    "stage1",
    "stage2",
    "finetune",
    "judge",
    "metrics",
)


@dataclass(frozen=True)
class Turn:
    speaker: str
    text: str


@dataclass
class Dialogue:
    """One multi-turn conversation plus its task prompt."""

    id: str
    turns: list[Turn]
    task_prompt: str
    header: str | None = None
    reference: str | None = None

    def serialized(self) -> str:
        return "\n".join(f"{t.speaker}: {t.text}" for t in self.turns)

    def to_record(self) -> dict:
        record = {
            "id": self.id,
            "turns": [{"speaker": t.speaker, "text": t.text} for t in self.turns],
            "task_prompt": self.task_prompt,
        }
        if self.header is not None:
            record["header"] = self.header
        if self.reference is not None:
            record["reference"] = self.reference
        return record

    @classmethod
    def from_record(cls, record: dict) -> "Dialogue":
        return cls(
            id=record["id"],
            turns=[Turn(t["speaker"], t["text"]) for t in record["turns"]],
            task_prompt=record["task_prompt"],
            header=record.get("header"),
            reference=record.get("reference"),
        )


@dataclass
class SummaryCandidate:
    dialogue_id: str
    summarizer: str
    text: str

    def to_record(self) -> dict:
        return {
            "dialogue_id": self.dialogue_id,
            "summarizer": self.summarizer,
            "text": self.text,
        }

    @classmethod
    def from_record(cls, record: dict) -> "SummaryCandidate":
        return cls(record["dialogue_id"], record["summarizer"], record["text"])


@dataclass
class QaPair:
    """One merged gold question; ``contributors`` lists every model whose
    generated pair deduplicated into this one."""

    dialogue_id: str
    question_index: int
    question: str
    answer: str
    generator: str
    contributors: list[str] = field(default_factory=list)

    def __post_init__(self) -> None:
        if not self.contributors:
            self.contributors = [self.generator]

    def to_record(self) -> dict:
        return {
            "dialogue_id": self.dialogue_id,
            "question_index": self.question_index,
            "question": self.question,
            "answer": self.answer,
            "generator": self.generator,
            "contributors": list(self.contributors),
        }

    @classmethod
    def from_record(cls, record: dict) -> "QaPair":
        return cls(
            record["dialogue_id"],
            record["question_index"],
            record["question"],
            record["answer"],
            record["generator"],
            list(record.get("contributors", [])),
        )


@dataclass
class CandidateAnswer:
    dialogue_id: str
    question_index: int
    summarizer: str
    responder: str
    text: str

    @property
    def not_included(self) -> bool:
        return self.text.strip() == NOT_INCLUDED

    def to_record(self) -> dict:
        return {
            "dialogue_id": self.dialogue_id,
            "question_index": self.question_index,
            "summarizer": self.summarizer,
            "responder": self.responder,
            "text": self.text,
        }

    @classmethod
    def from_record(cls, record: dict) -> "CandidateAnswer":
        return cls(
            record["dialogue_id"],
            record["question_index"],
            record["summarizer"],
            record["responder"],
            record["text"],
        )


@dataclass
class Stage1Record:
    """Best responder per (dialogue, summarizer), with the full score table.

    ``scores`` maps responder name to ``{"total": float, "per_evaluator":
    {evaluator: {"value": float, "question_count": int}}}``.
    """

    dialogue_id: str
    summarizer: str
    best_responder: str
    scores: dict[str, dict]
    tie_broken: bool = False

    def to_record(self) -> dict:
        return {
            "dialogue_id": self.dialogue_id,
            "summarizer": self.summarizer,
            "best_responder": self.best_responder,
            "scores": self.scores,
            "tie_broken": self.tie_broken,
        }

    @classmethod
    def from_record(cls, record: dict) -> "Stage1Record":
        return cls(
            record["dialogue_id"],
            record["summarizer"],
            record["best_responder"],
            record["scores"],
            record.get("tie_broken", False),
        )


@dataclass
class SelectionRecord:
    """Per-dialogue stage-2 outcome with the audit trail."""

    dialogue_id: str
    best_summarizer: str
    best_summary: str
    stage1_best: dict[str, str]
    scores: dict[str, dict]
    tie_broken: bool = False

    def to_record(self) -> dict:
        return {
            "dialogue_id": self.dialogue_id,
            "best_summarizer": self.best_summarizer,
            "best_summary": self.best_summary,
            "stage1_best": self.stage1_best,
            "scores": self.scores,
            "tie_broken": self.tie_broken,
        }

    @classmethod
    def from_record(cls, record: dict) -> "SelectionRecord":
        return cls(
            record["dialogue_id"],
            record["best_summarizer"],
            record["best_summary"],
            record["stage1_best"],
            record["scores"],
            record.get("tie_broken", False),
        )


@dataclass
class FinetuneRecord:
    """One training example: task prompt, dialogue, selected summary."""

    instruction: str
    input: str
    output: str
    meta: dict = field(default_factory=dict)

    def to_record(self) -> dict:
        return {
            "instruction": self.instruction,
            "input": self.input,
            "output": self.output,
            "meta": self.meta,
        }

    @classmethod
    def from_record(cls, record: dict) -> "FinetuneRecord":
        return cls(
            record["instruction"],
            record["input"],
            record["output"],
            record.get("meta", {}),
        )


@dataclass
class JudgeScore:
    dialogue_id: str
    summarizer: str
    judge: str
    dimension: str
    score: int | None

    def to_record(self) -> dict:
        return {
            "dialogue_id": self.dialogue_id,
            "summarizer": self.summarizer,
            "judge": self.judge,
            "dimension": self.dimension,
            "score": self.score,
        }

    @classmethod
    def from_record(cls, record: dict) -> "JudgeScore":
        return cls(
            record["dialogue_id"],
            record["summarizer"],
            record["judge"],
            record["dimension"],
            record["score"],
        )


LORA_HYPERPARAMETERS = {
    "method": "LoRA",
    "lora_rank": 8,
    "lora_scaling": 16,
    "epochs": 3,
    "optimizer": "AdamW",
    "learning_rate": 5e-5,
    "adam_beta1": 0.9,
    "adam_beta2": 0.999,
    "adam_epsilon": 1e-8,
    "lr_scheduler": "linear",
}
