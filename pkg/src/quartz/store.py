"""Persistence and replay: corpus loading, stage artifacts, exchange cache.

Everything is line-delimited JSON so artifacts stay diff-able and usable as
test fixtures. Writes are atomic (temp file then rename) and every stage
file carries a content digest in a sidecar.
"""

from __future__ import annotations

import hashlib
import json
import os
import re
import tempfile
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

from .errors import (
    ArtifactFinalizedError,
    ArtifactNotFoundError,
    CorruptArtifactError,
    StageError,
)
from .metrics import tokenize
from .pipeline.types import STAGE_NAMES, Dialogue, Turn

CORPUS_FORMATS = ("native", "samsum", "dialogsum")


def _dumps(record: dict) -> str:
    return json.dumps(record, ensure_ascii=False, sort_keys=True)


def _atomic_write(path: Path, content: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as handle:
            handle.write(content)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


@dataclass
class StageArtifact:
    run_id: str
    stage: str
    records: list[dict]
    digest: str


class ArtifactStore:
    """Append-only stage files under ``<root>/<run_id>/<stage>.jsonl``."""

    def __init__(self, root: "Path | str", run_id: str):
        self.root = Path(root)
        self.run_id = run_id
        self.run_dir = self.root / run_id

    def path(self, stage: str) -> Path:
        if stage not in STAGE_NAMES:
            raise ValueError(f"unknown stage {stage!r}; valid: {STAGE_NAMES}")
        return self.run_dir / f"{stage}.jsonl"

    def _digest_path(self, stage: str) -> Path:
        return self.run_dir / f"{stage}.jsonl.sha256"

    def has(self, stage: str) -> bool:
        return self.path(stage).exists()

    def put(
        self, stage: str, records: Sequence[dict], resume: bool = False
    ) -> StageArtifact:
        path = self.path(stage)
        content = "".join(_dumps(r) + "\n" for r in records)
        digest = hashlib.sha256(content.encode("utf-8")).hexdigest()
        if path.exists():
            if not resume:
                raise ArtifactFinalizedError(
                    f"stage {stage!r} already finalized for run {self.run_id!r}"
                )
            existing = self._digest_path(stage)
            if existing.exists() and existing.read_text().strip() == digest:
                return StageArtifact(self.run_id, stage, list(records), digest)
        _atomic_write(path, content)
        _atomic_write(self._digest_path(stage), digest + "\n")
        return StageArtifact(self.run_id, stage, list(records), digest)

    def get(self, stage: str) -> StageArtifact:
        path = self.path(stage)
        if not path.exists():
            raise ArtifactNotFoundError(
                f"no {stage!r} artifact for run {self.run_id!r} at {path}"
            )
        content = path.read_text(encoding="utf-8")
        digest = hashlib.sha256(content.encode("utf-8")).hexdigest()
        digest_path = self._digest_path(stage)
        if digest_path.exists():
            recorded = digest_path.read_text().strip()
            if recorded != digest:
                raise CorruptArtifactError(
                    f"digest mismatch for {path}: recorded {recorded}, "
                    f"actual {digest}"
                )
        records = [
            json.loads(line) for line in content.splitlines() if line.strip()
        ]
        return StageArtifact(self.run_id, stage, records, digest)

    def digest(self, stage: str) -> str:
        return self.get(stage).digest


@dataclass(frozen=True)
class CacheKey:
    """Stable identity of one pipeline cell's model exchange.

    ``subject`` carries the extra cell dimension (the summarizer in stage-1
    ranking, for instance) and ``pool`` the participating model names, so
    keys stay distinct across cells and across pool-sweep subsets.
    """

    stage: str
    model: str
    dialogue_id: str | None = None
    question_index: int | None = None
    sample_index: int | None = None
    attempt: int = 0
    subject: str | None = None
    pool: str | None = None
    template_digest: str = ""

    def token(self) -> str:
        return json.dumps(
            [
                self.stage,
                self.model,
                self.dialogue_id,
                self.question_index,
                self.sample_index,
                self.attempt,
                self.subject,
                self.pool,
                self.template_digest,
            ],
            separators=(",", ":"),
        )

    def filename(self) -> str:
        return hashlib.sha256(self.token().encode("utf-8")).hexdigest() + ".json"


class ExchangeCache:
    """Immutable record of every model exchange, for resume and replay."""

    def __init__(self, directory: "Path | str"):
        self.directory = Path(directory)

    def _path(self, key: CacheKey) -> Path:
        return self.directory / key.filename()

    def lookup(self, key: CacheKey) -> dict | None:
        path = self._path(key)
        if not path.exists():
            return None
        return json.loads(path.read_text(encoding="utf-8"))

    def store(self, key: CacheKey, exchange: dict) -> None:
        path = self._path(key)
        if path.exists():
            return
        record = dict(exchange, key=key.token())
        _atomic_write(path, _dumps(record) + "\n")

    def __len__(self) -> int:
        if not self.directory.exists():
            return 0
        return sum(1 for _ in self.directory.glob("*.json"))


_TURN_RE = re.compile(r"^\s*(#?[\w .'-]+#?)\s*:\s*(.*)$")


def _split_turns(dialogue_text: str, line_no: int) -> list[Turn]:
    turns = []
    for raw in re.split(r"\r\n|\n", dialogue_text):
        raw = raw.strip()
        if not raw:
            continue
        match = _TURN_RE.match(raw)
        if match is None:
            # Continuation of the previous utterance.
            if turns:
                turns[-1] = Turn(turns[-1].speaker, turns[-1].text + " " + raw)
                continue
            raise StageError(
                f"line {line_no}: cannot split dialogue turn {raw[:80]!r}"
            )
        speaker = match.group(1).strip("#").strip()
        turns.append(Turn(speaker, match.group(2).strip()))
    return turns


def load_corpus(
    path: "Path | str",
    format: str = "native",
    task_prompt: str | None = None,
) -> list[Dialogue]:
    """Load and normalize a corpus file into Dialogue records.

    ``native`` records carry their own task prompts; samsum- and
    dialogsum-style records take the shared ``task_prompt`` argument and
    keep their reference summaries when present.
    """
    if format not in CORPUS_FORMATS:
        raise ValueError(f"unknown corpus format {format!r}; valid: {CORPUS_FORMATS}")
    path = Path(path)
    dialogues: list[Dialogue] = []
    seen_ids: set[str] = set()
    with path.open(encoding="utf-8") as handle:
        for line_no, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise StageError(f"line {line_no}: malformed JSON record: {exc}")
            dialogue = _normalize_record(record, format, task_prompt, line_no)
            if dialogue.id in seen_ids:
                raise StageError(
                    f"line {line_no}: duplicate dialogue id {dialogue.id!r}"
                )
            seen_ids.add(dialogue.id)
            dialogues.append(dialogue)
    if not dialogues:
        raise StageError(f"corpus file {path} contains no dialogues")
    return dialogues


def _normalize_record(
    record: dict, format: str, task_prompt: str | None, line_no: int
) -> Dialogue:
    if format == "native":
        for required in ("id", "turns", "task_prompt"):
            if required not in record:
                raise StageError(
                    f"line {line_no}: native record missing field {required!r}"
                )
        if not record["turns"]:
            raise StageError(f"line {line_no}: dialogue has no turns")
        return Dialogue.from_record(record)
    if task_prompt is None:
        raise StageError(
            f"{format} corpus needs a task_prompt (none configured)"
        )
    dialogue_id = str(
        record.get("id") or record.get("fname") or f"line-{line_no}"
    )
    text = record.get("dialogue")
    if not text:
        raise StageError(f"line {line_no}: record missing 'dialogue' field")
    turns = _split_turns(text, line_no)
    if not turns:
        raise StageError(f"line {line_no}: dialogue has no turns")
    return Dialogue(
        id=dialogue_id,
        turns=turns,
        task_prompt=task_prompt,
        reference=record.get("summary"),
    )


def corpus_stats(dialogues: Iterable[Dialogue]) -> dict:
    """Turn and token statistics, comparable to dataset summary tables."""
    dialogues = list(dialogues)
    turn_counts = [len(d.turns) for d in dialogues]
    token_counts = [len(tokenize(d.serialized())) for d in dialogues]
    count = len(dialogues)
    return {
        "dialogues": count,
        "avg_turns": sum(turn_counts) / count if count else 0.0,
        "avg_tokens": sum(token_counts) / count if count else 0.0,
    }
