"""End-to-end orchestration: generation, two-stage evaluation, export,
judge scoring, and reference evaluation.

Stage functions are pure with respect to the artifact store: they take and
return record lists; persistence is the caller's job. Under a mock pool,
every stage output is a deterministic function of (corpus, behaviors,
global seed, N).
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from itertools import combinations
from typing import Callable, Sequence

import numpy as np

from ..errors import ParseFailure, StageCellError, StageError
from ..gateway.client import ChatRequest, Gateway
from ..gateway.parsers import (
    NOT_INCLUDED,
    parse_judge_score,
    parse_qa_pairs,
    parse_ranking,
    place_not_included_last,
    unshuffle_ranking,
)
from ..gateway.registry import ModelRegistry
from ..gateway.templates import (
    JUDGE_DIMENSIONS,
    PromptTemplate,
    builtin_template,
    judge_template,
    ranking_template,
    render_prompt,
)
from ..metrics import score_corpus
from ..ranking import (
    ModelId,
    argmax_with_tiebreak,
    kemeny_aggregate,
    mrr,
    seeded_shuffle,
    weighted_score,
)
from ..store import CacheKey
from .types import (
    CandidateAnswer,
    Dialogue,
    JudgeScore,
    QaPair,
    SelectionRecord,
    Stage1Record,
    SummaryCandidate,
)

logger = logging.getLogger("quartz")

SUMMARY_INPUT_SKELETON = "[Conversation]"


def _normalize_question(question: str) -> str:
    return " ".join(question.lower().split())


class Pipeline:
    """Runs the pipeline stages against a model registry via a gateway."""

    def __init__(
        self,
        registry: ModelRegistry,
        gateway: Gateway,
        *,
        qa_template: PromptTemplate | None = None,
        answer_template: PromptTemplate | None = None,
        n_samples: int = 5,
        alpha_self: float = 0.8,
        global_seed: int = 0,
        parse_retries: int = 3,
        parallelism: int = 1,
    ):
        if n_samples < 1:
            raise ValueError(f"n_samples must be >= 1, got {n_samples}")
        self.registry = registry
        self.gateway = gateway
        self.qa_template = qa_template or builtin_template("qa.generic")
        self.answer_template = answer_template or builtin_template("answer.default")
        self.n_samples = n_samples
        self.alpha_self = alpha_self
        self.global_seed = global_seed
        self.parse_retries = parse_retries
        self.parallelism = parallelism

    # ------------------------------------------------------------------
    # plumbing

    def _map(self, fn: Callable, tasks: Sequence) -> list:
        if self.parallelism <= 1 or len(tasks) <= 1:
            return [fn(task) for task in tasks]
        with ThreadPoolExecutor(max_workers=self.parallelism) as executor:
            return list(executor.map(fn, tasks))

    def _request(
        self, model: ModelId, role: str, rendered, attempt: int = 0
    ) -> ChatRequest:
        return ChatRequest(
            model=model.name,
            role=role,
            instruction=rendered.instruction,
            input_text=rendered.input_text,
            temperature=self.registry.decoding.temperature_for(role),
            max_tokens=self.registry.decoding.max_output_tokens,
            attempt=attempt,
        )

    @property
    def _pool_token(self) -> str:
        return ",".join(self.registry.names)

    # ------------------------------------------------------------------
    # Step 1: generation

    def generate_summaries(
        self, corpus: Sequence[Dialogue]
    ) -> list[SummaryCandidate]:
        """One summary per (dialogue, pool model), from the task prompt."""
        tasks = [(d, m) for d in corpus for m in self.registry.models]

        def produce(task) -> SummaryCandidate:
            dialogue, model = task
            if not dialogue.task_prompt:
                raise StageError(f"dialogue {dialogue.id!r} has no task prompt")
            template = PromptTemplate(
                "summary", dialogue.task_prompt, SUMMARY_INPUT_SKELETON
            )
            bindings = {}
            placeholders = template.placeholders()
            if "Conversation" in placeholders:
                bindings["Conversation"] = dialogue.serialized()
            if "Header" in placeholders:
                if dialogue.header is None:
                    raise StageError(
                        f"dialogue {dialogue.id!r}: task prompt expects a "
                        "header but none is set"
                    )
                bindings["Header"] = dialogue.header
            rendered = render_prompt(template, bindings)
            key = CacheKey(
                stage="summary",
                model=model.name,
                dialogue_id=dialogue.id,
                template_digest=template.digest(),
            )
            text = self.gateway.complete(
                model, self._request(model, "summary", rendered), key
            )
            if not text.strip():
                raise StageError(
                    f"model {model.name!r} returned an empty summary for "
                    f"dialogue {dialogue.id!r}"
                )
            return SummaryCandidate(dialogue.id, model.name, text)

        return self._map(produce, tasks)

    def generate_and_merge_qa(self, corpus: Sequence[Dialogue]) -> list[QaPair]:
        """Prompt every model for gold QA pairs and merge per dialogue.

        Exact-duplicate questions (case/whitespace-normalized) are dropped,
        first occurrence wins, and indices are reassigned densely from 1.
        """
        tasks = [(d, m) for d in corpus for m in self.registry.models]

        def produce(task) -> list[tuple[str, str, str, str]]:
            dialogue, model = task
            bindings = {"Conversation": dialogue.serialized()}
            rendered = render_prompt(self.qa_template, bindings)
            for attempt in range(self.parse_retries + 1):
                key = CacheKey(
                    stage="qa",
                    model=model.name,
                    dialogue_id=dialogue.id,
                    attempt=attempt,
                    template_digest=self.qa_template.digest(),
                )
                text = self.gateway.complete(
                    model, self._request(model, "qa", rendered, attempt), key
                )
                try:
                    pairs = parse_qa_pairs(text)
                except ParseFailure:
                    continue
                return [
                    (dialogue.id, model.name, question, answer)
                    for question, answer in pairs
                ]
            logger.warning(
                "model %s produced no parseable QA pairs for dialogue %s; "
                "it contributes zero pairs",
                model.name,
                dialogue.id,
            )
            return []

        raw = self._map(produce, tasks)
        merged: list[QaPair] = []
        for dialogue in corpus:
            seen: dict[str, QaPair] = {}
            index = 0
            for chunk in raw:
                for dialogue_id, generator, question, answer in chunk:
                    if dialogue_id != dialogue.id:
                        continue
                    normalized = _normalize_question(question)
                    if normalized in seen:
                        kept = seen[normalized]
                        if generator not in kept.contributors:
                            kept.contributors.append(generator)
                        continue
                    index += 1
                    pair = QaPair(dialogue.id, index, question, answer, generator)
                    seen[normalized] = pair
                    merged.append(pair)
            if index == 0:
                raise StageError(
                    f"dialogue {dialogue.id!r} has zero gold QA pairs"
                )
        return merged

    def answer_questions(
        self,
        summaries: Sequence[SummaryCandidate],
        qa_pairs: Sequence[QaPair],
    ) -> list[CandidateAnswer]:
        """One candidate answer per (question, summary, responder).

        Responders see only the summary text, never the dialogue.
        """
        summary_by = {(s.dialogue_id, s.summarizer): s for s in summaries}
        tasks = [
            (qa, summarizer, responder)
            for qa in qa_pairs
            for summarizer in self.registry.models
            for responder in self.registry.models
        ]

        def produce(task) -> CandidateAnswer:
            qa, summarizer, responder = task
            summary = summary_by.get((qa.dialogue_id, summarizer.name))
            if summary is None:
                raise StageError(
                    f"no summary by {summarizer.name!r} for dialogue "
                    f"{qa.dialogue_id!r}"
                )
            rendered = render_prompt(
                self.answer_template,
                {"Summary": summary.text, "Question": qa.question},
            )
            key = CacheKey(
                stage="answer",
                model=responder.name,
                dialogue_id=qa.dialogue_id,
                question_index=qa.question_index,
                subject=summarizer.name,
                template_digest=self.answer_template.digest(),
            )
            text = self.gateway.complete(
                responder, self._request(responder, "answer", rendered), key
            )
            return CandidateAnswer(
                qa.dialogue_id,
                qa.question_index,
                summarizer.name,
                responder.name,
                text.strip(),
            )

        return self._map(produce, tasks)

    # ------------------------------------------------------------------
    # Step 2: two-stage evaluation

    def _consensus_ranking(
        self,
        *,
        stage: str,
        dialogue_id: str,
        question_index: int,
        question: str,
        gold: str,
        evaluator: ModelId,
        answer_by_index: dict[int, str],
        subject: str | None,
    ) -> list[int]:
        """Kemeny consensus of N shuffled ranking prompts for one cell.

        Each sample shuffles the candidate presentation, asks the evaluator
        for a rank list, forces NOT_INCLUDED answers last, and maps the
        result back to model indices. A sample that stays unparseable after
        the retry budget is dropped; fewer than ceil(N/2) valid samples is
        a cell-level error.
        """
        indices = sorted(answer_by_index)
        size = len(indices)
        template = ranking_template(size)
        samples: list[list[int]] = []
        for n in range(self.n_samples):
            ranking: list[int] | None = None
            for attempt in range(self.parse_retries + 1):
                seed_key: list[object] = [
                    dialogue_id,
                    question_index,
                    evaluator.name,
                    stage,
                    n,
                ]
                if attempt:
                    seed_key.append(attempt)
                presentation = seeded_shuffle(indices, seed_key, self.global_seed)
                bindings: dict[str, str] = {
                    "Question": question,
                    "Ground Truth Answer": gold,
                }
                for slot, index in enumerate(presentation, start=1):
                    bindings[f"Answer_{slot}"] = answer_by_index[index]
                rendered = render_prompt(template, bindings)
                key = CacheKey(
                    stage=stage,
                    model=evaluator.name,
                    dialogue_id=dialogue_id,
                    question_index=question_index,
                    sample_index=n,
                    attempt=attempt,
                    subject=subject,
                    pool=self._pool_token,
                    template_digest=template.digest(),
                )
                text = self.gateway.complete(
                    evaluator, self._request(evaluator, "rank", rendered, attempt), key
                )
                try:
                    order = parse_ranking(text, size)
                except ParseFailure:
                    continue
                flagged = {
                    pos
                    for pos, index in enumerate(presentation)
                    if answer_by_index[index].strip() == NOT_INCLUDED
                }
                order = place_not_included_last(order, flagged)
                ranking = unshuffle_ranking(order, presentation)
                break
            if ranking is not None:
                samples.append(ranking)
        required = math.ceil(self.n_samples / 2)
        if len(samples) < required:
            raise StageCellError(
                f"cell {stage}/{dialogue_id}/q{question_index}"
                f"/{subject or '-'}/{evaluator.name}: only {len(samples)} of "
                f"{self.n_samples} ranking samples parsed (need {required})"
            )
        return kemeny_aggregate(samples)

    def _score_subjects(
        self,
        rankings: dict[int, list[list[int]]],
    ) -> tuple[dict[str, dict], dict[ModelId, float], bool]:
        """MRR per (subject, evaluator), self-penalized totals, tie flag.

        ``rankings`` maps evaluator index to the per-question optimal
        rankings over subject indices.
        """
        scores: dict[str, dict] = {}
        totals: dict[ModelId, float] = {}
        for subject in self.registry.models:
            per_evaluator = {
                evaluator_index: mrr(per_question, subject.index)
                for evaluator_index, per_question in rankings.items()
            }
            total = weighted_score(
                per_evaluator,
                subject.index,
                alpha_self=self.alpha_self,
                pool=[m.index for m in self.registry.models],
            )
            totals[subject] = total
            scores[subject.name] = {
                "total": total,
                "per_evaluator": {
                    self.registry.models[e].name: {
                        "value": value.value,
                        "question_count": value.question_count,
                    }
                    for e, value in per_evaluator.items()
                },
            }
        best_total = max(totals.values())
        tie = sum(1 for value in totals.values() if value == best_total) > 1
        return scores, totals, tie

    def stage1_evaluate(
        self,
        answers: Sequence[CandidateAnswer],
        qa_pairs: Sequence[QaPair],
    ) -> list[Stage1Record]:
        """Best responder per (dialogue, summarizer) via rank aggregation."""
        qa_by_dialogue: dict[str, list[QaPair]] = {}
        for qa in qa_pairs:
            qa_by_dialogue.setdefault(qa.dialogue_id, []).append(qa)
        for pairs in qa_by_dialogue.values():
            pairs.sort(key=lambda qa: qa.question_index)
        answer_by = {
            (a.dialogue_id, a.question_index, a.summarizer, a.responder): a.text
            for a in answers
        }
        dialogue_ids = sorted(qa_by_dialogue)
        cells = [
            (dialogue_id, summarizer, evaluator, qa)
            for dialogue_id in dialogue_ids
            for summarizer in self.registry.models
            for evaluator in self.registry.models
            for qa in qa_by_dialogue[dialogue_id]
        ]

        def rank_cell(cell) -> list[int]:
            dialogue_id, summarizer, evaluator, qa = cell
            answer_by_index = {}
            for responder in self.registry.models:
                key = (dialogue_id, qa.question_index, summarizer.name, responder.name)
                if key not in answer_by:
                    raise StageError(f"missing candidate answer for {key!r}")
                answer_by_index[responder.index] = answer_by[key]
            return self._consensus_ranking(
                stage="stage1",
                dialogue_id=dialogue_id,
                question_index=qa.question_index,
                question=qa.question,
                gold=qa.answer,
                evaluator=evaluator,
                answer_by_index=answer_by_index,
                subject=summarizer.name,
            )

        optimal = self._map(rank_cell, cells)
        by_group: dict[tuple[str, str], dict[int, list[list[int]]]] = {}
        for cell, ranking in zip(cells, optimal):
            dialogue_id, summarizer, evaluator, _ = cell
            group = by_group.setdefault((dialogue_id, summarizer.name), {})
            group.setdefault(evaluator.index, []).append(ranking)

        records: list[Stage1Record] = []
        for dialogue_id in dialogue_ids:
            for summarizer in self.registry.models:
                rankings = by_group[(dialogue_id, summarizer.name)]
                scores, totals, tie = self._score_subjects(rankings)
                best = argmax_with_tiebreak(totals)
                records.append(
                    Stage1Record(
                        dialogue_id=dialogue_id,
                        summarizer=summarizer.name,
                        best_responder=best.name,
                        scores=scores,
                        tie_broken=tie,
                    )
                )
        return records

    def stage2_evaluate(
        self,
        stage1_records: Sequence[Stage1Record],
        answers: Sequence[CandidateAnswer],
        qa_pairs: Sequence[QaPair],
        summaries: Sequence[SummaryCandidate],
    ) -> list[SelectionRecord]:
        """Best summary per dialogue, ranking the stage-1 winning answers."""
        best_responder = {
            (r.dialogue_id, r.summarizer): r.best_responder for r in stage1_records
        }
        answer_by = {
            (a.dialogue_id, a.question_index, a.summarizer, a.responder): a.text
            for a in answers
        }
        summary_by = {(s.dialogue_id, s.summarizer): s.text for s in summaries}
        qa_by_dialogue: dict[str, list[QaPair]] = {}
        for qa in qa_pairs:
            qa_by_dialogue.setdefault(qa.dialogue_id, []).append(qa)
        for pairs in qa_by_dialogue.values():
            pairs.sort(key=lambda qa: qa.question_index)
        dialogue_ids = sorted(qa_by_dialogue)

        def best_answer(dialogue_id: str, question_index: int, summarizer: ModelId) -> str:
            responder = best_responder.get((dialogue_id, summarizer.name))
            if responder is None:
                raise StageError(
                    f"no stage-1 record for dialogue {dialogue_id!r}, "
                    f"summarizer {summarizer.name!r}"
                )
            return answer_by[(dialogue_id, question_index, summarizer.name, responder)]

        cells = [
            (dialogue_id, evaluator, qa)
            for dialogue_id in dialogue_ids
            for evaluator in self.registry.models
            for qa in qa_by_dialogue[dialogue_id]
        ]

        def rank_cell(cell) -> list[int]:
            dialogue_id, evaluator, qa = cell
            answer_by_index = {
                summarizer.index: best_answer(
                    dialogue_id, qa.question_index, summarizer
                )
                for summarizer in self.registry.models
            }
            return self._consensus_ranking(
                stage="stage2",
                dialogue_id=dialogue_id,
                question_index=qa.question_index,
                question=qa.question,
                gold=qa.answer,
                evaluator=evaluator,
                answer_by_index=answer_by_index,
                subject=None,
            )

        optimal = self._map(rank_cell, cells)
        by_dialogue: dict[str, dict[int, list[list[int]]]] = {}
        for cell, ranking in zip(cells, optimal):
            dialogue_id, evaluator, _ = cell
            by_dialogue.setdefault(dialogue_id, {}).setdefault(
                evaluator.index, []
            ).append(ranking)

        selections: list[SelectionRecord] = []
        for dialogue_id in dialogue_ids:
            scores, totals, tie = self._score_subjects(by_dialogue[dialogue_id])
            winner = argmax_with_tiebreak(totals)
            selections.append(
                SelectionRecord(
                    dialogue_id=dialogue_id,
                    best_summarizer=winner.name,
                    best_summary=summary_by[(dialogue_id, winner.name)],
                    stage1_best={
                        m.name: best_responder[(dialogue_id, m.name)]
                        for m in self.registry.models
                    },
                    scores=scores,
                    tie_broken=tie,
                )
            )
        return selections

    # ------------------------------------------------------------------
    # Step 3 and reporting

    def select_finetune_model(
        self, selections: Sequence[SelectionRecord]
    ) -> tuple[ModelId, dict[str, int]]:
        """The summarizer with the most selected summaries, plus win counts.

        Ties go to the higher mean stage-2 total, then registry order.
        """
        if not selections:
            raise ValueError("no selection records")
        wins = {m.name: 0 for m in self.registry.models}
        for selection in selections:
            wins[selection.best_summarizer] += 1

        def mean_total(name: str) -> float:
            values = [s.scores[name]["total"] for s in selections]
            return sum(values) / len(values)

        winner = min(
            self.registry.models,
            key=lambda m: (-wins[m.name], -mean_total(m.name), m.index),
        )
        return winner, wins

    def judge_summaries(
        self,
        summaries: Sequence[SummaryCandidate],
        corpus: Sequence[Dialogue],
        judge_registry: ModelRegistry,
        judge_gateway: Gateway | None = None,
    ) -> tuple[list[JudgeScore], list[dict]]:
        """Score each summary on the four quality dimensions, one shot each.

        A reply that stays unparseable after retries records a missing
        score and is excluded from the aggregates.
        """
        gateway = judge_gateway or Gateway(
            judge_registry,
            self.gateway.cache,
            replay=self.gateway.replay,
            record=self.gateway.record,
            max_retries=self.gateway.max_retries,
        )
        dialogue_by = {d.id: d for d in corpus}
        tasks = [
            (summary, judge, dimension)
            for summary in summaries
            for judge in judge_registry.models
            for dimension in JUDGE_DIMENSIONS
        ]

        def produce(task) -> JudgeScore:
            summary, judge, dimension = task
            dialogue = dialogue_by.get(summary.dialogue_id)
            if dialogue is None:
                raise StageError(
                    f"summary references unknown dialogue {summary.dialogue_id!r}"
                )
            template = judge_template(dimension)
            rendered = render_prompt(
                template,
                {"Dialogue": dialogue.serialized(), "Summary": summary.text},
            )
            score: int | None = None
            for attempt in range(self.parse_retries + 1):
                key = CacheKey(
                    stage="judge",
                    model=judge.name,
                    dialogue_id=summary.dialogue_id,
                    attempt=attempt,
                    subject=summary.summarizer,
                    template_digest=template.digest(),
                )
                request = ChatRequest(
                    model=judge.name,
                    role=template.role,
                    instruction=rendered.instruction,
                    input_text=rendered.input_text,
                    temperature=judge_registry.decoding.ranking_temperature,
                    max_tokens=judge_registry.decoding.max_output_tokens,
                    attempt=attempt,
                )
                text = gateway.complete(judge, request, key)
                try:
                    score = parse_judge_score(text)
                    break
                except ParseFailure:
                    continue
            if score is None:
                logger.warning(
                    "judge %s gave no parseable %s score for %s/%s",
                    judge.name,
                    dimension,
                    summary.dialogue_id,
                    summary.summarizer,
                )
            return JudgeScore(
                summary.dialogue_id, summary.summarizer, judge.name, dimension, score
            )

        cells = self._map(produce, tasks)
        aggregates = aggregate_judge_scores(cells)
        return cells, aggregates

    # ------------------------------------------------------------------

    def run_selection(
        self,
        summaries: Sequence[SummaryCandidate],
        qa_pairs: Sequence[QaPair],
        answers: Sequence[CandidateAnswer],
    ) -> tuple[list[Stage1Record], list[SelectionRecord]]:
        stage1 = self.stage1_evaluate(answers, qa_pairs)
        stage2 = self.stage2_evaluate(stage1, answers, qa_pairs, summaries)
        return stage1, stage2


def aggregate_judge_scores(cells: Sequence[JudgeScore]) -> list[dict]:
    """Per-(summarizer, judge) dimension means plus their average."""
    grouped: dict[tuple[str, str], list[JudgeScore]] = {}
    for cell in cells:
        grouped.setdefault((cell.summarizer, cell.judge), []).append(cell)
    rows = []
    for (summarizer, judge), group in sorted(grouped.items()):
        row: dict = {"row": summarizer, "judge": judge, "missing": 0}
        dimension_means = []
        for dimension in JUDGE_DIMENSIONS:
            values = [
                c.score for c in group if c.dimension == dimension and c.score is not None
            ]
            row["missing"] += sum(
                1 for c in group if c.dimension == dimension and c.score is None
            )
            row[dimension] = sum(values) / len(values) if values else None
            if values:
                dimension_means.append(row[dimension])
        row["average"] = (
            sum(dimension_means) / len(dimension_means) if dimension_means else None
        )
        rows.append(row)
    return rows


def export_finetune_dataset(
    selections: Sequence[SelectionRecord],
    corpus: Sequence[Dialogue],
    finetune_model: str | None = None,
    win_counts: dict[str, int] | None = None,
) -> tuple[list[dict], dict]:
    """Fine-tuning records plus a sidecar metadata block for the trainer.

    One record per dialogue, in corpus order; the output field is the
    selected summary, byte for byte.
    """
    from .types import FinetuneRecord, LORA_HYPERPARAMETERS

    selection_by = {s.dialogue_id: s for s in selections}
    missing = [d.id for d in corpus if d.id not in selection_by]
    if missing:
        raise StageError(
            f"no selected summary for dialogues: {missing[:20]}"
            + (" ..." if len(missing) > 20 else "")
        )
    records = []
    for dialogue in corpus:
        selection = selection_by[dialogue.id]
        records.append(
            FinetuneRecord(
                instruction=dialogue.task_prompt,
                input=dialogue.serialized(),
                output=selection.best_summary,
                meta={
                    "dialogue_id": dialogue.id,
                    "summarizer": selection.best_summarizer,
                    "score": selection.scores[selection.best_summarizer]["total"],
                },
            ).to_record()
        )
    sidecar = {
        "hyperparameters": dict(LORA_HYPERPARAMETERS),
        "record_count": len(records),
    }
    if finetune_model is not None:
        sidecar["finetune_model"] = finetune_model
    if win_counts is not None:
        sidecar["win_counts"] = dict(win_counts)
    return records, sidecar


def evaluate_references(
    summaries: Sequence[SummaryCandidate],
    corpus: Sequence[Dialogue],
    selections: Sequence[SelectionRecord] | None = None,
    confidence: float = 0.95,
) -> list[dict]:
    """Reference metrics per summarizer plus a best-selected row.

    Every summarized dialogue must carry a reference; unpaired ids are an
    error.
    """
    reference_by = {d.id: d.reference for d in corpus}
    corpus_order = {d.id: i for i, d in enumerate(corpus)}
    unpaired = sorted(
        {s.dialogue_id for s in summaries if reference_by.get(s.dialogue_id) is None}
    )
    if unpaired:
        raise ValueError(f"dialogues without references: {unpaired}")
    rows: list[dict] = []
    by_summarizer: dict[str, list[SummaryCandidate]] = {}
    for summary in summaries:
        by_summarizer.setdefault(summary.summarizer, []).append(summary)
    for summarizer, group in by_summarizer.items():
        group = sorted(group, key=lambda s: corpus_order[s.dialogue_id])
        report = score_corpus(
            [s.text for s in group],
            [reference_by[s.dialogue_id] for s in group],
            confidence,
        )
        rows.append({"row": summarizer, **report.to_record()})
    if selections:
        selected = sorted(selections, key=lambda s: corpus_order[s.dialogue_id])
        unpaired = sorted(
            {s.dialogue_id for s in selected if reference_by.get(s.dialogue_id) is None}
        )
        if unpaired:
            raise ValueError(f"dialogues without references: {unpaired}")
        report = score_corpus(
            [s.best_summary for s in selected],
            [reference_by[s.dialogue_id] for s in selected],
            confidence,
        )
        rows.append({"row": "best_selected", **report.to_record()})
    return rows


def filter_pool_artifacts(
    names: Sequence[str],
    summaries: Sequence[SummaryCandidate],
    qa_pairs: Sequence[QaPair],
    answers: Sequence[CandidateAnswer],
) -> tuple[list[SummaryCandidate], list[QaPair], list[CandidateAnswer]]:
    """Restrict stage artifacts to a model subset, reindexing questions.

    QA pairs none of whose contributing generators are in the subset are
    dropped and the surviving question indices are compacted; answers are
    remapped to the new indices.
    """
    wanted = set(names)
    kept_summaries = [s for s in summaries if s.summarizer in wanted]
    kept_qa: list[QaPair] = []
    index_map: dict[tuple[str, int], int] = {}
    by_dialogue: dict[str, list[QaPair]] = {}
    for qa in qa_pairs:
        by_dialogue.setdefault(qa.dialogue_id, []).append(qa)
    for dialogue_id, pairs in by_dialogue.items():
        pairs = sorted(pairs, key=lambda qa: qa.question_index)
        new_index = 0
        for qa in pairs:
            contributors = [c for c in qa.contributors if c in wanted]
            if not contributors:
                continue
            new_index += 1
            index_map[(dialogue_id, qa.question_index)] = new_index
            kept_qa.append(
                QaPair(
                    dialogue_id,
                    new_index,
                    qa.question,
                    qa.answer,
                    contributors[0],
                    contributors,
                )
            )
    kept_answers = [
        CandidateAnswer(
            a.dialogue_id,
            index_map[(a.dialogue_id, a.question_index)],
            a.summarizer,
            a.responder,
            a.text,
        )
        for a in answers
        if a.summarizer in wanted
        and a.responder in wanted
        and (a.dialogue_id, a.question_index) in index_map
    ]
    return kept_summaries, kept_qa, kept_answers


def pool_sweep(
    make_pipeline: Callable[[ModelRegistry], Pipeline],
    registry: ModelRegistry,
    corpus: Sequence[Dialogue],
    summaries: Sequence[SummaryCandidate],
    qa_pairs: Sequence[QaPair],
    answers: Sequence[CandidateAnswer],
    subset_size: int,
) -> dict:
    """Re-run selection over every model subset of the given size.

    Generation artifacts are reused; only the ranking stages are re-run
    per subset. Reports win counts, mean winner scores, and reference
    metrics when references are available.
    """
    if not 1 <= subset_size <= len(registry):
        raise ValueError(
            f"subset size must be in 1..{len(registry)}, got {subset_size}"
        )
    has_references = all(d.reference is not None for d in corpus)
    subsets = []
    for names in combinations(registry.names, subset_size):
        sub_registry = registry.subset(names)
        pipeline = make_pipeline(sub_registry)
        sub_summaries, sub_qa, sub_answers = filter_pool_artifacts(
            names, summaries, qa_pairs, answers
        )
        _, selections = pipeline.run_selection(sub_summaries, sub_qa, sub_answers)
        _, wins = pipeline.select_finetune_model(selections)
        mean_winner_score = float(
            np.mean(
                [s.scores[s.best_summarizer]["total"] for s in selections]
            )
        )
        report: dict = {
            "pool": list(names),
            "wins": wins,
            "mean_winner_score": mean_winner_score,
        }
        if has_references:
            rows = evaluate_references(sub_summaries, corpus, selections)
            best_row = next(r for r in rows if r["row"] == "best_selected")
            report["best_selected"] = {
                metric: best_row[metric]
                for metric in ("rouge1", "rouge2", "rougeL", "bleu")
            }
        subsets.append(report)
    aggregate: dict = {
        "mean_winner_score": {
            "mean": float(np.mean([s["mean_winner_score"] for s in subsets])),
            "std": float(np.std([s["mean_winner_score"] for s in subsets])),
        }
    }
    if has_references:
        for metric in ("rouge1", "rouge2", "rougeL", "bleu"):
            values = [s["best_selected"][metric] for s in subsets]
            aggregate[metric] = {
                "mean": float(np.mean(values)),
                "std": float(np.std(values)),
            }
    return {
        "subset_size": subset_size,
        "subsets": subsets,
        "aggregate": aggregate,
    }
