"""Command-line entry points for the pipeline stages."""

from __future__ import annotations

import functools
import json
import logging
from dataclasses import dataclass
from pathlib import Path

import click

from .config import ModelConfig, RunConfig, build_registry, load_config
from .errors import ArtifactNotFoundError, ConfigError, QuartzError
from .gateway.client import Gateway
from .gateway.registry import ModelRegistry
from .gateway.templates import builtin_template
from .pipeline.stages import (
    Pipeline,
    evaluate_references,
    export_finetune_dataset,
    pool_sweep,
)
from .pipeline.types import (
    CandidateAnswer,
    Dialogue,
    QaPair,
    SelectionRecord,
    Stage1Record,
    SummaryCandidate,
)
from .store import ArtifactStore, ExchangeCache, load_corpus

logger = logging.getLogger("quartz")


@dataclass
class Runtime:
    """Everything a stage command needs, wired from one config."""

    config: RunConfig
    registry: ModelRegistry
    gateway: Gateway
    store: ArtifactStore
    pipeline: Pipeline
    cache: ExchangeCache
    replay: bool
    judge_registry: ModelRegistry | None = None
    judge_gateway: Gateway | None = None

    def make_pipeline(self, registry: ModelRegistry) -> Pipeline:
        gateway = Gateway(
            registry,
            self.cache,
            replay=self.replay,
            record=self.config.record_exchanges,
            max_retries=self.config.transport_retries,
        )
        return Pipeline(
            registry,
            gateway,
            qa_template=self.pipeline.qa_template,
            answer_template=self.pipeline.answer_template,
            n_samples=self.config.n_rank_samples,
            alpha_self=self.config.alpha_self,
            global_seed=self.config.global_seed,
            parse_retries=self.config.parse_retries,
            parallelism=self.config.parallelism,
        )


def _build_runtime(
    config_path: str,
    run_id: str,
    replay: bool,
    seed: int | None,
    parallelism: int | None,
    artifacts_root: str | None,
) -> Runtime:
    config = load_config(config_path)
    if seed is not None:
        config = config.model_copy(update={"global_seed": seed})
    if parallelism is not None:
        config = config.model_copy(update={"parallelism": parallelism})
    if artifacts_root is not None:
        config = config.model_copy(update={"artifacts_root": artifacts_root})
    store = ArtifactStore(config.artifacts_root, run_id)
    cache = ExchangeCache(store.run_dir / "exchanges")
    registry = build_registry(config.models, config)
    gateway = Gateway(
        registry,
        cache,
        replay=replay,
        record=config.record_exchanges,
        max_retries=config.transport_retries,
    )
    pipeline = Pipeline(
        registry,
        gateway,
        qa_template=builtin_template(config.prompts.qa_template),
        answer_template=builtin_template(config.prompts.answer_template),
        n_samples=config.n_rank_samples,
        alpha_self=config.alpha_self,
        global_seed=config.global_seed,
        parse_retries=config.parse_retries,
        parallelism=config.parallelism,
    )
    runtime = Runtime(
        config=config,
        registry=registry,
        gateway=gateway,
        store=store,
        pipeline=pipeline,
        cache=cache,
        replay=replay,
    )
    if config.judges:
        runtime.judge_registry = build_registry(config.judges, config)
        runtime.judge_gateway = Gateway(
            runtime.judge_registry,
            cache,
            replay=replay,
            record=config.record_exchanges,
            max_retries=config.transport_retries,
        )
    return runtime


def common_options(fn):
    options = [
        click.option(
            "--config",
            "config_path",
            required=True,
            type=click.Path(exists=True, dir_okay=False),
            help="Run configuration (YAML).",
        ),
        click.option("--run-id", default="default", show_default=True),
        click.option(
            "--resume",
            is_flag=True,
            help="Reuse existing stage artifacts instead of failing.",
        ),
        click.option(
            "--replay",
            is_flag=True,
            help="Serve every exchange from the cache; never contact a backend.",
        ),
        click.option("--seed", type=int, default=None, help="Override the global seed."),
        click.option(
            "--parallelism", type=int, default=None, help="Override worker count."
        ),
        click.option(
            "--artifacts-root",
            default=None,
            type=click.Path(file_okay=False),
            help="Override the artifact root directory.",
        ),
    ]
    for option in reversed(options):
        fn = option(fn)

    @functools.wraps(fn)
    def wrapper(
        config_path, run_id, resume, replay, seed, parallelism, artifacts_root, **kwargs
    ):
        runtime = _build_runtime(
            config_path, run_id, replay, seed, parallelism, artifacts_root
        )
        try:
            return fn(runtime, resume, **kwargs)
        except QuartzError as exc:
            raise click.ClickException(str(exc)) from exc

    return wrapper


# ----------------------------------------------------------------------
# artifact helpers


def _ensure_corpus(runtime: Runtime, resume: bool) -> list[Dialogue]:
    if runtime.store.has("corpus"):
        records = runtime.store.get("corpus").records
        return [Dialogue.from_record(r) for r in records]
    config = runtime.config
    corpus = load_corpus(
        config.dataset.path, config.dataset.format, config.dataset.task_prompt
    )
    runtime.store.put("corpus", [d.to_record() for d in corpus], resume=resume)
    return corpus


def _require(runtime: Runtime, stage: str, needed_by: str) -> list[dict]:
    try:
        return runtime.store.get(stage).records
    except ArtifactNotFoundError as exc:
        raise ArtifactNotFoundError(
            f"{needed_by} needs the {stage!r} artifact; run the "
            f"{stage!r}-producing stage first ({exc})"
        ) from exc


def _load_summaries(runtime: Runtime, needed_by: str) -> list[SummaryCandidate]:
    return [
        SummaryCandidate.from_record(r)
        for r in _require(runtime, "summaries", needed_by)
    ]


def _load_qa(runtime: Runtime, needed_by: str) -> list[QaPair]:
    return [QaPair.from_record(r) for r in _require(runtime, "qa", needed_by)]


def _load_answers(runtime: Runtime, needed_by: str) -> list[CandidateAnswer]:
    return [
        CandidateAnswer.from_record(r) for r in _require(runtime, "answers", needed_by)
    ]


def _load_stage1(runtime: Runtime, needed_by: str) -> list[Stage1Record]:
    return [Stage1Record.from_record(r) for r in _require(runtime, "stage1", needed_by)]


def _load_selections(runtime: Runtime, needed_by: str) -> list[SelectionRecord]:
    return [
        SelectionRecord.from_record(r) for r in _require(runtime, "stage2", needed_by)
    ]


def _skip_if_done(runtime: Runtime, stage: str, resume: bool) -> bool:
    if resume and runtime.store.has(stage):
        click.echo(f"{stage}: already present, skipping (resume)")
        return True
    return False


def _put(runtime: Runtime, stage: str, records: list[dict], resume: bool) -> None:
    artifact = runtime.store.put(stage, records, resume=resume)
    click.echo(f"{stage}: {len(records)} records, sha256 {artifact.digest[:12]}")


def _merge_metrics(runtime: Runtime, kind: str, rows: list[dict]) -> None:
    """Replace one report kind inside the metrics artifact, keep the rest."""
    existing: list[dict] = []
    if runtime.store.has("metrics"):
        existing = [
            r for r in runtime.store.get("metrics").records if r.get("kind") != kind
        ]
    tagged = [dict(r, kind=kind) for r in rows]
    runtime.store.put("metrics", existing + tagged, resume=True)
    click.echo(f"metrics[{kind}]: {len(tagged)} rows")


def _write_sidecar(runtime: Runtime, name: str, payload: dict) -> None:
    path = runtime.store.run_dir / name
    path.write_text(
        json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    click.echo(f"{name}: written")


# ----------------------------------------------------------------------
# commands


@click.group()
@click.option("-v", "--verbose", is_flag=True, help="Enable debug logging.")
def main(verbose: bool) -> None:
    """Unsupervised summary selection over a pool of chat models."""
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )


@main.command("generate-summaries")
@common_options
def generate_summaries_cmd(runtime: Runtime, resume: bool) -> None:
    """One summary per dialogue and pool model."""
    corpus = _ensure_corpus(runtime, resume)
    if _skip_if_done(runtime, "summaries", resume):
        return
    summaries = runtime.pipeline.generate_summaries(corpus)
    _put(runtime, "summaries", [s.to_record() for s in summaries], resume)


@main.command("generate-qa")
@common_options
def generate_qa_cmd(runtime: Runtime, resume: bool) -> None:
    """Gold QA pairs from every model, merged and deduplicated."""
    corpus = _ensure_corpus(runtime, resume)
    if _skip_if_done(runtime, "qa", resume):
        return
    qa_pairs = runtime.pipeline.generate_and_merge_qa(corpus)
    _put(runtime, "qa", [q.to_record() for q in qa_pairs], resume)


@main.command("answer")
@common_options
def answer_cmd(runtime: Runtime, resume: bool) -> None:
    """Candidate answers from every summary by every responder."""
    if _skip_if_done(runtime, "answers", resume):
        return
    summaries = _load_summaries(runtime, "answer")
    qa_pairs = _load_qa(runtime, "answer")
    answers = runtime.pipeline.answer_questions(summaries, qa_pairs)
    _put(runtime, "answers", [a.to_record() for a in answers], resume)


@main.command("stage1")
@common_options
def stage1_cmd(runtime: Runtime, resume: bool) -> None:
    """Best responder per (dialogue, summary) via consensus ranking."""
    if _skip_if_done(runtime, "stage1", resume):
        return
    qa_pairs = _load_qa(runtime, "stage1")
    answers = _load_answers(runtime, "stage1")
    records = runtime.pipeline.stage1_evaluate(answers, qa_pairs)
    _put(runtime, "stage1", [r.to_record() for r in records], resume)


@main.command("stage2")
@common_options
def stage2_cmd(runtime: Runtime, resume: bool) -> None:
    """Best summary per dialogue from the stage-1 winning answers."""
    if _skip_if_done(runtime, "stage2", resume):
        return
    summaries = _load_summaries(runtime, "stage2")
    qa_pairs = _load_qa(runtime, "stage2")
    answers = _load_answers(runtime, "stage2")
    stage1 = _load_stage1(runtime, "stage2")
    selections = runtime.pipeline.stage2_evaluate(stage1, answers, qa_pairs, summaries)
    _put(runtime, "stage2", [s.to_record() for s in selections], resume)


@main.command("export-finetune")
@common_options
def export_finetune_cmd(runtime: Runtime, resume: bool) -> None:
    """Instruction/input/output dataset of the selected summaries."""
    corpus = _ensure_corpus(runtime, resume)
    selections = _load_selections(runtime, "export-finetune")
    if _skip_if_done(runtime, "finetune", resume):
        return
    winner, wins = runtime.pipeline.select_finetune_model(selections)
    records, sidecar = export_finetune_dataset(selections, corpus, winner.name, wins)
    _put(runtime, "finetune", records, resume)
    _write_sidecar(runtime, "finetune.meta.json", sidecar)
    click.echo(f"fine-tuning target: {winner.name} (wins: {wins})")


@main.command("judge")
@common_options
def judge_cmd(runtime: Runtime, resume: bool) -> None:
    """Score summaries on coherence/consistency/fluency/relevance."""
    if runtime.judge_registry is None:
        raise ConfigError("no judges configured; add a 'judges' list to the config")
    corpus = _ensure_corpus(runtime, resume)
    summaries = _load_summaries(runtime, "judge")
    if runtime.store.has("stage2"):
        for selection in _load_selections(runtime, "judge"):
            summaries.append(
                SummaryCandidate(
                    selection.dialogue_id, "best_selected", selection.best_summary
                )
            )
    if _skip_if_done(runtime, "judge", resume):
        return
    cells, aggregates = runtime.pipeline.judge_summaries(
        summaries, corpus, runtime.judge_registry, runtime.judge_gateway
    )
    _put(runtime, "judge", [c.to_record() for c in cells], resume)
    _merge_metrics(runtime, "judge_aggregate", aggregates)


@main.command("evaluate")
@common_options
def evaluate_cmd(runtime: Runtime, resume: bool) -> None:
    """Reference ROUGE/BLEU per summarizer and for the selected summaries."""
    corpus = _ensure_corpus(runtime, resume)
    summaries = _load_summaries(runtime, "evaluate")
    selections = (
        _load_selections(runtime, "evaluate") if runtime.store.has("stage2") else None
    )
    try:
        rows = evaluate_references(summaries, corpus, selections)
    except ValueError as exc:
        raise click.ClickException(str(exc)) from exc
    _merge_metrics(runtime, "reference", rows)
    for row in rows:
        click.echo(
            f"  {row['row']}: R1 {row['rouge1']:.2f}  R2 {row['rouge2']:.2f}  "
            f"RL {row['rougeL']:.2f}  BLEU {row['bleu']:.2f}"
        )


@main.command("pool-sweep")
@click.option("--size", type=int, required=True, help="Subset size to sweep.")
@common_options
def pool_sweep_cmd(runtime: Runtime, resume: bool, size: int) -> None:
    """Re-run selection over every model subset of the given size."""
    corpus = _ensure_corpus(runtime, resume)
    summaries = _load_summaries(runtime, "pool-sweep")
    qa_pairs = _load_qa(runtime, "pool-sweep")
    answers = _load_answers(runtime, "pool-sweep")
    report = pool_sweep(
        runtime.make_pipeline,
        runtime.registry,
        corpus,
        summaries,
        qa_pairs,
        answers,
        size,
    )
    _merge_metrics(runtime, f"pool_sweep_{size}", [report])
    for subset in report["subsets"]:
        click.echo(f"  pool {subset['pool']}: wins {subset['wins']}")
    click.echo(f"  aggregate: {report['aggregate']}")


@main.command("run-all")
@common_options
def run_all_cmd(runtime: Runtime, resume: bool) -> None:
    """Every stage in order: generate, evaluate, select, export, report."""
    store = runtime.store
    pipeline = runtime.pipeline
    corpus = _ensure_corpus(runtime, resume)

    if resume and store.has("summaries"):
        summaries = _load_summaries(runtime, "run-all")
        click.echo("summaries: reused")
    else:
        summaries = pipeline.generate_summaries(corpus)
        _put(runtime, "summaries", [s.to_record() for s in summaries], resume)

    if resume and store.has("qa"):
        qa_pairs = _load_qa(runtime, "run-all")
        click.echo("qa: reused")
    else:
        qa_pairs = pipeline.generate_and_merge_qa(corpus)
        _put(runtime, "qa", [q.to_record() for q in qa_pairs], resume)

    if resume and store.has("answers"):
        answers = _load_answers(runtime, "run-all")
        click.echo("answers: reused")
    else:
        answers = pipeline.answer_questions(summaries, qa_pairs)
        _put(runtime, "answers", [a.to_record() for a in answers], resume)

    if resume and store.has("stage1"):
        stage1 = _load_stage1(runtime, "run-all")
        click.echo("stage1: reused")
    else:
        stage1 = pipeline.stage1_evaluate(answers, qa_pairs)
        _put(runtime, "stage1", [r.to_record() for r in stage1], resume)

    if resume and store.has("stage2"):
        selections = _load_selections(runtime, "run-all")
        click.echo("stage2: reused")
    else:
        selections = pipeline.stage2_evaluate(stage1, answers, qa_pairs, summaries)
        _put(runtime, "stage2", [s.to_record() for s in selections], resume)

    winner, wins = pipeline.select_finetune_model(selections)
    if not (resume and store.has("finetune")):
        records, sidecar = export_finetune_dataset(
            selections, corpus, winner.name, wins
        )
        _put(runtime, "finetune", records, resume)
        _write_sidecar(runtime, "finetune.meta.json", sidecar)
    click.echo(f"fine-tuning target: {winner.name} (wins: {wins})")

    if all(d.reference is not None for d in corpus):
        rows = evaluate_references(summaries, corpus, selections)
        _merge_metrics(runtime, "reference", rows)

    if runtime.judge_registry is not None and not (resume and store.has("judge")):
        judged = summaries + [
            SummaryCandidate(s.dialogue_id, "best_selected", s.best_summary)
            for s in selections
        ]
        cells, aggregates = pipeline.judge_summaries(
            judged, corpus, runtime.judge_registry, runtime.judge_gateway
        )
        _put(runtime, "judge", [c.to_record() for c in cells], resume)
        _merge_metrics(runtime, "judge_aggregate", aggregates)


if __name__ == "__main__":
    main()
