"""Shared builders: synthetic planted-fact corpora and mock model pools."""

from __future__ import annotations

from quartz.gateway.client import Gateway
from quartz.gateway.mock import MockBackend, MockBehavior, fact_sentence, plant_fact
from quartz.gateway.registry import DecodingDefaults, ModelRegistry
from quartz.pipeline.stages import Pipeline
from quartz.pipeline.types import Dialogue, Turn

DEFAULT_TASK_PROMPT = (
    "Write a short summary of the conversation that keeps every stated fact."
)


def make_dialogue(
    dialogue_id: str,
    fact_count: int = 3,
    task_prompt: str = DEFAULT_TASK_PROMPT,
    with_reference: bool = False,
) -> Dialogue:
    turns = []
    facts = [plant_fact(dialogue_id, k) for k in range(1, fact_count + 1)]
    for k, (key, value) in enumerate(facts, start=1):
        speaker = f"Speaker{(k % 2) + 1}"
        turns.append(Turn(speaker, f"I checked and {fact_sentence(key, value)}."))
    reference = None
    if with_reference:
        reference = " ".join(f"The {key} is {value}." for key, value in facts)
    return Dialogue(dialogue_id, turns, task_prompt, reference=reference)


def make_corpus(
    size: int, fact_count: int = 3, with_reference: bool = False
) -> list[Dialogue]:
    return [
        make_dialogue(f"d{i:03d}", fact_count, with_reference=with_reference)
        for i in range(size)
    ]


def make_registry(specs: list[tuple[str, MockBehavior]]) -> ModelRegistry:
    return ModelRegistry(
        [(name, MockBackend(name, behavior)) for name, behavior in specs],
        decoding=DecodingDefaults(),
    )


def planted_pool(
    coverages: tuple[float, ...] = (1.0, 0.5, 0.2),
    answer_accuracy: float = 1.0,
    rank_noise: float = 0.0,
    seed: int = 0,
) -> ModelRegistry:
    """A pool whose summaries differ only in fact coverage."""
    return make_registry(
        [
            (
                f"mock-{i}",
                MockBehavior(
                    coverage=coverage,
                    answer_accuracy=answer_accuracy,
                    rank_noise=rank_noise,
                    seed=seed,
                ),
            )
            for i, coverage in enumerate(coverages)
        ]
    )


def make_pipeline(
    registry: ModelRegistry,
    cache=None,
    replay: bool = False,
    record: bool = True,
    **kwargs,
) -> Pipeline:
    gateway = Gateway(registry, cache, replay=replay, record=record)
    return Pipeline(registry, gateway, **kwargs)
