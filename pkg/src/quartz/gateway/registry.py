"""The model pool: named backends with shared decoding defaults."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Protocol, Sequence

from ..ranking import ModelId

GENERATION_ROLES = ("summary", "qa", "answer")
RANKING_ROLES = ("rank",)


class Backend(Protocol):
    def complete(self, request: "ChatRequest") -> str:  # noqa: F821
        ...


@dataclass(frozen=True)
class DecodingDefaults:
    """Sampling settings per role family.

    Ranking and judging run at temperature 0; their variability comes from
    presentation shuffling, not sampling.
    """

    generation_temperature: float = 0.7
    ranking_temperature: float = 0.0
    max_output_tokens: int = 1024

    def temperature_for(self, role: str) -> float:
        if role in GENERATION_ROLES:
            return self.generation_temperature
        return self.ranking_temperature


class ModelRegistry:
    """Ordered pool of models; list order defines each ModelId's index."""

    def __init__(
        self,
        entries: Sequence[tuple[str, Backend]],
        decoding: DecodingDefaults | None = None,
    ):
        if not entries:
            raise ValueError("model registry must contain at least one model")
        names = [name for name, _ in entries]
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate model names in registry: {names}")
        self.decoding = decoding or DecodingDefaults()
        self.models: list[ModelId] = [
            ModelId(index, name) for index, name in enumerate(names)
        ]
        self._backends = {name: backend for name, backend in entries}

    def __len__(self) -> int:
        return len(self.models)

    @property
    def names(self) -> list[str]:
        return [m.name for m in self.models]

    def by_name(self, name: str) -> ModelId:
        for model in self.models:
            if model.name == name:
                return model
        raise KeyError(f"model {name!r} not in registry {self.names}")

    def backend(self, model: "ModelId | str") -> Backend:
        name = model if isinstance(model, str) else model.name
        if name not in self._backends:
            raise KeyError(f"model {name!r} not in registry {self.names}")
        return self._backends[name]

    def subset(self, names: Sequence[str]) -> "ModelRegistry":
        """A reindexed registry over the given models, in registry order."""
        wanted = set(names)
        unknown = wanted - set(self.names)
        if unknown:
            raise KeyError(f"models not in registry: {sorted(unknown)}")
        return ModelRegistry(
            [(m.name, self._backends[m.name]) for m in self.models if m.name in wanted],
            decoding=self.decoding,
        )
