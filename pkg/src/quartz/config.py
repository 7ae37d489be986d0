"""Run configuration: YAML schema, validation, and registry construction.

API keys are referenced by environment-variable name only; they never
appear in config files or artifacts.
"""

from __future__ import annotations

import re
from pathlib import Path
from typing import Literal

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from .errors import ConfigError
from .gateway.client import HttpBackend
from .gateway.mock import MockBackend, MockBehavior
from .gateway.registry import DecodingDefaults, ModelRegistry

DEFAULT_KEY_ENV_PREFIX = "QUARTZ_API_KEY_"


def default_api_key_env(model_name: str) -> str:
    """Environment variable consulted for a model's API key by default."""
    slug = re.sub(r"[^A-Za-z0-9]+", "_", model_name).strip("_").upper()
    return DEFAULT_KEY_ENV_PREFIX + slug


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class BackendConfig(_Strict):
    """How to reach one model: an HTTP endpoint or the offline mock."""

    type: Literal["openai", "mock"] = "mock"
    url: str | None = None
    model: str | None = None
    api_key_env: str | None = None
    timeout: float = Field(default=120.0, gt=0)
    # mock-only knobs
    coverage: float = Field(default=1.0, ge=0, le=1)
    answer_accuracy: float = Field(default=1.0, ge=0, le=1)
    rank_noise: float = Field(default=0.0, ge=0, le=1)
    judge_score: int = Field(default=4, ge=1, le=5)
    qa_limit: int = Field(default=15, ge=1)
    distinct_questions: bool = False
    seed: int = 0

    @model_validator(mode="after")
    def _check_openai_fields(self) -> "BackendConfig":
        if self.type == "openai" and (not self.url or not self.model):
            raise ValueError("openai backends need both 'url' and 'model'")
        return self


class ModelConfig(_Strict):
    name: str = Field(min_length=1)
    backend: BackendConfig = BackendConfig()


class DatasetConfig(_Strict):
    path: str
    format: Literal["native", "samsum", "dialogsum"] = "native"
    task_prompt: str | None = None


class PromptConfig(_Strict):
    """Built-in template keys for the configurable prompt slots."""

    qa_template: str = "qa.generic"
    answer_template: str = "answer.default"


class RunConfig(_Strict):
    models: list[ModelConfig] = Field(min_length=2)
    judges: list[ModelConfig] = Field(default_factory=list)
    dataset: DatasetConfig
    prompts: PromptConfig = PromptConfig()
    n_rank_samples: int = Field(default=5, ge=1)
    alpha_self: float = Field(default=0.8, gt=0, le=1)
    global_seed: int = 0
    parallelism: int = Field(default=1, ge=1)
    transport_retries: int = Field(default=3, ge=1)
    parse_retries: int = Field(default=3, ge=0)
    generation_temperature: float = Field(default=0.7, ge=0)
    ranking_temperature: float = Field(default=0.0, ge=0)
    max_output_tokens: int = Field(default=1024, ge=1)
    record_exchanges: bool = True
    artifacts_root: str = "runs"

    @model_validator(mode="after")
    def _check_unique_names(self) -> "RunConfig":
        names = [m.name for m in self.models]
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate model names: {names}")
        judge_names = [m.name for m in self.judges]
        if len(set(judge_names)) != len(judge_names):
            raise ValueError(f"duplicate judge names: {judge_names}")
        return self


def load_config(path: "Path | str") -> RunConfig:
    """Load and validate a YAML run configuration."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        raw = yaml.safe_load(path.read_text(encoding="utf-8"))
    except yaml.YAMLError as exc:
        raise ConfigError(f"config file {path} is not valid YAML: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"config file {path} must contain a mapping at top level")
    try:
        return RunConfig.model_validate(raw)
    except ValidationError as exc:
        problems = "; ".join(
            f"{'.'.join(str(part) for part in error['loc']) or '<root>'}: {error['msg']}"
            for error in exc.errors()
        )
        raise ConfigError(f"invalid config {path}: {problems}") from exc


def _build_backend(model: ModelConfig):
    backend = model.backend
    if backend.type == "openai":
        return HttpBackend(
            url=backend.url,
            model=backend.model,
            api_key_env=backend.api_key_env or default_api_key_env(model.name),
            timeout=backend.timeout,
        )
    return MockBackend(
        model.name,
        MockBehavior(
            coverage=backend.coverage,
            answer_accuracy=backend.answer_accuracy,
            rank_noise=backend.rank_noise,
            judge_score=backend.judge_score,
            qa_limit=backend.qa_limit,
            distinct_questions=backend.distinct_questions,
            seed=backend.seed,
        ),
    )


def build_registry(
    models: list[ModelConfig], config: RunConfig
) -> ModelRegistry:
    decoding = DecodingDefaults(
        generation_temperature=config.generation_temperature,
        ranking_temperature=config.ranking_temperature,
        max_output_tokens=config.max_output_tokens,
    )
    return ModelRegistry(
        [(m.name, _build_backend(m)) for m in models], decoding=decoding
    )
