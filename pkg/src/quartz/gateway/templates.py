"""Prompt templates and placeholder rendering.

Built-in templates are shipped as data in ``prompts.json`` and addressed by
``role.key`` identifiers such as ``summary.samsum`` or ``rank.default``.
"""

from __future__ import annotations

import hashlib
import json
import re
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from typing import Mapping

from ..errors import TemplateBindingError

_PLACEHOLDER_RE = re.compile(
    r"\[(Conversation|Header|Question|Ground Truth Answer|Answer_\d+|Dialogue|Summary)\]"
)

JUDGE_DIMENSIONS = ("coherence", "consistency", "fluency", "relevance")


@dataclass(frozen=True)
class PromptTemplate:
    """An instruction plus an input skeleton with named placeholders."""

    role: str
    instruction: str
    input_template: str

    def placeholders(self) -> set[str]:
        return set(_PLACEHOLDER_RE.findall(self.instruction)) | set(
            _PLACEHOLDER_RE.findall(self.input_template)
        )

    def digest(self) -> str:
        payload = json.dumps(
            [self.role, self.instruction, self.input_template],
            separators=(",", ":"),
        )
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()[:16]


@dataclass(frozen=True)
class RenderedPrompt:
    instruction: str
    input_text: str

    @property
    def text(self) -> str:
        return f"{self.instruction}\n\n{self.input_text}"


def render_prompt(
    template: PromptTemplate, bindings: Mapping[str, str]
) -> RenderedPrompt:
    """Substitute placeholder bindings into a template, single pass.

    Bindings must cover the template's placeholders exactly; anything
    missing or extra raises TemplateBindingError.
    """
    placeholders = template.placeholders()
    missing = placeholders - set(bindings)
    if missing:
        raise TemplateBindingError(
            f"unbound placeholders for role {template.role!r}: {sorted(missing)}"
        )
    extra = set(bindings) - placeholders
    if extra:
        raise TemplateBindingError(
            f"bindings not used by role {template.role!r}: {sorted(extra)}"
        )

    def substitute(text: str) -> str:
        return _PLACEHOLDER_RE.sub(lambda m: str(bindings[m.group(1)]), text)

    return RenderedPrompt(
        substitute(template.instruction), substitute(template.input_template)
    )


def residual_placeholders(text: str) -> list[str]:
    """Placeholder markers still present in a rendered text."""
    return _PLACEHOLDER_RE.findall(text)


@lru_cache(maxsize=1)
def _builtin_texts() -> dict[str, dict[str, str]]:
    data = resources.files("quartz.gateway").joinpath("prompts.json").read_text("utf-8")
    return json.loads(data)


def builtin_template(key: str) -> PromptTemplate:
    """Load a shipped template by its ``role.key`` identifier."""
    texts = _builtin_texts()
    if key not in texts:
        raise KeyError(f"unknown built-in template {key!r}; have {sorted(texts)}")
    role = key.split(".", 1)[0]
    return PromptTemplate(role, texts[key]["instruction"], texts[key]["input"])


def judge_template(dimension: str) -> PromptTemplate:
    if dimension not in JUDGE_DIMENSIONS:
        raise KeyError(f"unknown judge dimension {dimension!r}")
    template = builtin_template(f"judge.{dimension}")
    return PromptTemplate(f"judge-{dimension}", template.instruction, template.input_template)


def ranking_template(pool_size: int) -> PromptTemplate:
    """The answer-ranking template, adapted to the pool size.

    The shipped text addresses a pool of three; other sizes rewrite the
    list-length wording and extend the numbered answer slots.
    """
    if pool_size < 2:
        raise ValueError(f"ranking needs a pool of at least 2, got {pool_size}")
    base = builtin_template("rank.default")
    if pool_size == 3:
        return base
    instruction = base.instruction.replace(
        "a three-element list of integers between 1 and 3",
        f"a {pool_size}-element list of integers between 1 and {pool_size}",
    )
    answer_lines = "\n".join(f"{k}) [Answer_{k}]" for k in range(1, pool_size + 1))
    input_template = (
        "Question: [Question]\n"
        "Ground Truth Answer: [Ground Truth Answer]\n"
        "Possible answers:\n" + answer_lines
    )
    return PromptTemplate("rank", instruction, input_template)
