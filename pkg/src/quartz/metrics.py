"""Reference-based summary metrics and agreement statistics.

Tokenization is lowercasing plus splitting on non-alphanumeric runs; no
stemming or stopword removal is applied, and reports record that.
"""

from __future__ import annotations

import math
import re
from collections import Counter
from dataclasses import dataclass, field
from typing import Hashable, Sequence

from scipy.stats import t as student_t

from .errors import InsufficientSampleError, UndefinedKappaError

_TOKEN_RE = re.compile(r"[a-z0-9]+")

BLEU_EPSILON = 1e-9
BLEU_MAX_ORDER = 4

TOKENIZATION_NOTE = "lowercase, split on non-alphanumeric runs; no stemming, no stopword removal"


def tokenize(text: str) -> list[str]:
    return _TOKEN_RE.findall(text.lower())


def ngram_counts(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def lcs_length(a: Sequence[str], b: Sequence[str]) -> int:
    """Longest common subsequence length (dynamic programming)."""
    if not a or not b:
        return 0
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0] * (len(b) + 1)
        for j, y in enumerate(b, start=1):
            cur[j] = prev[j - 1] + 1 if x == y else max(prev[j], cur[j - 1])
        prev = cur
    return prev[-1]


def _f1(precision: float, recall: float) -> float:
    if precision + recall == 0:
        return 0.0
    return 2 * precision * recall / (precision + recall)


def rouge(candidate: Sequence[str], reference: Sequence[str], variant: str) -> float:
    """ROUGE-1/2 (clipped n-gram overlap F1) or ROUGE-L (LCS F1, beta=1).

    Empty candidate or reference yields 0.0 rather than an error; degenerate
    generations are expected and counted by the caller.
    """
    if variant not in ("1", "2", "L"):
        raise ValueError(f"unknown ROUGE variant: {variant!r}")
    if not candidate or not reference:
        return 0.0
    if variant == "L":
        lcs = lcs_length(candidate, reference)
        return _f1(lcs / len(candidate), lcs / len(reference))
    n = int(variant)
    cand = ngram_counts(candidate, n)
    ref = ngram_counts(reference, n)
    if not cand or not ref:
        return 0.0
    overlap = sum((cand & ref).values())
    return _f1(overlap / sum(cand.values()), overlap / sum(ref.values()))


def bleu(
    candidates: Sequence[Sequence[str]],
    references: Sequence[Sequence[str]],
) -> float:
    """Corpus-level BLEU up to 4-grams with brevity penalty.

    Modified precisions with zero matches fall back to an additive epsilon
    so short summaries keep a defined score.
    """
    if len(candidates) != len(references):
        raise ValueError(
            f"candidate/reference count mismatch: {len(candidates)} vs {len(references)}"
        )
    if not candidates:
        raise ValueError("bleu needs at least one candidate/reference pair")
    cand_len = sum(len(c) for c in candidates)
    ref_len = sum(len(r) for r in references)
    if cand_len == 0:
        return 0.0
    log_precision_sum = 0.0
    for n in range(1, BLEU_MAX_ORDER + 1):
        matched = 0
        total = 0
        for cand, ref in zip(candidates, references):
            cand_grams = ngram_counts(cand, n)
            ref_grams = ngram_counts(ref, n)
            matched += sum((cand_grams & ref_grams).values())
            total += max(len(cand) - n + 1, 0)
        if matched > 0 and total > 0:
            precision = matched / total
        else:
            precision = BLEU_EPSILON
        log_precision_sum += math.log(precision)
    brevity = 1.0 if cand_len > ref_len else math.exp(1.0 - ref_len / cand_len)
    return brevity * math.exp(log_precision_sum / BLEU_MAX_ORDER)


def jackknife_ci(
    per_example_scores: Sequence[float], confidence: float = 0.95
) -> tuple[float, float]:
    """Leave-one-out jackknife mean and confidence-interval halfwidth.

    Halfwidth is the Student-t quantile at the requested confidence times
    the square root of the jackknife variance estimate.
    """
    n = len(per_example_scores)
    if n < 2:
        raise InsufficientSampleError(
            f"jackknife needs at least 2 scores, got {n}"
        )
    total = sum(per_example_scores)
    replicates = [(total - s) / (n - 1) for s in per_example_scores]
    replicate_mean = sum(replicates) / n
    variance = (n - 1) / n * sum((r - replicate_mean) ** 2 for r in replicates)
    quantile = float(student_t.ppf((1 + confidence) / 2, n - 1))
    return total / n, quantile * math.sqrt(variance)


@dataclass
class AgreementReport:
    """Cohen's kappa in [-1, 1] and exact agreement as a percentage."""

    cohen_kappa: float
    exact_agreement: float

    def to_record(self) -> dict:
        return {
            "cohen_kappa": self.cohen_kappa,
            "exact_agreement": self.exact_agreement,
        }

    @classmethod
    def from_record(cls, record: dict) -> "AgreementReport":
        return cls(record["cohen_kappa"], record["exact_agreement"])


def agreement(
    labels_a: Sequence[Hashable], labels_b: Sequence[Hashable]
) -> AgreementReport:
    """Cohen's kappa and exact agreement rate between two annotators."""
    if len(labels_a) != len(labels_b):
        raise ValueError(
            f"label list length mismatch: {len(labels_a)} vs {len(labels_b)}"
        )
    if not labels_a:
        raise ValueError("agreement needs at least one label pair")
    n = len(labels_a)
    observed = sum(1 for x, y in zip(labels_a, labels_b) if x == y) / n
    counts_a = Counter(labels_a)
    counts_b = Counter(labels_b)
    expected = sum(
        counts_a[label] / n * counts_b[label] / n for label in counts_a
    )
    if expected == 1.0:
        if observed == 1.0:
            return AgreementReport(1.0, 100.0)
        raise UndefinedKappaError(
            "chance agreement is 1 but observed agreement is below 1"
        )
    kappa = (observed - expected) / (1 - expected)
    return AgreementReport(kappa, 100.0 * observed)


@dataclass
class MetricReport:
    """Corpus-level reference metrics, in percent, with CI halfwidths.

    ``ci_halfwidth`` keys are only present when the sample size allows a
    jackknife estimate (n >= 2).
    """

    rouge1: float
    rouge2: float
    rougeL: float
    bleu: float
    ci_halfwidth: dict[str, float] = field(default_factory=dict)
    sample_size: int = 0
    empty_candidates: int = 0
    meta: dict = field(default_factory=dict)

    def to_record(self) -> dict:
        record = {
            "rouge1": self.rouge1,
            "rouge2": self.rouge2,
            "rougeL": self.rougeL,
            "bleu": self.bleu,
            "n": self.sample_size,
            "empty_candidates": self.empty_candidates,
            "meta": dict(self.meta, tokenization=TOKENIZATION_NOTE),
        }
        for name, halfwidth in self.ci_halfwidth.items():
            record[f"{name}_ci"] = halfwidth
        return record


def score_corpus(
    candidates: Sequence[str], references: Sequence[str], confidence: float = 0.95
) -> MetricReport:
    """Per-example ROUGE/BLEU, corpus means, and jackknife halfwidths.

    Scores are reported as percentages. BLEU per example is single-pair
    corpus BLEU; its mean and CI come from those per-example values.
    """
    if len(candidates) != len(references):
        raise ValueError(
            f"candidate/reference count mismatch: {len(candidates)} vs {len(references)}"
        )
    if not candidates:
        raise ValueError("score_corpus needs at least one pair")
    per_metric: dict[str, list[float]] = {
        "rouge1": [],
        "rouge2": [],
        "rougeL": [],
        "bleu": [],
    }
    empty = 0
    for cand_text, ref_text in zip(candidates, references):
        cand = tokenize(cand_text)
        ref = tokenize(ref_text)
        if not cand:
            empty += 1
        per_metric["rouge1"].append(100.0 * rouge(cand, ref, "1"))
        per_metric["rouge2"].append(100.0 * rouge(cand, ref, "2"))
        per_metric["rougeL"].append(100.0 * rouge(cand, ref, "L"))
        if cand and ref:
            per_metric["bleu"].append(100.0 * bleu([cand], [ref]))
        else:
            per_metric["bleu"].append(0.0)
    means: dict[str, float] = {}
    halfwidths: dict[str, float] = {}
    for name, scores in per_metric.items():
        means[name] = sum(scores) / len(scores)
        if len(scores) >= 2:
            _, halfwidths[name] = jackknife_ci(scores, confidence)
    return MetricReport(
        rouge1=means["rouge1"],
        rouge2=means["rouge2"],
        rougeL=means["rougeL"],
        bleu=means["bleu"],
        ci_halfwidth=halfwidths,
        sample_size=len(candidates),
        empty_candidates=empty,
    )
