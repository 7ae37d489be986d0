"""Unsupervised dialogue-summary selection over a pool of chat models."""

from .metrics import MetricReport, agreement, bleu, jackknife_ci, rouge, score_corpus
from .ranking import (
    ModelId,
    MrrValue,
    ScoreTable,
    argmax_with_tiebreak,
    kemeny_aggregate,
    kendall_distance,
    mrr,
    seeded_shuffle,
    weighted_score,
)

__all__ = [
    "MetricReport",
    "ModelId",
    "MrrValue",
    "ScoreTable",
    "agreement",
    "argmax_with_tiebreak",
    "bleu",
    "jackknife_ci",
    "kemeny_aggregate",
    "kendall_distance",
    "mrr",
    "rouge",
    "score_corpus",
    "seeded_shuffle",
    "weighted_score",
]

__version__ = "0.1.0"
