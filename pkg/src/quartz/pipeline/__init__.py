from .stages import (
    Pipeline,
    evaluate_references,
    export_finetune_dataset,
    filter_pool_artifacts,
    pool_sweep,
)
from .types import (
    CandidateAnswer,
    Dialogue,
    FinetuneRecord,
    JudgeScore,
    QaPair,
    SelectionRecord,
    Stage1Record,
    SummaryCandidate,
    Turn,
)

__all__ = [
    "CandidateAnswer",
    "Dialogue",
    "FinetuneRecord",
    "JudgeScore",
    "Pipeline",
    "QaPair",
    "SelectionRecord",
    "Stage1Record",
    "SummaryCandidate",
    "Turn",
    "evaluate_references",
    "export_finetune_dataset",
    "filter_pool_artifacts",
    "pool_sweep",
]
