"""Exemplar-free incremental fine-tuning of adaptors over frozen embeddings."""

from .adaptors import Adaptor, AdaptorConfig, AdaptorSet, load_adaptor_set, make_adaptor_set, save_adaptor_set
from .datamodel import (
    EmbeddingDataset,
    PromptBank,
    Task,
    TaskSchedule,
    build_schedule,
    load_bundle,
    load_dataset,
    write_bundle,
)
from .metrics import AucResult, auc, mean_auc, render_curves
from .optimizer import AdamHyper, AdamState, adam_step
from .scenarios import RunConfig, RunReport, evaluate, report_to_csv, report_to_json, run
from .scoring import BatchScores, backprop_scores, bce_loss, cosine, predict, score_batch
from .synth import SynthConfig, generate

__version__ = "0.1.0"

__all__ = [
    "Adaptor",
    "AdaptorConfig",
    "AdaptorSet",
    "AdamHyper",
    "AdamState",
    "AucResult",
    "BatchScores",
    "EmbeddingDataset",
    "PromptBank",
    "RunConfig",
    "RunReport",
    "SynthConfig",
    "Task",
    "TaskSchedule",
    "adam_step",
    "auc",
    "backprop_scores",
    "bce_loss",
    "build_schedule",
    "cosine",
    "evaluate",
    "generate",
    "load_adaptor_set",
    "load_bundle",
    "load_dataset",
    "make_adaptor_set",
    "mean_auc",
    "predict",
    "render_curves",
    "report_to_csv",
    "report_to_json",
    "run",
    "save_adaptor_set",
    "score_batch",
    "write_bundle",
]
