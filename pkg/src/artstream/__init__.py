"""Streaming fuzzy category classifier with an adversarial robustness
toolkit: white-box and transfer attacks, replay-free training protocols,
online geometry diagnostics, and a benchmark harness."""

from .core import (ArtmapParams, Category, Dataset, FuzzyArtmapModel,
                   Prediction, Sample, TrainEvent, UntrainedModelError,
                   choice, clean_accuracy, complement_code, fuzzy_and_sums,
                   match)
from .attack import (AttackConfig, MlpSurrogate, SurrogateConfig,
                     attack_with_config, class_probabilities_from_choice,
                     fgsm, fgsm_batch, per_epsilon_config, pgd_transfer,
                     pgd_transfer_batch, pgd_wb_softmax,
                     pgd_wb_softmax_batch, surrogate_train, wb_softmax_grad,
                     wb_softmax_loss)
from .diagnostics import (DiagnosticBox, GeometryMonitor, GeometrySnapshot,
                          Lemma1Result, MatchScoreStats, MatchWitness,
                          box_intersection, geometry_snapshot, lemma1_check,
                          match_score_stats, max_cross_class_overlap,
                          overlap, overlap_one_vs_many, prop1_witness_search,
                          rank_auc)
from .protocols import (ProtocolKind, ProtocolSpec, TrainEventLog,
                        TrainLogRecord, sep_aware_update, train_protocol)
from .seeds import derive_seed, sample_rng

__version__ = "0.1.0"

__all__ = [
    "ArtmapParams", "AttackConfig", "Category", "Dataset", "DiagnosticBox",
    "FuzzyArtmapModel", "GeometryMonitor", "GeometrySnapshot",
    "Lemma1Result", "MatchScoreStats", "MatchWitness", "MlpSurrogate",
    "Prediction", "ProtocolKind", "ProtocolSpec", "Sample",
    "SurrogateConfig", "TrainEvent", "TrainEventLog", "TrainLogRecord",
    "UntrainedModelError", "attack_with_config", "box_intersection",
    "choice", "class_probabilities_from_choice", "clean_accuracy",
    "complement_code", "derive_seed", "fgsm", "fgsm_batch",
    "fuzzy_and_sums", "geometry_snapshot", "lemma1_check", "match",
    "match_score_stats", "max_cross_class_overlap", "overlap",
    "overlap_one_vs_many", "per_epsilon_config", "pgd_transfer",
    "pgd_transfer_batch", "pgd_wb_softmax", "pgd_wb_softmax_batch",
    "prop1_witness_search", "rank_auc", "sample_rng", "sep_aware_update",
    "surrogate_train", "train_protocol", "wb_softmax_grad",
    "wb_softmax_loss", "__version__",
]
