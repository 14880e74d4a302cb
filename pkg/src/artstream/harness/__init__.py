"""Benchmark harness: data loading, evaluation curves, experiment runner,
model persistence, and the command-line interface."""

from .data import IdxFormatError, load_csv, load_idx, synth_generate
from .evaluation import (ATTACK_KINDS, EpsilonGrid, EvalSubset, SanityReport,
                         aurac, eval_subset, robust_curve,
                         sanity_checks_from_curves, sanity_suite,
                         uniform_noise_batch)
from .model_io import load_model, save_model
from .runner import (ExperimentConfig, RobustnessReport, evaluate_model,
                     load_datasets, run_experiment, write_report_files)

__all__ = [
    "ATTACK_KINDS", "EpsilonGrid", "EvalSubset", "ExperimentConfig",
    "IdxFormatError", "RobustnessReport", "SanityReport", "aurac",
    "eval_subset", "evaluate_model", "load_csv", "load_datasets",
    "load_idx", "load_model", "robust_curve", "run_experiment",
    "sanity_checks_from_curves", "sanity_suite", "save_model",
    "synth_generate", "uniform_noise_batch",
]
