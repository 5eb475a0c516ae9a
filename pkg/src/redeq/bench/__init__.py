"""Benchmark corpus, evaluation protocol, statistics and report generation."""

from .corpus import BenchmarkEquation, load_corpus, parse_manifest
from .protocol import PROTOCOL_SPLIT, add_noise, sample_dataset, split_dataset, split_sizes
from .runner import (
    DATASET_SIZES,
    NOISE_LEVELS,
    ExperimentConfig,
    ExperimentReport,
    Sweep,
    iteration_curve,
    load_experiment_config,
    run_experiment,
)
from .stats import quantile, wilcoxon_p

__all__ = [
    "BenchmarkEquation",
    "load_corpus",
    "parse_manifest",
    "PROTOCOL_SPLIT",
    "add_noise",
    "sample_dataset",
    "split_dataset",
    "split_sizes",
    "ExperimentConfig",
    "ExperimentReport",
    "Sweep",
    "run_experiment",
    "load_experiment_config",
    "iteration_curve",
    "NOISE_LEVELS",
    "DATASET_SIZES",
    "quantile",
    "wilcoxon_p",
]
