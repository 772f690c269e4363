# SPDX-License-Identifier: Apache-2.0
"""Consistency regularization with rank distillation on synthetic RAG tasks."""

from ._core import (
    ConfigError,
    Dataset,
    Experiment,
    GeneratedData,
    Instance,
    LengthError,
    Model,
    ParseError,
    Run,
    ValidationError,
    full_shuffle,
    interpolate_perturb,
    jsd,
    load_dataset,
    nll,
    score_aware_alpha,
    select_teacher,
    tail_size,
)

__all__ = [
    "ConfigError",
    "Dataset",
    "Experiment",
    "GeneratedData",
    "Instance",
    "LengthError",
    "Model",
    "ParseError",
    "Run",
    "ValidationError",
    "full_shuffle",
    "interpolate_perturb",
    "jsd",
    "load_dataset",
    "nll",
    "score_aware_alpha",
    "select_teacher",
    "tail_size",
]
