"""Python surface of the egocentric action recognition pipeline.

Thin re-export of the compiled core: projection, frame sampling, mask
specs, synthetic data generation, training, evaluation, and the numeric
self-checks.
"""

from ._core import (
    ConfigError,
    FormatError,
    PipelineError,
    bayes_check,
    canonical_mask,
    epe,
    evaluate_checkpoint,
    generate_synth,
    gradcheck,
    predict_file,
    project_point,
    sample_indices,
    selftest,
    train_run,
)

__all__ = [
    "ConfigError",
    "FormatError",
    "PipelineError",
    "bayes_check",
    "canonical_mask",
    "epe",
    "evaluate_checkpoint",
    "generate_synth",
    "gradcheck",
    "predict_file",
    "project_point",
    "sample_indices",
    "selftest",
    "train_run",
]
