"""Predictor combination: improve a target predictor from sample evaluations
of reference predictors by maximizing how well the references predict it."""

from __future__ import annotations

from .bench import (
    Dataset,
    MetricReport,
    ToySpec,
    classification_accuracy,
    gen_attribute_benchmark,
    gen_multiclass_benchmark,
    gen_toy,
    kendall_x100,
    load_dataset,
    save_results,
)
from .core import ScaleShift, center_normalize, inverse_normalize, normalize
from .denoise import (
    DenoiseConfig,
    DenoiseTrace,
    PredictorEnsemble,
    denoise_step,
    joint_denoise,
    lpc_denoise_step,
    multiclass_denoise,
    opc_baseline_step,
    tune,
)
from .errors import NumericalError, PredCombError
from .predictability import KernelSpec, build_nystrom, linear_predictability, nonlinear_predictability
from .relevance import ArdConfig, RelevanceWeights, ml_energy, ml_energy_and_grad, optimize_relevance

__version__ = "0.1.0"
