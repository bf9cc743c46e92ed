"""Ensemble variable selection on random subsets of covariates, for incomplete
and high-dimensional Gaussian linear models."""

__version__ = "0.1.0"

from .data import CoefficientVector, Dataset, complete_rows, load_csv, save_csv
from .ensemble import (
    EnsembleConfig,
    EnsembleResult,
    ImportanceTally,
    expected_instance_bias,
    random_partition,
    run_ensemble,
    run_instance,
)
from .errors import (
    CsvFormatError,
    DegenerateInputError,
    InstanceDegenerateError,
    NumericalError,
    ValidationError,
)
from .imputation import GaussianFit, conditional_moments, fit_em, stochastic_impute
from .selectors import InstanceDesign, SelectorConfig, select
from .threshold_cv import ThresholdCvConfig, tune_threshold

__all__ = [
    "CoefficientVector",
    "CsvFormatError",
    "Dataset",
    "DegenerateInputError",
    "EnsembleConfig",
    "EnsembleResult",
    "GaussianFit",
    "ImportanceTally",
    "InstanceDegenerateError",
    "InstanceDesign",
    "NumericalError",
    "SelectorConfig",
    "ThresholdCvConfig",
    "ValidationError",
    "complete_rows",
    "conditional_moments",
    "expected_instance_bias",
    "fit_em",
    "load_csv",
    "random_partition",
    "run_ensemble",
    "run_instance",
    "save_csv",
    "select",
    "stochastic_impute",
    "tune_threshold",
]
