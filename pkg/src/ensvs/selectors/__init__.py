"""Base variable-selection procedures applied to each regression instance."""

from .base import InstanceDesign, SelectorConfig, standardize
from .knockoff import (
    KnockoffDesign,
    knockoff_construct,
    knockoff_threshold,
    select_knockoff,
    signed_max_statistic,
)
from .lasso import LassoCV, LassoPath, default_lambdas, kkt_residuals, lambda_max, lasso_cv, lasso_path, select_lasso
from .stepwise import aic, select_stepwise_aic

_DISPATCH = {
    "lasso": select_lasso,
    "stepwise_aic": select_stepwise_aic,
    "knockoff_fixed_x": select_knockoff,
}


def select(design: InstanceDesign, cfg: SelectorConfig, seed=None):
    """Run the selector named by ``cfg.kind``; returns a boolean mask over the design's columns."""
    return _DISPATCH[cfg.kind](design, cfg, seed)


__all__ = [
    "InstanceDesign",
    "KnockoffDesign",
    "LassoCV",
    "LassoPath",
    "SelectorConfig",
    "aic",
    "default_lambdas",
    "kkt_residuals",
    "knockoff_construct",
    "knockoff_threshold",
    "lambda_max",
    "lasso_cv",
    "lasso_path",
    "select",
    "select_knockoff",
    "select_lasso",
    "select_stepwise_aic",
    "signed_max_statistic",
    "standardize",
]
