"""Bayesian generalized promotion time cure models.

Thin wrapper over the compiled extension; everything useful lives there.
"""

from _gptcm import (  # noqa: F401
    DomainError,
    Fit,
    FitError,
    MrfGraph,
    SurvivalDataset,
    brier_score,
    dirichlet_log_density,
    fit,
    kaplan_meier,
    load_fit,
    population_log_density,
    population_survival,
    precision_graph,
    read_dataset,
    same_variable_graph,
    scaled_rmse,
    selection_metrics,
    simulate,
    weibull_scale_from_mean,
    weibull_survival,
    write_dataset,
)

__all__ = [
    "DomainError",
    "Fit",
    "FitError",
    "MrfGraph",
    "SurvivalDataset",
    "brier_score",
    "dirichlet_log_density",
    "fit",
    "kaplan_meier",
    "load_fit",
    "population_log_density",
    "population_survival",
    "precision_graph",
    "read_dataset",
    "same_variable_graph",
    "scaled_rmse",
    "selection_metrics",
    "simulate",
    "weibull_scale_from_mean",
    "weibull_survival",
    "write_dataset",
]
