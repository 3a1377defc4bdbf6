"""k-NN plug-in and weighted-ensemble estimators of density functionals."""

from ._knnens import (
    DegeneracyError,
    SolverError,
    confidence_interval,
    ensemble_weights,
    estimate,
    kth_nn_distance,
    plugin_estimate,
    run_experiment,
    sample_truncated_gaussian,
    true_renyi_integral,
    two_sample_test,
)

__all__ = [
    "DegeneracyError",
    "SolverError",
    "confidence_interval",
    "ensemble_weights",
    "estimate",
    "kth_nn_distance",
    "plugin_estimate",
    "run_experiment",
    "sample_truncated_gaussian",
    "true_renyi_integral",
    "two_sample_test",
]
