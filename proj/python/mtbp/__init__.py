"""Multi-type branching processes with time-dependent offspring laws."""

from mtbp._core import (
    CTModel,
    Ensemble,
    Model,
    __version__,
    classify,
    compose_pgf,
    eigen_factors,
    extinction_curve,
    hilbert_distance,
    ks_exponential,
    mean_matrix,
    moment_ode,
    series,
    simulate,
    simulate_ct,
    skip,
    validate,
)

__all__ = [
    "CTModel",
    "Ensemble",
    "Model",
    "__version__",
    "classify",
    "compose_pgf",
    "eigen_factors",
    "extinction_curve",
    "hilbert_distance",
    "ks_exponential",
    "mean_matrix",
    "moment_ode",
    "series",
    "simulate",
    "simulate_ct",
    "skip",
    "validate",
]
