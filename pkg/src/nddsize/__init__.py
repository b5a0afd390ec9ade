"""Minimal sufficient amount of naturalistic driving data via KDE/KL convergence."""

from ._backend import BACKEND
from .divergence import KLValue, kl_divergence
from .ingestion import (
    CarFollowingEvent, SampleRecord, ScenarioRules, extract_events, parse_log,
    pool_matrix, pool_variable,
)
from .kde import (
    DensityEstimate, Grid, build_grid, kde_multivariate, kde_univariate,
    silverman_bandwidth,
)
from .sufficiency import (
    KLTrace, SufficiencyConfig, SufficiencyResult, analyze, epsilon_sweep,
    find_n_star, kl_trace, minutes,
)

__version__ = "0.1.0"

__all__ = [
    "BACKEND", "CarFollowingEvent", "DensityEstimate", "Grid", "KLTrace", "KLValue",
    "SampleRecord", "ScenarioRules", "SufficiencyConfig", "SufficiencyResult",
    "analyze", "build_grid", "epsilon_sweep", "extract_events", "find_n_star",
    "kde_multivariate", "kde_univariate", "kl_divergence", "kl_trace", "minutes",
    "parse_log", "pool_matrix", "pool_variable", "silverman_bandwidth",
]
