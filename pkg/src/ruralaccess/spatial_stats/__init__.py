"""Spatial autocorrelation, inequality and correlation of regional indicators."""

from .correlation import (
    CorrelationResult,
    CorrelationUndefined,
    correlation_table,
    pearson,
    pearson_r,
    pearson_raw_sums,
)
from .gini import GINI_CLASSES, GiniUndefined, LorenzCurve, classify_gini, gini, gini_percent_axes, lorenz_curve
from .moran import (
    DEFAULT_PERMUTATIONS,
    NORMALITY,
    PERMUTATION,
    RANDOMIZATION,
    MoranResult,
    MoranUndefined,
    moran_i,
    morans_i,
    parse_mode,
)
from .weights import WeightsMatrix, build_knn_weights, build_queen_weights, lattice_weights

__all__ = [
    "DEFAULT_PERMUTATIONS",
    "GINI_CLASSES",
    "NORMALITY",
    "PERMUTATION",
    "RANDOMIZATION",
    "CorrelationResult",
    "CorrelationUndefined",
    "GiniUndefined",
    "LorenzCurve",
    "MoranResult",
    "MoranUndefined",
    "WeightsMatrix",
    "build_knn_weights",
    "build_queen_weights",
    "classify_gini",
    "correlation_table",
    "gini",
    "gini_percent_axes",
    "lattice_weights",
    "lorenz_curve",
    "moran_i",
    "morans_i",
    "parse_mode",
    "pearson",
    "pearson_r",
    "pearson_raw_sums",
]
