"""Quantile Velander peak-load models.

Fit per-quantile-level coefficients of the peak-load formula
``alpha * E + beta * sqrt(E)`` jointly over a grid of levels by pinball-loss
linear programming, with optional non-crossing constraint regimes, and
evaluate them with cross-validation, temporal/scaling transfer metrics and
Monte-Carlo aggregation studies.
"""

from .model import (
    CONSTRAINT_REGIMES,
    DEFAULT_GRID,
    CustomerRecord,
    LoadProfile,
    QuantileGrid,
    QuantileParamSet,
    average_pinball_loss,
    compute_features,
    parameter_count,
    pinball_loss,
    velander_quantile,
)
from .ingest import (
    CleaningReport,
    clean_profiles,
    ec_percentile,
    leap_year_adjust,
    parse_meter_csv,
)
from .solver import (
    FitProblem,
    FitResult,
    LinearConstraint,
    OptimalityCheck,
    SolverError,
    compile_constraints,
    fit,
    verify_optimality,
)
from .evaluation import (
    AggregationCvReport,
    AggregationSample,
    BandRestrictedFit,
    CurveExport,
    CvReport,
    aggregation_cv,
    band_restricted_fit,
    export_curves,
    kfold_cv,
    percentile_band,
    sample_aggregations,
    sld,
    synth_gaussian_profiles,
    tld,
)
from .config import RunConfig

__version__ = "0.1.0"

__all__ = [
    "CONSTRAINT_REGIMES",
    "DEFAULT_GRID",
    "AggregationCvReport",
    "AggregationSample",
    "BandRestrictedFit",
    "CleaningReport",
    "CurveExport",
    "CustomerRecord",
    "CvReport",
    "FitProblem",
    "FitResult",
    "LinearConstraint",
    "LoadProfile",
    "OptimalityCheck",
    "QuantileGrid",
    "QuantileParamSet",
    "RunConfig",
    "SolverError",
    "aggregation_cv",
    "average_pinball_loss",
    "band_restricted_fit",
    "clean_profiles",
    "compile_constraints",
    "compute_features",
    "ec_percentile",
    "export_curves",
    "fit",
    "kfold_cv",
    "leap_year_adjust",
    "parameter_count",
    "parse_meter_csv",
    "percentile_band",
    "pinball_loss",
    "sample_aggregations",
    "sld",
    "synth_gaussian_profiles",
    "tld",
    "velander_quantile",
    "verify_optimality",
]
