"""Functional data analysis of regional epidemic counts.

Sparse-aware functional PCA, functional canonical correlation, mixture
clustering of component scores, and functional-time-series forecasting of
cumulative counts, with a CLI that runs the full pipeline on NYT-format
state panels.
"""

from .funcdata import (
    BandwidthWidenedWarning,
    GridCurve,
    IrregularFunctionalDataset,
    SmootherConfig,
    epanechnikov,
    make_grid,
    quadrature_weights,
    smooth_curve,
    smooth_surface,
)
from .fpca import (
    FpcaConfig,
    FpcaModel,
    fit_pace,
    modes_of_variation,
    pace_scores,
)
from .fcca import CcaConfig, CcaResult, canonical_scores, fit_fcca, fourier_basis
from .fclust import (
    DEFAULT_SEED,
    ElbowResult,
    MixtureModel,
    adjusted_rand_index,
    assign,
    cluster_features,
    em_fit,
    select_k_elbow,
)
from .fts import (
    DynamicFpcaModel,
    LrcConfig,
    LrcResult,
    RegularFts,
    autocovariance,
    fit_dynamic_fpca,
    flat_top_kernel,
    growth_rates,
    long_run_cov,
    segment,
    smooth_fts,
)
from .forecast import (
    ArimaBaseline,
    ForecastResult,
    ScoreModel,
    ar_forecast,
    arima_baseline,
    bootstrap_interval,
    fit_ar,
    forecast_curve,
    forecast_scores,
    full_forecast,
    reconstruct_counts,
)
from .eval import (
    BacktestReport,
    BacktestSpec,
    counts_from_segments,
    expanding_window,
    interval_score,
    mean_interval_score,
    rmsfe,
)
from . import ingest

__version__ = "0.1.0"

__all__ = [
    "BandwidthWidenedWarning",
    "GridCurve",
    "IrregularFunctionalDataset",
    "SmootherConfig",
    "epanechnikov",
    "make_grid",
    "quadrature_weights",
    "smooth_curve",
    "smooth_surface",
    "FpcaConfig",
    "FpcaModel",
    "fit_pace",
    "modes_of_variation",
    "pace_scores",
    "CcaConfig",
    "CcaResult",
    "canonical_scores",
    "fit_fcca",
    "fourier_basis",
    "DEFAULT_SEED",
    "ElbowResult",
    "MixtureModel",
    "adjusted_rand_index",
    "assign",
    "cluster_features",
    "em_fit",
    "select_k_elbow",
    "DynamicFpcaModel",
    "LrcConfig",
    "LrcResult",
    "RegularFts",
    "autocovariance",
    "fit_dynamic_fpca",
    "flat_top_kernel",
    "growth_rates",
    "long_run_cov",
    "segment",
    "smooth_fts",
    "ArimaBaseline",
    "ForecastResult",
    "ScoreModel",
    "ar_forecast",
    "arima_baseline",
    "bootstrap_interval",
    "fit_ar",
    "forecast_curve",
    "forecast_scores",
    "full_forecast",
    "reconstruct_counts",
    "BacktestReport",
    "BacktestSpec",
    "counts_from_segments",
    "expanding_window",
    "interval_score",
    "mean_interval_score",
    "rmsfe",
    "ingest",
    "__version__",
]
