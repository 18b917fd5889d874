"""
Weighted-likelihood bootstrap prediction intervals for AR and VAR models.

The package fits autoregressions by ordinary least squares or by a
Hellinger-weighted likelihood that downweights outlying residuals, and turns
either fit into bootstrap prediction intervals (N = 1) or Bonferroni
forecast cubes (N >= 2). A Monte Carlo harness measures coverage, interval
size and cube error under additive and innovative outliers.
"""

__version__ = "0.1.0"

from .bootstrap import (
    BootstrapForecast,
    IntervalSet,
    bootstrap_forecast,
    interval_from_draws,
    normal_quantile_interval,
)
from .contamination import OutlierPlan, contaminate_ao, contaminate_io, draw_positions
from .estimation import EstimationError, FitConfig, WeightedFit, fit, fit_ols, fit_weighted_likelihood, fit_weighted_likelihood_var, raf_weight
from .evaluation import ContaminationSpec, MetricsReport, ScenarioConfig, run_scenario
from .process import ArModelSpec, InnovationSource, SimulationError, forecast, forecast_error_cov, ma_coefficients, simulate
from .series import SeriesError, SeriesMatrix, TransformSpec, apply_transform, load_csv, save_csv

__all__ = [
    "ArModelSpec",
    "BootstrapForecast",
    "ContaminationSpec",
    "EstimationError",
    "FitConfig",
    "InnovationSource",
    "IntervalSet",
    "MetricsReport",
    "OutlierPlan",
    "ScenarioConfig",
    "SeriesError",
    "SeriesMatrix",
    "SimulationError",
    "TransformSpec",
    "WeightedFit",
    "apply_transform",
    "bootstrap_forecast",
    "contaminate_ao",
    "contaminate_io",
    "draw_positions",
    "fit",
    "fit_ols",
    "fit_weighted_likelihood",
    "fit_weighted_likelihood_var",
    "forecast",
    "forecast_error_cov",
    "interval_from_draws",
    "load_csv",
    "ma_coefficients",
    "normal_quantile_interval",
    "raf_weight",
    "run_scenario",
    "save_csv",
    "simulate",
]
