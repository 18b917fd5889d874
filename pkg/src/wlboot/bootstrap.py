"""
Forward-recursion residual bootstrap for AR/VAR prediction intervals.

A fitted model and its residual pool generate B pseudo-series that start from
the first p observations; each pseudo-series is refitted with the same
estimator, and the refitted coefficients run forward from the last p
observations with fresh pool draws to give B future paths. Marginal intervals
(N = 1) or Bonferroni cubes (N >= 2) are read off the componentwise
empirical quantiles.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from statistics import NormalDist

import numpy as np

from .estimation import FitConfig, WeightedFit, fit_batch, prepare_bootstrap_residuals
from .process import ArModelSpec, InnovationSource, _recurse, forecast, forecast_error_cov
from .series import SeriesMatrix

__all__ = [
    "BootstrapParameters",
    "BootstrapForecast",
    "IntervalSet",
    "bootstrap_paths",
    "bootstrap_future_draws",
    "interval_from_draws",
    "normal_quantile_interval",
    "quantile_levels",
    "empirical_quantile",
    "bootstrap_forecast",
]

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class BootstrapParameters:
    """Refitted coefficients for the surviving bootstrap replicates."""

    phi0: np.ndarray
    phis: np.ndarray
    n_excluded: int = 0
    n_redrawn: int = 0

    @property
    def b_reps(self) -> int:
        return self.phi0.shape[0]


@dataclass(frozen=True)
class BootstrapForecast:
    """``draws[b, h-1, i]`` is replicate b of component i at horizon h."""

    draws: np.ndarray
    gamma: float
    estimator_tag: str
    point: np.ndarray | None = None
    n_excluded: int = 0

    def __post_init__(self) -> None:
        if not 0 < self.gamma < 0.5:
            raise ValueError("gamma must lie in (0, 0.5)")
        if self.draws.ndim != 3 or self.draws.shape[0] < 1:
            raise ValueError("draws must be a non-empty (B, H, N) array")

    @property
    def b_reps(self) -> int:
        return self.draws.shape[0]

    @property
    def horizon(self) -> int:
        return self.draws.shape[1]


@dataclass(frozen=True)
class IntervalSet:
    """Per-horizon bounds, each (H, N); ``kind`` is ``marginal`` or ``bonferroni``."""

    lower: np.ndarray
    upper: np.ndarray
    kind: str
    gamma: float

    @property
    def horizon(self) -> int:
        return self.lower.shape[0]

    @property
    def widths(self) -> np.ndarray:
        return self.upper - self.lower


def _as_rng(rng) -> np.random.Generator:
    if isinstance(rng, InnovationSource):
        return rng.rng()
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)


def quantile_levels(gamma: float, n_dim: int) -> tuple[float, float]:
    """``(gamma/2, 1-gamma/2)`` for N = 1, ``(gamma/(2N), 1-gamma/(2N))`` otherwise."""
    a = gamma / (2 * n_dim)
    return a, 1.0 - a


def empirical_quantile(x: np.ndarray, tau: float, axis: int = 0) -> np.ndarray:
    """Order statistics linearly interpolated at rank ``(n - 1) tau + 1``."""
    return np.quantile(x, tau, axis=axis, method="linear")


def _simulate_bootstrap_series(y, model: ArModelSpec, pool, idx) -> np.ndarray:
    p = model.order_p
    eps = pool[idx]
    init = np.broadcast_to(y[:p], (idx.shape[0],) + y[:p].shape)
    with np.errstate(over="ignore", invalid="ignore"):
        tail = _recurse(model.phi0, model.phis, init, eps)
    return np.concatenate([init, tail], axis=1)


def bootstrap_paths(
    series: SeriesMatrix,
    fitted: WeightedFit,
    pool: np.ndarray,
    b_reps: int,
    rng,
    config: FitConfig | None = None,
) -> BootstrapParameters:
    """
    Generate B pseudo-series and refit each with the fitted estimator.

    Pseudo-series keep the first p observations and run the fitted recursion
    with innovations drawn i.i.d. from ``pool``. A replicate whose path is
    non-finite or whose refit fails is redrawn once; if it fails again it is
    excluded and counted.
    """
    config = config or FitConfig()
    if fitted.method != config.method:
        config = replace(config, method=fitted.method)
    pool = np.asarray(pool, dtype=float)
    if pool.ndim == 1:
        pool = pool[:, None]
    if pool.shape[0] < 1:
        raise ValueError("empty residual pool")
    if b_reps < 1:
        raise ValueError("b_reps must be >= 1")
    rng = _as_rng(rng)
    y = series.values
    t = series.length_t
    model = fitted.model
    p = model.order_p
    if p >= t:
        raise ValueError("model order must be below the series length")

    idx = rng.integers(0, pool.shape[0], size=(b_reps, t - p))
    ystar = _simulate_bootstrap_series(y, model, pool, idx)
    finite = np.all(np.isfinite(ystar), axis=(1, 2))
    phi0 = np.full((b_reps, model.dim_n), np.nan)
    phis = np.full((b_reps, p, model.dim_n, model.dim_n), np.nan)
    ok = np.zeros(b_reps, dtype=bool)
    if finite.any():
        phi0[finite], phis[finite], ok[finite] = fit_batch(ystar[finite], p, config)

    failed = np.flatnonzero(~ok)
    n_redrawn = failed.size
    if n_redrawn:
        idx2 = rng.integers(0, pool.shape[0], size=(n_redrawn, t - p))
        y2 = _simulate_bootstrap_series(y, model, pool, idx2)
        fin2 = np.all(np.isfinite(y2), axis=(1, 2))
        if fin2.any():
            rows = failed[fin2]
            phi0[rows], phis[rows], ok[rows] = fit_batch(y2[fin2], p, config)
    n_excluded = int((~ok).sum())
    if n_excluded:
        log.warning("%d of %d bootstrap replicates excluded after redraw", n_excluded, b_reps)
    return BootstrapParameters(phi0[ok], phis[ok], n_excluded=n_excluded, n_redrawn=n_redrawn)


def bootstrap_future_draws(
    series: SeriesMatrix,
    fitted: WeightedFit,
    params: BootstrapParameters,
    pool: np.ndarray,
    horizon_h: int,
    rng,
    gamma: float = 0.05,
) -> BootstrapForecast:
    """
    Run each replicate's coefficients forward from the last p observations,
    adding a fresh pool draw at every step.
    """
    if horizon_h < 1:
        raise ValueError("horizon must be >= 1")
    if params.b_reps < 1:
        raise ValueError("no bootstrap replicates survived")
    pool = np.asarray(pool, dtype=float)
    if pool.ndim == 1:
        pool = pool[:, None]
    rng = _as_rng(rng)
    p = fitted.model.order_p
    last = series.values[-p:]
    b = params.b_reps
    eps = pool[rng.integers(0, pool.shape[0], size=(b, horizon_h))]
    init = np.broadcast_to(last, (b,) + last.shape)
    with np.errstate(over="ignore", invalid="ignore"):
        draws = _recurse(params.phi0, params.phis, init, eps)
    finite = np.all(np.isfinite(draws), axis=(1, 2))
    n_bad = int((~finite).sum())
    if n_bad:
        log.warning("%d bootstrap future paths non-finite; excluded", n_bad)
        draws = draws[finite]
    return BootstrapForecast(
        draws=draws,
        gamma=gamma,
        estimator_tag=fitted.method,
        point=forecast(fitted.model, series, horizon_h),
        n_excluded=params.n_excluded + n_bad,
    )


def interval_from_draws(fc: BootstrapForecast) -> IntervalSet:
    """Componentwise empirical quantiles of the draws at every horizon."""
    n_dim = fc.draws.shape[2]
    lo, hi = quantile_levels(fc.gamma, n_dim)
    lower = empirical_quantile(fc.draws, lo)
    upper = empirical_quantile(fc.draws, hi)
    return IntervalSet(lower=lower, upper=upper, kind="marginal" if n_dim == 1 else "bonferroni", gamma=fc.gamma)


def normal_quantile_interval(
    point_forecast: np.ndarray,
    model: ArModelSpec,
    horizon_h: int | None = None,
    gamma: float = 0.05,
) -> IntervalSet:
    """
    Gaussian plug-in intervals ``point +/- z * sqrt(diag Sigma(h))``.

    ``z`` is the upper ``gamma/2`` normal quantile for N = 1 and the
    Bonferroni ``gamma/(2N)`` quantile otherwise.
    """
    point = np.atleast_2d(np.asarray(point_forecast, dtype=float))
    if point.shape[1] != model.dim_n:
        point = point.reshape(-1, model.dim_n)
    horizon_h = horizon_h or point.shape[0]
    point = point[:horizon_h]
    _, hi = quantile_levels(gamma, model.dim_n)
    z = NormalDist().inv_cdf(hi)
    sigmas = forecast_error_cov(model, horizon_h).sigmas
    half = z * np.sqrt(np.clip(np.diagonal(sigmas, axis1=1, axis2=2), 0.0, None))
    return IntervalSet(
        lower=point - half,
        upper=point + half,
        kind="marginal" if model.dim_n == 1 else "bonferroni",
        gamma=gamma,
    )


def bootstrap_forecast(
    series: SeriesMatrix,
    fitted: WeightedFit,
    b_reps: int,
    horizon_h: int,
    rng,
    gamma: float = 0.05,
    config: FitConfig | None = None,
) -> BootstrapForecast:
    """Pool construction, pseudo-series refits and future draws in one call."""
    config = config or FitConfig()
    rng = _as_rng(rng)
    pool = prepare_bootstrap_residuals(fitted, config.rescale_mode)
    params = bootstrap_paths(series, fitted, pool, b_reps, rng, config)
    return bootstrap_future_draws(series, fitted, params, pool, horizon_h, rng, gamma)
