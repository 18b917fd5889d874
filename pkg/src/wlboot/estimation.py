"""
OLS / conditional-ML fitting and the weighted-likelihood estimator.

The weighted-likelihood fit is an iteratively reweighted least-squares loop:
residuals from the current coefficients give Pearson residuals (kernel density
of the residuals over the smoothed Gaussian model density), the Hellinger RAF
turns those into weights in [0, 1], and the weighted Gaussian score equations
are solved in closed form (weighted least squares for the coefficients,
weighted second moment for the innovation covariance).

All solvers work on a leading batch axis so that bootstrap replicates can be
refitted together; the single-series functions are thin wrappers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .process import ArModelSpec
from .series import SeriesMatrix

__all__ = [
    "FitConfig",
    "WeightedFit",
    "EstimationError",
    "fit_ols",
    "fit_weighted_likelihood",
    "fit_weighted_likelihood_var",
    "fit",
    "pearson_residuals",
    "raf_weight",
    "weighted_least_squares",
    "weighted_scores",
    "prepare_bootstrap_residuals",
    "lagged_design",
]

METHODS = ("ols_cml", "weighted_likelihood")
RESCALE_MODES = ("center_only", "standardize")


class EstimationError(RuntimeError):
    """Fitting failed (rank-deficient design, degenerate residual scale)."""


@dataclass(frozen=True)
class FitConfig:
    """
    Estimator settings.

    ``kernel_smoothing_c`` sets the kernel bandwidth through
    ``g^2 = c * sigma^2`` (a bandwidth matrix ``c * Sigma`` for VAR models).
    """

    method: str = "weighted_likelihood"
    raf: str = "hellinger"
    kernel_smoothing_c: float = 0.25
    tol: float = 1e-8
    max_iter: int = 500
    rescale_mode: str = "center_only"

    def __post_init__(self) -> None:
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}, got {self.method!r}")
        if self.raf != "hellinger":
            raise ValueError("only the Hellinger RAF is supported")
        if not self.kernel_smoothing_c > 0:
            raise ValueError("kernel_smoothing_c must be positive")
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.max_iter < 0:
            raise ValueError("max_iter must be >= 0")
        if self.rescale_mode not in RESCALE_MODES:
            raise ValueError(f"rescale_mode must be one of {RESCALE_MODES}")


@dataclass(frozen=True)
class WeightedFit:
    """
    Result of an OLS or weighted-likelihood fit.

    Row ``i`` of ``residuals``/``weights``/``pearson`` belongs to time point
    ``p + i`` (0-based) of the fitted series.
    """

    model: ArModelSpec
    residuals: np.ndarray
    weights: np.ndarray
    pearson: np.ndarray
    converged: bool
    iterations: int
    method: str
    regularized: bool = False
    n_obs: int = field(default=0)

    @property
    def weighted_residuals(self) -> np.ndarray:
        return self.weights[:, None] * self.residuals

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "model": self.model.to_dict(),
            "converged": self.converged,
            "iterations": self.iterations,
            "regularized": self.regularized,
            "n_obs": self.n_obs,
            "residuals": self.residuals.tolist(),
            "weights": self.weights.tolist(),
            "pearson": self.pearson.tolist(),
        }


# ---------------------------------------------------------------------------
# Weight machinery


def _hellinger_weight(delta: np.ndarray) -> np.ndarray:
    x = delta + 1.0
    with np.errstate(invalid="ignore", divide="ignore"):
        w = np.maximum(2.0 * np.sqrt(x) - 1.0, 0.0) / x
    w = np.where(np.isinf(x), 0.0, w)
    return np.minimum(w, 1.0)


def raf_weight(delta):
    """
    Hellinger RAF weight ``min(1, [A(delta) + 1]^+ / (delta + 1))``.

    With ``A(delta) = 2 (sqrt(delta + 1) - 1)``. ``delta = inf`` maps to 0.

    Parameters
    ----------
    delta : float or ndarray
        Pearson residuals; every entry must exceed -1.

    Returns
    -------
    float or ndarray
        Weights in [0, 1].
    """
    d = np.asarray(delta, dtype=float)
    if np.any(np.isnan(d)) or np.any(d <= -1.0):
        raise ValueError("Pearson residuals must be > -1")
    w = _hellinger_weight(d)
    return float(w) if w.ndim == 0 else w


def pearson_residuals(residuals, sigma2: float, smoothing_c: float = 0.5) -> np.ndarray:
    """
    Pearson residuals ``f*/m* - 1`` for a univariate residual vector.

    ``f*`` is a Gaussian kernel density of the residuals with bandwidth
    ``g^2 = smoothing_c * sigma2`` and ``m*`` is the N(0, sigma2) model
    density smoothed by the same kernel, i.e. N(0, sigma2 + g^2).
    """
    e = np.asarray(residuals, dtype=float).ravel()
    if not sigma2 > 0:
        raise ValueError("sigma2 must be positive (degenerate residual scale)")
    if not smoothing_c > 0:
        raise ValueError("smoothing_c must be positive")
    return _pearson_scalar(e[None, :], np.array([sigma2]), smoothing_c)[0]


def _pearson_scalar(e: np.ndarray, sigma2: np.ndarray, c: float) -> np.ndarray:
    """Batched univariate Pearson residuals; ``e`` is (B, n), ``sigma2`` is (B,)."""
    g2 = c * sigma2[:, None, None]
    diff = e[:, :, None] - e[:, None, :]
    f_star = np.exp(-0.5 * diff**2 / g2).mean(axis=2) / np.sqrt(2.0 * np.pi * g2[:, :, 0])
    s2 = (sigma2 * (1.0 + c))[:, None]
    m_star = np.exp(-0.5 * e**2 / s2) / np.sqrt(2.0 * np.pi * s2)
    with np.errstate(divide="ignore", over="ignore"):
        return f_star / m_star - 1.0


def _pearson_mv(e: np.ndarray, sigma: np.ndarray, c: float) -> np.ndarray:
    """
    Batched multivariate Pearson residuals; ``e`` is (B, n, N), ``sigma`` (B, N, N).

    Kernel N(0, c Sigma) and smoothed model N(0, (1 + c) Sigma); working in
    Mahalanobis-standardised residuals the normalising determinants cancel.
    """
    n_dim = e.shape[-1]
    chol = np.linalg.cholesky(sigma)
    u = np.linalg.solve(chol[:, None, :, :], e[..., None])[..., 0]
    sq = np.einsum("bti,bti->bt", u, u)
    d2 = sq[:, :, None] + sq[:, None, :] - 2.0 * np.einsum("bti,bri->btr", u, u)
    np.maximum(d2, 0.0, out=d2)
    kern = np.exp(-0.5 * d2 / c).mean(axis=2)
    log_ratio = np.log(kern) + 0.5 * n_dim * math.log((1.0 + c) / c) + 0.5 * sq / (1.0 + c)
    with np.errstate(over="ignore"):
        return np.exp(log_ratio) - 1.0


# ---------------------------------------------------------------------------
# Least squares on a batch of series


def lagged_design(y: np.ndarray, p: int) -> tuple[np.ndarray, np.ndarray]:
    """
    Regressors and targets for a batch of series ``y`` with shape (B, T, N).

    Returns ``X`` (B, T-p, 1+Np) with columns ``[1, Y_{t-1}, ..., Y_{t-p}]``
    and ``Z`` (B, T-p, N).
    """
    t = y.shape[1]
    cols = [np.ones(y.shape[:1] + (t - p, 1))]
    cols += [y[:, p - i : t - i, :] for i in range(1, p + 1)]
    return np.concatenate(cols, axis=2), y[:, p:, :]


def _solve_batch(a: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Batched ``solve(a, b)``; singular systems yield NaN and ok=False."""
    try:
        x = np.linalg.solve(a, b)
        ok = np.all(np.isfinite(x), axis=(1, 2))
        return x, ok
    except np.linalg.LinAlgError:
        x = np.full(b.shape, np.nan)
        ok = np.zeros(a.shape[0], dtype=bool)
        for i in range(a.shape[0]):
            try:
                x[i] = np.linalg.solve(a[i], b[i])
                ok[i] = np.all(np.isfinite(x[i]))
            except np.linalg.LinAlgError:
                pass
        return x, ok


def _wls(x: np.ndarray, z: np.ndarray, w: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    xw = x * w[:, :, None]
    xtx = np.matmul(xw.transpose(0, 2, 1), x)
    xtz = np.matmul(xw.transpose(0, 2, 1), z)
    return _solve_batch(xtx, xtz)


def _split_beta(beta: np.ndarray, p: int) -> tuple[np.ndarray, np.ndarray]:
    """(k, N) coefficient block -> intercept (N,) and lag matrices (p, N, N)."""
    n = beta.shape[-1]
    phi0 = beta[..., 0, :]
    lags = beta[..., 1:, :].reshape(beta.shape[:-2] + (p, n, n))
    return phi0, np.swapaxes(lags, -1, -2)


def _weighted_cov(resid: np.ndarray, w: np.ndarray) -> np.ndarray:
    rw = resid * w[:, :, None]
    return np.matmul(rw.transpose(0, 2, 1), resid) / w.sum(axis=1)[:, None, None]


def _regularize(sigma: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    n = sigma.shape[-1]
    tr = np.trace(sigma, axis1=1, axis2=2)
    min_eig = np.linalg.eigvalsh(sigma)[:, 0]
    bad = (min_eig <= 1e-10 * tr / n) & (tr > 0)
    if np.any(bad):
        sigma = sigma.copy()
        sigma[bad] += (1e-8 * tr[bad] / n)[:, None, None] * np.eye(n)
    return sigma, bad


@dataclass
class _BatchFit:
    beta: np.ndarray
    sigma: np.ndarray
    resid: np.ndarray
    weights: np.ndarray
    pearson: np.ndarray
    ok: np.ndarray
    converged: np.ndarray
    iterations: np.ndarray
    regularized: np.ndarray


def _ols_batch(y: np.ndarray, p: int) -> _BatchFit:
    x, z = lagged_design(y, p)
    b, n_obs, n = z.shape
    w = np.ones((b, n_obs))
    beta, ok = _wls(x, z, w)
    resid = z - np.matmul(x, beta)
    dof = n_obs - n * p - 1
    sigma = np.matmul(resid.transpose(0, 2, 1), resid) / dof
    return _BatchFit(
        beta=beta,
        sigma=sigma,
        resid=resid,
        weights=w,
        pearson=np.zeros((b, n_obs)),
        ok=ok & np.all(np.isfinite(resid), axis=(1, 2)),
        converged=ok.copy(),
        iterations=np.zeros(b, dtype=int),
        regularized=np.zeros(b, dtype=bool),
    )


def _delta_batch(resid: np.ndarray, sigma: np.ndarray, c: float, univariate: bool) -> np.ndarray:
    if univariate:
        return _pearson_scalar(resid[:, :, 0], sigma[:, 0, 0], c)
    return _pearson_mv(resid, sigma, c)


def _wl_batch(y: np.ndarray, p: int, cfg: FitConfig, univariate: bool) -> _BatchFit:
    """IRLS for the weighted-likelihood equations, started at OLS."""
    fit = _ols_batch(y, p)
    x, z = lagged_design(y, p)
    c = cfg.kernel_smoothing_c
    n_dim = y.shape[2]
    # a non-positive residual scale has no Pearson residuals
    scale_ok = np.linalg.eigvalsh(np.where(fit.ok[:, None, None], fit.sigma, 1.0))[:, 0] > 0
    fit.ok &= scale_ok
    fit.converged[:] = False
    beta, sigma, resid = fit.beta, fit.sigma, fit.resid
    active = fit.ok.copy()
    for _ in range(cfg.max_iter):
        if not active.any():
            break
        idx = np.flatnonzero(active)
        delta = _delta_batch(resid[idx], sigma[idx], c, univariate)
        w = _hellinger_weight(delta)
        new_beta, solved = _wls(x[idx], z[idx], w)
        new_resid = z[idx] - np.matmul(x[idx], new_beta)
        new_sigma = _weighted_cov(new_resid, w)
        if n_dim > 1:
            new_sigma, reg = _regularize(new_sigma)
            fit.regularized[idx] |= reg
        good = solved & np.all(np.isfinite(new_sigma), axis=(1, 2)) & (np.linalg.eigvalsh(new_sigma)[:, 0] > 0)
        change = np.maximum(
            np.abs(new_beta - beta[idx]).max(axis=(1, 2)),
            np.abs(new_sigma - sigma[idx]).max(axis=(1, 2)),
        )
        keep = idx[good]
        beta[keep] = new_beta[good]
        sigma[keep] = new_sigma[good]
        resid[keep] = new_resid[good]
        fit.iterations[idx] += 1
        fit.ok[idx[~good]] = False
        active[idx[~good]] = False
        done = idx[good & (change < cfg.tol)]
        fit.converged[done] = True
        active[done] = False
    ok = np.flatnonzero(fit.ok)
    if ok.size:
        delta = _delta_batch(resid[ok], sigma[ok], c, univariate)
        fit.pearson[ok] = delta
        fit.weights[ok] = _hellinger_weight(delta)
    return fit


def _batch(y: np.ndarray, p: int, cfg: FitConfig) -> _BatchFit:
    if cfg.method == "ols_cml":
        return _ols_batch(y, p)
    return _wl_batch(y, p, cfg, univariate=y.shape[2] == 1)


# ---------------------------------------------------------------------------
# Single-series API


def _check_sizes(series: SeriesMatrix, p: int) -> None:
    if p < 1:
        raise ValueError("order p must be >= 1")
    t, n = series.length_t, series.dim_n
    if t - p < n * p + 2:
        raise ValueError(f"series of length {t} too short for order {p} with N={n} (need T - p >= Np + 2)")


def _check_rank(series: SeriesMatrix, p: int) -> None:
    x, _ = lagged_design(series.values[None], p)
    if np.linalg.matrix_rank(x[0]) < x.shape[2]:
        raise EstimationError("rank-deficient lagged design (constant or collinear series)")


def _to_fit(batch: _BatchFit, i: int, p: int, method: str) -> WeightedFit:
    phi0, phis = _split_beta(batch.beta[i], p)
    sigma = 0.5 * (batch.sigma[i] + batch.sigma[i].T)
    return WeightedFit(
        model=ArModelSpec(phi0, phis, sigma),
        residuals=batch.resid[i].copy(),
        weights=batch.weights[i].copy(),
        pearson=batch.pearson[i].copy(),
        converged=bool(batch.converged[i]),
        iterations=int(batch.iterations[i]),
        method=method,
        regularized=bool(batch.regularized[i]),
        n_obs=batch.resid.shape[1],
    )


def fit_ols(series: SeriesMatrix, order_p: int) -> WeightedFit:
    """
    Multivariate least squares with intercept (the conditional Gaussian ML
    coefficients). ``Sigma`` uses the divisor ``T - p - Np - 1``.
    """
    _check_sizes(series, order_p)
    _check_rank(series, order_p)
    batch = _ols_batch(series.values[None], order_p)
    if not batch.ok[0]:
        raise EstimationError("least-squares solve failed")
    return _to_fit(batch, 0, order_p, "ols_cml")


def _fit_wl(series: SeriesMatrix, order_p: int, config: FitConfig, univariate: bool) -> WeightedFit:
    _check_sizes(series, order_p)
    _check_rank(series, order_p)
    batch = _wl_batch(series.values[None], order_p, config, univariate)
    if not batch.ok[0]:
        raise EstimationError("weighted-likelihood fit failed (degenerate residual scale or singular weighted design)")
    return _to_fit(batch, 0, order_p, "weighted_likelihood")


def fit_weighted_likelihood(series: SeriesMatrix, order_p: int, config: FitConfig | None = None) -> WeightedFit:
    """
    Weighted-likelihood AR(p) fit for a univariate series.

    Starts at OLS and alternates Pearson residuals, Hellinger weights,
    weighted least squares and the weighted variance until the largest
    parameter change is below ``config.tol``. If ``max_iter`` is reached
    first, the last iterate is returned with ``converged=False``.
    """
    if series.dim_n != 1:
        raise ValueError("fit_weighted_likelihood is univariate; use fit_weighted_likelihood_var")
    return _fit_wl(series, order_p, config or FitConfig(), univariate=True)


def fit_weighted_likelihood_var(series: SeriesMatrix, order_p: int, config: FitConfig | None = None) -> WeightedFit:
    """
    Weighted-likelihood VAR(p) fit with one scalar weight per time point.

    The kernel density uses bandwidth matrix ``c * Sigma`` and the smoothed
    model density is N(0, (1 + c) Sigma). A near-singular ``Sigma`` during the
    iteration gets ``1e-8 * trace / N`` added to its diagonal and the fit is
    flagged ``regularized``.
    """
    return _fit_wl(series, order_p, config or FitConfig(), univariate=False)


def fit(series: SeriesMatrix, order_p: int, config: FitConfig | None = None) -> WeightedFit:
    """Dispatch on ``config.method``."""
    config = config or FitConfig()
    if config.method == "ols_cml":
        return fit_ols(series, order_p)
    if series.dim_n == 1:
        return fit_weighted_likelihood(series, order_p, config)
    return fit_weighted_likelihood_var(series, order_p, config)


def fit_batch(y: np.ndarray, order_p: int, config: FitConfig) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Fit every series in ``y`` (B, T, N) with the configured method.

    Returns intercepts (B, N), lag matrices (B, p, N, N) and a success mask.
    """
    batch = _batch(np.asarray(y, dtype=float), order_p, config)
    phi0, phis = _split_beta(batch.beta, order_p)
    return phi0, phis, batch.ok


def weighted_least_squares(series: SeriesMatrix, order_p: int, weights) -> ArModelSpec:
    """
    Coefficients solving the weighted normal equations for fixed ``weights``.

    The covariance is the weighted residual second moment.
    """
    x, z = lagged_design(series.values[None], order_p)
    w = np.asarray(weights, dtype=float)[None, :]
    beta, ok = _wls(x, z, w)
    if not ok[0]:
        raise EstimationError("singular weighted design")
    resid = z - np.matmul(x, beta)
    phi0, phis = _split_beta(beta[0], order_p)
    sigma = _weighted_cov(resid, w)[0]
    return ArModelSpec(phi0, phis, 0.5 * (sigma + sigma.T))


def weighted_scores(series: SeriesMatrix, fitted: WeightedFit) -> tuple[np.ndarray, np.ndarray]:
    """
    Averaged weighted Gaussian scores at a fit, using the fit's weights.

    Returns the coefficient score (1+Np, N) and the scale score (N, N):
    ``mean_t w_t x_t e_t' Sigma^-1`` and
    ``mean_t w_t (Sigma^-1 e_t e_t' Sigma^-1 - Sigma^-1) / 2``.
    Both vanish at a solution of the weighted estimating equations.
    """
    model = fitted.model
    x, _ = lagged_design(series.values[None], model.order_p)
    x = x[0]
    e = fitted.residuals
    w = fitted.weights
    inv = np.linalg.inv(model.sigma_eps)
    n_obs = e.shape[0]
    score_phi = (x * w[:, None]).T @ e @ inv / n_obs
    outer = (e * w[:, None]).T @ e / n_obs
    score_sigma = 0.5 * (inv @ outer @ inv - w.mean() * inv)
    return score_phi, score_sigma


def prepare_bootstrap_residuals(fitted: WeightedFit, mode: str = "center_only") -> np.ndarray:
    """
    Resampling pool from the weighted residuals ``w_t * e_t``.

    The pool is centred. ``center_only`` then inflates it by
    ``sqrt(n / (n - Np - 1))``; ``standardize`` divides each component by its
    standard deviation instead.
    """
    if mode not in RESCALE_MODES:
        raise ValueError(f"mode must be one of {RESCALE_MODES}")
    e = fitted.weighted_residuals
    if e.shape[0] < 2:
        raise ValueError("need at least 2 residuals to build a pool")
    e = e - e.mean(axis=0)
    n_obs, n = e.shape
    p = fitted.model.order_p
    if mode == "center_only":
        return e * math.sqrt(n_obs / (n_obs - n * p - 1))
    sd = e.std(axis=0)
    return e / np.where(sd > 0, sd, 1.0)
