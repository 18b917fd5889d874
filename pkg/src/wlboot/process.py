"""AR/VAR model representation, simulation, forecasting and forecast-error covariance."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .series import SeriesMatrix

__all__ = [
    "ArModelSpec",
    "InnovationSource",
    "ForecastErrorCov",
    "SimulationError",
    "DEFAULT_BURN_IN",
    "generate_path",
    "simulate",
    "forecast",
    "ma_coefficients",
    "forecast_error_cov",
    "select_order_aic",
]

DEFAULT_BURN_IN = 500
DISTRIBUTIONS = ("gaussian", "student_t", "chi_square")


class SimulationError(RuntimeError):
    """A simulated path became non-finite."""

    def __init__(self, message: str, time_index: int | None = None):
        super().__init__(message)
        self.time_index = time_index


def _psd_factor(sigma: np.ndarray) -> np.ndarray:
    """Return ``L`` with ``L @ L.T == sigma`` (Cholesky, or eigen square root when singular)."""
    try:
        return np.linalg.cholesky(sigma)
    except np.linalg.LinAlgError:
        vals, vecs = np.linalg.eigh(sigma)
        return vecs * np.sqrt(np.clip(vals, 0.0, None))


@dataclass(frozen=True)
class ArModelSpec:
    """
    A VAR(p) model ``Y_t = phi0 + sum_i phis[i] Y_{t-1-i} + eps_t``.

    Parameters
    ----------
    phi0 : array_like
        Intercept, length N.
    phis : array_like
        Lag matrices with shape (p, N, N); ``phis[0]`` multiplies ``Y_{t-1}``.
    sigma_eps : array_like
        N x N innovation covariance. Must be symmetric positive
        semidefinite; a singular matrix is accepted (degenerate innovations)
        and reported through :attr:`is_nonsingular`.
    """

    phi0: np.ndarray
    phis: np.ndarray
    sigma_eps: np.ndarray

    def __post_init__(self) -> None:
        phi0 = np.atleast_1d(np.asarray(self.phi0, dtype=float)).copy()
        n = phi0.shape[0]
        phis = np.asarray(self.phis, dtype=float).copy()
        if phis.ndim == 1:
            phis = phis.reshape(-1, 1, 1)
        if phis.ndim != 3 or phis.shape[1:] != (n, n) or phis.shape[0] < 1:
            raise ValueError(f"phis must have shape (p, {n}, {n}), got {phis.shape}")
        sigma = np.atleast_2d(np.asarray(self.sigma_eps, dtype=float)).copy()
        if sigma.shape != (n, n):
            raise ValueError(f"sigma_eps must be {n} x {n}, got {sigma.shape}")
        if not np.allclose(sigma, sigma.T, rtol=0, atol=1e-12 * max(1.0, np.abs(sigma).max())):
            raise ValueError("sigma_eps must be symmetric")
        if np.linalg.eigvalsh(sigma).min() < -1e-12 * max(1.0, np.abs(sigma).max()):
            raise ValueError("sigma_eps must be positive semidefinite")
        for arr in (phi0, phis, sigma):
            if not np.all(np.isfinite(arr)):
                raise ValueError("model parameters must be finite")
            arr.setflags(write=False)
        object.__setattr__(self, "phi0", phi0)
        object.__setattr__(self, "phis", phis)
        object.__setattr__(self, "sigma_eps", sigma)

    @classmethod
    def univariate(cls, phi0: float, phis, sigma2: float = 1.0) -> "ArModelSpec":
        """AR(p) with scalar coefficients ``phis = [phi_1, ..., phi_p]``."""
        return cls(np.array([phi0]), np.asarray(phis, dtype=float).reshape(-1, 1, 1), np.array([[sigma2]]))

    @property
    def order_p(self) -> int:
        return self.phis.shape[0]

    @property
    def dim_n(self) -> int:
        return self.phi0.shape[0]

    @property
    def is_nonsingular(self) -> bool:
        return bool(np.linalg.eigvalsh(self.sigma_eps).min() > 0)

    def companion(self) -> np.ndarray:
        """The Np x Np companion matrix."""
        n, p = self.dim_n, self.order_p
        comp = np.zeros((n * p, n * p))
        comp[:n, :] = np.hstack(list(self.phis))
        if p > 1:
            comp[n:, :-n] = np.eye(n * (p - 1))
        return comp

    @property
    def spectral_radius(self) -> float:
        return float(np.abs(np.linalg.eigvals(self.companion())).max())

    @property
    def is_stationary(self) -> bool:
        return self.spectral_radius < 1.0

    def to_dict(self) -> dict:
        return {
            "order_p": self.order_p,
            "phi0": self.phi0.tolist(),
            "phis": self.phis.tolist(),
            "sigma_eps": self.sigma_eps.tolist(),
            "spectral_radius": self.spectral_radius,
        }


@dataclass(frozen=True)
class InnovationSource:
    """
    Seeded innovation law.

    Each ``(seed, stream_id)`` pair names an independent generator; further
    integers passed to :meth:`rng` name sub-streams, so parallel callers never
    share generator state.

    ``chi_square`` draws are centred by subtracting ``df``. Draws are not
    rescaled to unit variance before the covariance factor is applied.
    """

    distribution: str = "gaussian"
    df: float | None = None
    seed: int = 0
    stream_id: int = 0

    def __post_init__(self) -> None:
        if self.distribution not in DISTRIBUTIONS:
            raise ValueError(f"unknown distribution {self.distribution!r}")
        if self.distribution != "gaussian" and (self.df is None or self.df <= 0):
            raise ValueError(f"{self.distribution} innovations need df > 0")

    def rng(self, *substream: int) -> np.random.Generator:
        return np.random.default_rng(np.random.SeedSequence([self.seed, self.stream_id, *substream]))

    def standard_draws(self, rng: np.random.Generator, size) -> np.ndarray:
        if self.distribution == "gaussian":
            return rng.standard_normal(size)
        if self.distribution == "student_t":
            return rng.standard_t(self.df, size)
        return rng.chisquare(self.df, size) - self.df

    def draw(self, rng: np.random.Generator, length: int, sigma_eps: np.ndarray) -> np.ndarray:
        """``length`` x N innovations with covariance factor taken from ``sigma_eps``."""
        factor = _psd_factor(np.atleast_2d(sigma_eps))
        z = self.standard_draws(rng, (length, factor.shape[0]))
        return z @ factor.T


@dataclass(frozen=True)
class ForecastErrorCov:
    """``sigmas[h-1]`` is Sigma(h); ``psis[k]`` is the MA matrix Psi_k."""

    sigmas: np.ndarray
    psis: np.ndarray = field(repr=False)


def _recurse(phi0, phis, init, eps) -> np.ndarray:
    """
    Run the VAR recursion with arbitrary leading batch dimensions.

    ``phi0`` (..., N), ``phis`` (..., p, N, N), ``init`` (..., p, N) ordered
    oldest first, ``eps`` (..., M, N). Returns the M new values.
    """
    p = phis.shape[-3]
    m = eps.shape[-2]
    hist = [init[..., i, :] for i in range(p)]
    out = []
    for t in range(m):
        y = phi0 + eps[..., t, :]
        for i in range(p):
            y = y + np.matmul(phis[..., i, :, :], hist[-1 - i][..., None])[..., 0]
        out.append(y)
        hist.append(y)
        hist.pop(0)
    return np.stack(out, axis=-2) if out else np.zeros(eps.shape)


def generate_path(model: ArModelSpec, innovations: np.ndarray, initial: np.ndarray | None = None) -> np.ndarray:
    """
    Feed ``innovations`` (M x N) through the model recursion.

    ``initial`` holds the p states preceding the first output (oldest first);
    zero vectors when omitted.
    """
    eps = np.asarray(innovations, dtype=float)
    if eps.ndim == 1:
        eps = eps[:, None]
    if initial is None:
        initial = np.zeros((model.order_p, model.dim_n))
    with np.errstate(over="ignore", invalid="ignore"):
        return _recurse(model.phi0, model.phis, np.asarray(initial, dtype=float), eps)


def _check_finite(path: np.ndarray, offset: int = 0) -> None:
    bad = ~np.all(np.isfinite(path), axis=-1)
    if np.any(bad):
        t = int(np.argmax(bad))
        raise SimulationError(f"non-finite value at time index {t - offset} (explosive model?)", t - offset)


def simulate(
    model: ArModelSpec,
    length_t: int,
    innovations: InnovationSource,
    burn_in: int = DEFAULT_BURN_IN,
) -> SeriesMatrix:
    """
    Simulate ``length_t`` observations after discarding ``burn_in`` values.

    The recursion starts from zero states at the beginning of the burn-in.
    The output is fully determined by the innovation source's seed and
    stream id.
    """
    if length_t < 1 or burn_in < 0:
        raise ValueError("length_t must be >= 1 and burn_in >= 0")
    eps = innovations.draw(innovations.rng(), burn_in + length_t, model.sigma_eps)
    path = generate_path(model, eps)
    _check_finite(path, burn_in)
    return SeriesMatrix(path[burn_in:])


def forecast(model: ArModelSpec, history: SeriesMatrix | np.ndarray, horizon_h: int) -> np.ndarray:
    """H x N plug-in point forecasts conditional on the last p rows of ``history``."""
    y = history.values if isinstance(history, SeriesMatrix) else np.atleast_2d(np.asarray(history, dtype=float))
    p = model.order_p
    if y.shape[0] < p:
        raise ValueError(f"history has {y.shape[0]} rows, model order is {p}")
    if horizon_h < 1:
        raise ValueError("horizon must be >= 1")
    return _recurse(model.phi0, model.phis, y[-p:], np.zeros((horizon_h, model.dim_n)))


def ma_coefficients(model: ArModelSpec, horizon_h: int) -> np.ndarray:
    """
    MA matrices Psi_0 .. Psi_{H-1} with ``Psi_k = sum_{j=1}^{min(k,p)} Psi_{k-j} Phi_j``.

    Returns an array of shape (H, N, N).
    """
    if horizon_h < 1:
        raise ValueError("horizon must be >= 1")
    n, p = model.dim_n, model.order_p
    psis = [np.eye(n)]
    for k in range(1, horizon_h):
        acc = np.zeros((n, n))
        for j in range(1, min(k, p) + 1):
            acc = acc + psis[k - j] @ model.phis[j - 1]
        psis.append(acc)
    return np.array(psis)


def forecast_error_cov(model: ArModelSpec, horizon_h: int) -> ForecastErrorCov:
    """Sigma(h) = sum_{k<h} Psi_k Sigma_eps Psi_k' for h = 1..H."""
    psis = ma_coefficients(model, horizon_h)
    terms = psis @ model.sigma_eps @ psis.transpose(0, 2, 1)
    sigmas = np.cumsum(terms, axis=0)
    sigmas = 0.5 * (sigmas + sigmas.transpose(0, 2, 1))
    return ForecastErrorCov(sigmas=sigmas, psis=psis)


def select_order_aic(
    series: SeriesMatrix,
    p_max: int,
    estimator: Callable | None = None,
) -> tuple[int, dict[int, float]]:
    """
    Choose p in 1..p_max minimising ``ln det Sigma(p) + 2 (p N^2 + N) / T_eff``.

    Every candidate is fitted on the same effective sample ``T_eff = T - p_max``
    and ``Sigma(p)`` is the (weighted) ML residual covariance. Ties go to the
    smaller order.

    Parameters
    ----------
    estimator : callable, optional
        ``estimator(series, p) -> WeightedFit``; defaults to OLS.

    Returns
    -------
    p : int
    table : dict
        AIC value for every candidate order.
    """
    from .estimation import fit_ols

    estimator = estimator or fit_ols
    t, n = series.length_t, series.dim_n
    if p_max < 1:
        raise ValueError("p_max must be >= 1")
    if t <= p_max * n + p_max + 1:
        raise ValueError(f"series of length {t} too short for p_max={p_max} with N={n}")
    t_eff = t - p_max
    table: dict[int, float] = {}
    for p in range(1, p_max + 1):
        fit = estimator(SeriesMatrix(series.values[p_max - p :], series.labels), p)
        w = fit.weights
        e = fit.residuals
        sigma = (w[:, None] * e).T @ e / w.sum()
        sign, logdet = np.linalg.slogdet(sigma)
        table[p] = (logdet if sign > 0 else -np.inf) + 2.0 * (p * n * n + n) / t_eff
    best = min(table, key=lambda k: (table[k], k))
    return best, table
