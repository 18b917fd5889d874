"""Monte Carlo harness: scenario simulation, interval metrics and aggregation."""

from __future__ import annotations

import csv
import io
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .bootstrap import (
    IntervalSet,
    bootstrap_forecast,
    empirical_quantile,
    interval_from_draws,
    normal_quantile_interval,
    quantile_levels,
)
from .contamination import OutlierPlan, contaminate_ao, contaminate_io, draw_positions
from .estimation import EstimationError, FitConfig, fit
from .process import DEFAULT_BURN_IN, ArModelSpec, InnovationSource, _recurse, generate_path, select_order_aic
from .series import SeriesMatrix

__all__ = [
    "ContaminationSpec",
    "ScenarioConfig",
    "MetricsReport",
    "ScenarioError",
    "coverage",
    "interval_length",
    "cube_volume",
    "cube_squared_error",
    "empirical_cube",
    "run_replication",
    "run_scenario",
    "CSV_COLUMNS",
]

log = logging.getLogger(__name__)

CSV_COLUMNS = ("estimator", "h", "coverage", "length_or_volume", "sq_error", "normal_coverage")
UNRELIABLE_EXCLUSION_RATE = 0.02

# per-replication RNG sub-streams
_TRAIN, _TRAIN_POS, _FUTURE_POS, _FUTURES, _BOOT = range(5)


class ScenarioError(ValueError):
    """Invalid scenario configuration."""


# ---------------------------------------------------------------------------
# Metrics


def _at(intervals: IntervalSet, h: int) -> tuple[np.ndarray, np.ndarray]:
    if not 1 <= h <= intervals.horizon:
        raise ValueError(f"horizon {h} outside 1..{intervals.horizon}")
    return intervals.lower[h - 1], intervals.upper[h - 1]


def coverage(futures: np.ndarray, intervals: IntervalSet, h: int) -> float:
    """
    Fraction of the true futures (R x N) inside the closed interval or cube at horizon h.

    A future counts only if every component lies inside its interval.
    """
    lo, hi = _at(intervals, h)
    y = np.asarray(futures, dtype=float)
    if y.ndim == 1:
        y = y[:, None]
    inside = np.all((y >= lo) & (y <= hi), axis=1)
    return float(inside.mean())


def interval_length(intervals: IntervalSet, h: int) -> np.ndarray:
    """Per-component width at horizon h."""
    lo, hi = _at(intervals, h)
    return hi - lo


def cube_volume(intervals: IntervalSet, h: int) -> float:
    """Product of the component widths at horizon h."""
    return float(np.prod(interval_length(intervals, h)))


def cube_squared_error(boot: IntervalSet, empirical: IntervalSet, h: int) -> float:
    """Sum over components and both endpoints of the squared endpoint differences."""
    if boot.lower.shape[1] != empirical.lower.shape[1]:
        raise ValueError("cubes have different dimensions")
    b_lo, b_hi = _at(boot, h)
    e_lo, e_hi = _at(empirical, h)
    return float(np.sum((e_hi - b_hi) ** 2) + np.sum((e_lo - b_lo) ** 2))


def empirical_cube(futures: np.ndarray, gamma: float) -> IntervalSet:
    """Quantile cube of true futures (R, H, N) at the bootstrap's levels."""
    n_dim = futures.shape[2]
    lo, hi = quantile_levels(gamma, n_dim)
    return IntervalSet(
        lower=empirical_quantile(futures, lo),
        upper=empirical_quantile(futures, hi),
        kind="marginal" if n_dim == 1 else "bonferroni",
        gamma=gamma,
    )


# ---------------------------------------------------------------------------
# Scenario definition


@dataclass(frozen=True)
class ContaminationSpec:
    """
    Outlier template; positions are drawn afresh in every replication.

    Training spans use ``rate`` (count ``round(T * rate)``); future spans use
    ``count``.
    """

    kind: str = "AO"
    target: str = "training"
    rate: float | None = None
    count: int | None = None
    magnitude: tuple[float, ...] = (5.0,)
    component_mask: tuple[int, ...] | None = None

    def __post_init__(self) -> None:
        if self.kind not in ("AO", "IO"):
            raise ScenarioError(f"contamination kind must be AO or IO, got {self.kind!r}")
        if self.target not in ("training", "future"):
            raise ScenarioError(f"contamination target must be training or future, got {self.target!r}")
        if self.target == "training" and (self.rate is None or not 0 <= self.rate <= 1):
            raise ScenarioError("training contamination needs a rate in [0, 1]")
        if self.target == "future" and (self.count is None or self.count < 0):
            raise ScenarioError("future contamination needs a count >= 0")

    def plan(self, positions) -> OutlierPlan:
        mag = self.magnitude[0] if len(self.magnitude) == 1 else tuple(self.magnitude)
        return OutlierPlan(self.kind, mag, tuple(positions), self.component_mask, self.target)


@dataclass(frozen=True)
class ScenarioConfig:
    """
    One Monte Carlo experiment.

    ``order`` is ``"true"`` (fit the DGP order), ``"auto"`` (AIC over
    ``1..p_max``) or a fixed integer.
    """

    model: ArModelSpec
    sample_t: int = 100
    mc_reps: int = 200
    b_reps: int = 499
    r_futures: int = 1000
    horizon: int = 10
    gamma: float = 0.05
    contamination: ContaminationSpec | None = None
    error_dist: str = "gaussian"
    df: float | None = None
    estimators: tuple[str, ...] = ("ols_cml", "weighted_likelihood")
    order: int | str = "true"
    p_max: int = 5
    burn_in: int = DEFAULT_BURN_IN
    seed: int = 20240101
    fit_config: FitConfig = field(default_factory=FitConfig)
    threads: int = 1
    future_anchor: str = "observed"
    name: str = "scenario"

    def __post_init__(self) -> None:
        for key in ("sample_t", "mc_reps", "b_reps", "r_futures", "horizon", "threads"):
            if getattr(self, key) < 1:
                raise ScenarioError(f"{key} must be >= 1")
        if not 0 < self.gamma < 0.5:
            raise ScenarioError("gamma must lie in (0, 0.5)")
        if self.future_anchor not in ("observed", "clean"):
            raise ScenarioError("future_anchor must be 'observed' or 'clean'")
        if not self.estimators:
            raise ScenarioError("at least one estimator is required")
        for est in self.estimators:
            if est not in ("ols_cml", "weighted_likelihood"):
                raise ScenarioError(f"unknown estimator {est!r}")
        if not (self.order in ("true", "auto") or (isinstance(self.order, int) and self.order >= 1)):
            raise ScenarioError(f"order must be 'true', 'auto' or a positive integer, got {self.order!r}")
        try:
            self.innovation_source(0)
        except ValueError as exc:
            raise ScenarioError(str(exc)) from None
        c = self.contamination
        if c is not None and c.target == "future" and c.count > self.horizon:
            raise ScenarioError("future outlier count exceeds the horizon")

    def innovation_source(self, rep: int) -> InnovationSource:
        return InnovationSource(self.error_dist, self.df, self.seed, rep)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["model"] = self.model.to_dict()
        return d


@dataclass
class MetricsReport:
    """
    Aggregated Monte Carlo metrics.

    ``cells`` holds one dict per (estimator, h) with the columns in
    :data:`CSV_COLUMNS`. ``length_or_volume`` is the interval length for
    N = 1 and the Bonferroni cube volume otherwise; ``sq_error`` compares the
    bootstrap cube with the quantile cube of the simulated true futures.
    """

    cells: list[dict]
    dim_n: int
    mc_reps: int
    b_reps: int
    excluded: dict[str, int]
    unreliable: dict[str, bool]
    config: dict = field(default_factory=dict)

    def cell(self, estimator: str, h: int) -> dict:
        for c in self.cells:
            if c["estimator"] == estimator and c["h"] == h:
                return c
        raise KeyError((estimator, h))

    def series(self, estimator: str, column: str) -> np.ndarray:
        rows = sorted((c for c in self.cells if c["estimator"] == estimator), key=lambda c: c["h"])
        return np.array([c[column] for c in rows])

    def to_json(self) -> str:
        payload = {
            "dim_n": self.dim_n,
            "mc_reps": self.mc_reps,
            "b_reps": self.b_reps,
            "excluded_replicates": self.excluded,
            "unreliable": self.unreliable,
            "cells": self.cells,
            "config": self.config,
        }
        return json.dumps(payload, indent=2, sort_keys=True)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for c in self.cells:
            writer.writerow([c[k] if isinstance(c[k], (str, int)) else repr(float(c[k])) for k in CSV_COLUMNS])
        return buf.getvalue()


# ---------------------------------------------------------------------------
# Simulation of one replication


def _training_path(cfg: ScenarioConfig, src: InnovationSource) -> tuple[SeriesMatrix, SeriesMatrix]:
    """Observed (possibly contaminated) and clean training paths."""
    model = cfg.model
    eps = src.draw(src.rng(_TRAIN), cfg.burn_in + cfg.sample_t, model.sigma_eps)
    clean = generate_path(model, eps)[cfg.burn_in :]
    if not np.all(np.isfinite(clean)):
        raise ScenarioError("true model produced a non-finite training path")
    clean = SeriesMatrix(clean)
    cont = cfg.contamination
    if cont is None or cont.target != "training":
        return clean, clean
    positions = draw_positions(cfg.sample_t, src.rng(_TRAIN_POS), rate=cont.rate)
    if cont.kind == "IO":
        return contaminate_io(model, eps, cont.plan(positions), burn_in=cfg.burn_in), clean
    return contaminate_ao(clean, cont.plan(positions)), clean


def _true_futures(cfg: ScenarioConfig, src: InnovationSource, y: SeriesMatrix) -> np.ndarray:
    """R x H x N futures of the true DGP continuing the terminal states of ``y``."""
    model = cfg.model
    r, h, n = cfg.r_futures, cfg.horizon, model.dim_n
    eps = src.draw(src.rng(_FUTURES), r * h, model.sigma_eps).reshape(r, h, n)
    cont = cfg.contamination
    plan = None
    if cont is not None and cont.target == "future":
        plan = cont.plan(draw_positions(h, src.rng(_FUTURE_POS), count=cont.count))
        if cont.kind == "IO":
            eps = eps.copy()
            eps[:, list(plan.positions), :] += plan.shift(n)
    last = y.values[-model.order_p :]
    fut = _recurse(model.phi0, model.phis, np.broadcast_to(last, (r,) + last.shape), eps)
    if plan is not None and plan.kind == "AO":
        fut[:, list(plan.positions), :] += plan.shift(n)
    return fut


def _fit_order(cfg: ScenarioConfig, y: SeriesMatrix, fc: FitConfig) -> int:
    if cfg.order == "true":
        return cfg.model.order_p
    if cfg.order == "auto":
        return select_order_aic(y, cfg.p_max, lambda s, p: fit(s, p, fc))[0]
    return int(cfg.order)


def run_replication(cfg: ScenarioConfig, rep: int) -> dict:
    """
    Metrics of a single replication, keyed by estimator.

    Each value holds per-horizon arrays ``coverage``, ``length`` (N x H),
    ``volume``, ``sq_error``, ``normal_coverage`` and the excluded-replicate
    count.
    """
    src = cfg.innovation_source(rep)
    y, clean = _training_path(cfg, src)
    fut = _true_futures(cfg, src, y if cfg.future_anchor == "observed" else clean)
    emp = empirical_cube(fut, cfg.gamma)
    out = {}
    for est in cfg.estimators:
        fc = replace(cfg.fit_config, method=est)
        try:
            p = _fit_order(cfg, y, fc)
            fitted = fit(y, p, fc)
            boot = bootstrap_forecast(y, fitted, cfg.b_reps, cfg.horizon, src.rng(_BOOT), cfg.gamma, fc)
        except (EstimationError, ValueError, np.linalg.LinAlgError) as exc:
            raise EstimationError(f"replication {rep}, estimator {est}: {exc}") from exc
        iv = interval_from_draws(boot)
        normal = normal_quantile_interval(boot.point, fitted.model, cfg.horizon, cfg.gamma)
        hs = range(1, cfg.horizon + 1)
        out[est] = {
            "coverage": np.array([coverage(fut[:, h - 1], iv, h) for h in hs]),
            "length": np.array([interval_length(iv, h) for h in hs]),
            "volume": np.array([cube_volume(iv, h) for h in hs]),
            "sq_error": np.array([cube_squared_error(iv, emp, h) for h in hs]),
            "normal_coverage": np.array([coverage(fut[:, h - 1], normal, h) for h in hs]),
            "excluded": boot.n_excluded,
        }
    return out


def _run_chunk(args) -> list[dict]:
    cfg, reps = args
    return [run_replication(cfg, r) for r in reps]


def run_scenario(config: ScenarioConfig) -> MetricsReport:
    """
    Run every replication and average the metrics over replications.

    Replications use independent replicate-indexed RNG streams, so results
    do not depend on ``threads``; the reduction runs in replicate order.
    """
    reps = list(range(config.mc_reps))
    if config.threads > 1 and config.mc_reps > 1:
        chunks = [reps[i :: config.threads] for i in range(config.threads)]
        results: list[dict | None] = [None] * config.mc_reps
        with ProcessPoolExecutor(max_workers=config.threads) as pool:
            for chunk, res in zip(chunks, pool.map(_run_chunk, [(config, c) for c in chunks])):
                for r, v in zip(chunk, res):
                    results[r] = v
    else:
        results = []
        for r in reps:
            results.append(run_replication(config, r))
            if (r + 1) % 50 == 0:
                log.info("%s: %d/%d replications", config.name, r + 1, config.mc_reps)

    n = config.model.dim_n
    cells = []
    excluded, unreliable = {}, {}
    for est in config.estimators:
        per = [res[est] for res in results]
        cov = np.mean([x["coverage"] for x in per], axis=0)
        ncov = np.mean([x["normal_coverage"] for x in per], axis=0)
        sq = np.mean([x["sq_error"] for x in per], axis=0)
        if n == 1:
            size = np.mean([x["length"][:, 0] for x in per], axis=0)
        else:
            size = np.mean([x["volume"] for x in per], axis=0)
        excluded[est] = int(sum(x["excluded"] for x in per))
        unreliable[est] = excluded[est] > UNRELIABLE_EXCLUSION_RATE * config.mc_reps * config.b_reps
        for h in range(config.horizon):
            cells.append(
                {
                    "estimator": est,
                    "h": h + 1,
                    "coverage": float(cov[h]),
                    "length_or_volume": float(size[h]),
                    "sq_error": float(sq[h]),
                    "normal_coverage": float(ncov[h]),
                }
            )
    for est, flag in unreliable.items():
        if flag:
            log.warning("%s: more than %.0f%% of bootstrap replicates excluded", est, 100 * UNRELIABLE_EXCLUSION_RATE)
    return MetricsReport(
        cells=cells,
        dim_n=n,
        mc_reps=config.mc_reps,
        b_reps=config.b_reps,
        excluded=excluded,
        unreliable=unreliable,
        config=_json_safe(config.to_dict()),
    )


def _json_safe(obj):
    if isinstance(obj, dict):
        return {k: _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _json_safe(obj.tolist())
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    return obj
