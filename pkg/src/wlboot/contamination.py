"""Additive (AO) and innovative (IO) outlier injection."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .process import ArModelSpec, generate_path
from .series import SeriesMatrix

__all__ = ["OutlierPlan", "contaminate_ao", "contaminate_io", "draw_positions", "n_outliers"]


@dataclass(frozen=True)
class OutlierPlan:
    """
    Where and how large the outliers are.

    Positions are 0-based indices into the target span (training rows, or
    future steps where 0 is h = 1). ``component_mask`` lists 0-based
    component indices; ``None`` means every component.
    """

    kind: str
    magnitude: tuple[float, ...] | float
    positions: tuple[int, ...] = ()
    component_mask: tuple[int, ...] | None = None
    target: str = "training"

    def __post_init__(self) -> None:
        if self.kind not in ("AO", "IO"):
            raise ValueError(f"outlier kind must be 'AO' or 'IO', got {self.kind!r}")
        if self.target not in ("training", "future"):
            raise ValueError(f"target must be 'training' or 'future', got {self.target!r}")
        if self.component_mask is not None and len(self.component_mask) == 0:
            raise ValueError("component mask must not be empty")
        object.__setattr__(self, "positions", tuple(int(s) for s in self.positions))

    def shift(self, n_dim: int) -> np.ndarray:
        """The N-vector added at each outlier position (zero off the mask)."""
        delta = np.broadcast_to(np.asarray(self.magnitude, dtype=float), (n_dim,)).copy()
        if self.component_mask is not None:
            mask = np.zeros(n_dim, dtype=bool)
            for i in self.component_mask:
                if not 0 <= i < n_dim:
                    raise ValueError(f"component {i} outside 0..{n_dim - 1}")
                mask[i] = True
            delta[~mask] = 0.0
        return delta

    def _check(self, span: int) -> None:
        for s in self.positions:
            if not 0 <= s < span:
                raise IndexError(f"outlier position {s} outside span 0..{span - 1}")


def contaminate_ao(series: SeriesMatrix, plan: OutlierPlan) -> SeriesMatrix:
    """Add the outlier shift to the observations at each plan position."""
    if plan.kind != "AO":
        raise ValueError("contaminate_ao needs an AO plan")
    plan._check(series.length_t)
    x = series.values.copy()
    delta = plan.shift(series.dim_n)
    for s in plan.positions:
        x[s] += delta
    return SeriesMatrix(x, series.labels)


def contaminate_io(
    model: ArModelSpec,
    innovations: np.ndarray,
    plan: OutlierPlan,
    initial: np.ndarray | None = None,
    burn_in: int = 0,
) -> SeriesMatrix:
    """
    Shock the innovations and regenerate the path through the model.

    ``innovations`` covers ``burn_in`` start-up rows followed by the retained
    span; plan positions index the retained span. ``initial`` holds the p
    states preceding the first innovation (zeros when omitted).
    """
    if plan.kind != "IO":
        raise ValueError("contaminate_io needs an IO plan")
    eps = np.array(innovations, dtype=float)
    if eps.ndim == 1:
        eps = eps[:, None]
    plan._check(eps.shape[0] - burn_in)
    delta = plan.shift(eps.shape[1])
    for s in plan.positions:
        eps[burn_in + s] += delta
    return SeriesMatrix(generate_path(model, eps, initial)[burn_in:])


def n_outliers(span: int, rate: float) -> int:
    """``round(span * rate)`` with halves rounded up."""
    return int(math.floor(span * rate + 0.5))


def draw_positions(
    span: int,
    rng: np.random.Generator,
    rate: float | None = None,
    count: int | None = None,
) -> tuple[int, ...]:
    """
    Uniformly sample distinct positions in ``0..span-1``.

    Give either ``rate`` (count is ``round(span * rate)``, used for training
    spans) or an explicit ``count`` (used for future spans).
    """
    if (rate is None) == (count is None):
        raise ValueError("give exactly one of rate or count")
    k = n_outliers(span, rate) if rate is not None else int(count)
    if k < 0 or k > span:
        raise ValueError(f"cannot place {k} outliers in a span of {span}")
    if k == 0:
        return ()
    return tuple(sorted(int(s) for s in rng.choice(span, size=k, replace=False)))
