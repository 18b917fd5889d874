import math
from dataclasses import replace
from statistics import NormalDist

import numpy as np
import pytest
from conftest import VAR2
from hypothesis import given, settings
from hypothesis import strategies as st

from wlboot.bootstrap import (
    BootstrapForecast,
    BootstrapParameters,
    bootstrap_forecast,
    bootstrap_future_draws,
    bootstrap_paths,
    empirical_quantile,
    interval_from_draws,
    normal_quantile_interval,
    quantile_levels,
)
from wlboot.estimation import FitConfig, fit, fit_ols, prepare_bootstrap_residuals
from wlboot.process import ArModelSpec, InnovationSource, forecast, simulate
from wlboot.series import SeriesMatrix

Z975 = NormalDist().inv_cdf(0.975)


def _ar1(seed, t=100, phi=0.5):
    return simulate(ArModelSpec.univariate(0, [phi]), t, InnovationSource(seed=seed))


def _rank_rule(x, tau):
    """Order statistics with linear interpolation at rank (B-1) tau + 1."""
    s = sorted(x)
    r = (len(s) - 1) * tau
    lo = math.floor(r)
    hi = min(lo + 1, len(s) - 1)
    return s[lo] + (r - lo) * (s[hi] - s[lo])


def test_degenerate_pool_gives_exact_recursion():
    y = _ar1(1)
    f = fit_ols(y, 1)
    f = replace(f, model=ArModelSpec.univariate(0.0, [0.5], f.model.sigma_eps[0, 0]))
    params = bootstrap_paths(y, f, np.zeros((5, 1)), 3, np.random.default_rng(0))
    np.testing.assert_allclose(params.phis[:, 0, 0, 0], 0.5, atol=1e-8)
    np.testing.assert_allclose(params.phi0[:, 0], 0.0, atol=1e-8)


def test_degenerate_pool_collapses_to_point_forecast():
    y = _ar1(2)
    f = fit_ols(y, 1)
    params = BootstrapParameters(np.repeat(f.model.phi0[None], 4, axis=0), np.repeat(f.model.phis[None], 4, axis=0))
    fc = bootstrap_future_draws(y, f, params, np.zeros((3, 1)), 5, np.random.default_rng(1))
    for b in range(4):
        np.testing.assert_allclose(fc.draws[b], forecast(f.model, y, 5), atol=1e-14)
    iv = interval_from_draws(fc)
    np.testing.assert_allclose(iv.lower, iv.upper, atol=1e-14)


def test_b1_bit_identical():
    y = _ar1(3)
    f = fit(y, 1)
    pool = prepare_bootstrap_residuals(f)
    a = bootstrap_paths(y, f, pool, 1, np.random.default_rng(42))
    b = bootstrap_paths(y, f, pool, 1, np.random.default_rng(42))
    assert a.phis.tobytes() == b.phis.tobytes() and a.phi0.tobytes() == b.phi0.tobytes()


def test_bootstrap_phi_spread_matches_asymptotic_se():
    y = _ar1(4)
    f = fit_ols(y, 1)
    params = bootstrap_paths(y, f, prepare_bootstrap_residuals(f), 1999, np.random.default_rng(5))
    phi_hat = f.model.phis[0, 0, 0]
    star = params.phis[:, 0, 0, 0]
    se = math.sqrt((1 - phi_hat**2) / y.length_t)
    assert abs(star.mean() - phi_hat) < 0.5 * se
    assert abs(star.std() / se - 1) < 0.3


def test_one_step_draw_variance():
    y = _ar1(6)
    f = fit_ols(y, 1)
    fc = bootstrap_forecast(y, f, 4000, 1, np.random.default_rng(7), config=FitConfig(method="ols_cml"))
    assert fc.draws[:, 0, 0].var() == pytest.approx(f.model.sigma_eps[0, 0], rel=0.15)


def test_var_draw_shape():
    y = simulate(VAR2, 100, InnovationSource(seed=8))
    fc = bootstrap_forecast(y, fit(y, 2), 50, 10, np.random.default_rng(9))
    assert fc.draws.shape == (50, 10, 2)
    assert interval_from_draws(fc).kind == "bonferroni"


def test_quantile_rule_example():
    draws = np.arange(1.0, 101.0).reshape(100, 1, 1)
    iv = interval_from_draws(BootstrapForecast(draws, 0.05, "x"))
    assert iv.lower[0, 0] == pytest.approx(3.475, abs=1e-12)
    assert iv.upper[0, 0] == pytest.approx(97.525, abs=1e-12)


def test_constant_draws_degenerate():
    iv = interval_from_draws(BootstrapForecast(np.full((30, 2, 1), 2.5), 0.05, "x"))
    np.testing.assert_array_equal(iv.lower, 2.5)
    np.testing.assert_array_equal(iv.upper, 2.5)


def test_bonferroni_levels():
    assert quantile_levels(0.05, 2) == pytest.approx((0.0125, 0.9875))
    assert quantile_levels(0.05, 1) == pytest.approx((0.025, 0.975))


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=60), st.floats(0, 1))
def test_quantile_matches_rank_rule(x, tau):
    assert empirical_quantile(np.array(x), tau) == pytest.approx(_rank_rule(x, tau), rel=1e-12, abs=1e-9)


def test_normal_interval_examples():
    model = ArModelSpec.univariate(0, [0.0], 1.0)
    iv = normal_quantile_interval(np.zeros((3, 1)), model, 3)
    np.testing.assert_allclose(iv.lower[:, 0], -Z975, rtol=1e-15)
    np.testing.assert_allclose(iv.upper[:, 0], Z975, rtol=1e-15)
    assert Z975 == pytest.approx(1.96, abs=5e-5)
    m9 = ArModelSpec.univariate(0, [0.9], 1.0)
    half = normal_quantile_interval(np.zeros((10, 1)), m9, 10).widths[9, 0] / 2
    assert half == pytest.approx(Z975 * math.sqrt(sum(0.81**k for k in range(10))), rel=1e-12)


def test_normal_interval_bonferroni_z():
    iv = normal_quantile_interval(np.zeros((1, 2)), VAR2, 1)
    np.testing.assert_allclose(iv.upper[0], NormalDist().inv_cdf(1 - 0.05 / 4), rtol=1e-15)


def test_intervals_ordered_and_nested_in_gamma():
    y = _ar1(10)
    f = fit(y, 1)
    draws = bootstrap_forecast(y, f, 199, 5, np.random.default_rng(11)).draws
    prev = None
    for g in (0.2, 0.1, 0.05, 0.01):
        iv = interval_from_draws(BootstrapForecast(draws, g, "x"))
        assert np.all(iv.lower <= iv.upper)
        if prev is not None:
            assert np.all(iv.lower <= prev.lower) and np.all(iv.upper >= prev.upper)
        prev = iv


def test_end_to_end_determinism():
    y = simulate(VAR2, 80, InnovationSource(seed=12))
    f = fit(y, 2)
    a = interval_from_draws(bootstrap_forecast(y, f, 99, 4, 123))
    b = interval_from_draws(bootstrap_forecast(y, f, 99, 4, 123))
    assert a.lower.tobytes() == b.lower.tobytes() and a.upper.tobytes() == b.upper.tobytes()


def test_one_step_bootstrap_close_to_normal():
    # single samples inherit residual skew, so compare the typical discrepancy
    for method in ("ols_cml", "weighted_likelihood"):
        cfg = FitConfig(method=method)
        rel = []
        for rep in range(25):
            y = simulate(ArModelSpec.univariate(0, [0.5]), 100, InnovationSource(seed=1000 + rep))
            f = fit(y, 1, cfg)
            fc = bootstrap_forecast(y, f, 1999, 1, np.random.default_rng(rep), config=cfg)
            boot = interval_from_draws(fc)
            norm = normal_quantile_interval(fc.point, f.model, 1)
            for b, n in ((boot.lower[0, 0], norm.lower[0, 0]), (boot.upper[0, 0], norm.upper[0, 0])):
                rel.append(abs(b - n) / abs(n))
        assert np.mean(rel) <= 0.10


def test_explosive_replicates_excluded_and_counted():
    y = _ar1(15, t=400)
    f = fit_ols(y, 1)
    f = replace(f, model=ArModelSpec.univariate(0.0, [50.0], 1.0))
    params = bootstrap_paths(y, f, prepare_bootstrap_residuals(f), 5, np.random.default_rng(0))
    assert params.n_excluded == 5 and params.n_redrawn == 5 and params.b_reps == 0
    with pytest.raises(ValueError, match="survived"):
        bootstrap_future_draws(y, f, params, prepare_bootstrap_residuals(f), 3, np.random.default_rng(0))


def test_forecast_validation():
    with pytest.raises(ValueError):
        BootstrapForecast(np.zeros((2, 1, 1)), 0.5, "x")
    with pytest.raises(ValueError):
        bootstrap_paths(_ar1(1), fit_ols(_ar1(1), 1), np.zeros((0, 1)), 2, 0)
