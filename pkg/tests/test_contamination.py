import numpy as np
import pytest
from conftest import VAR2
from hypothesis import given, settings
from hypothesis import strategies as st

from wlboot.contamination import OutlierPlan, contaminate_ao, contaminate_io, draw_positions, n_outliers
from wlboot.process import ArModelSpec, generate_path, ma_coefficients
from wlboot.series import SeriesMatrix


def test_ao_shift_at_position():
    out = contaminate_ao(SeriesMatrix(np.zeros(10)), OutlierPlan("AO", 5.0, (3,)))
    expected = np.zeros(10)
    expected[3] = 5.0
    np.testing.assert_array_equal(out.values[:, 0], expected)


def test_ao_zero_magnitude_is_identity():
    y = SeriesMatrix(np.random.default_rng(0).normal(size=(12, 2)))
    assert contaminate_ao(y, OutlierPlan("AO", 0.0, (1, 5))).values.tobytes() == y.values.tobytes()


def test_ao_var_both_components():
    y = SeriesMatrix(np.random.default_rng(1).normal(size=(8, 2)))
    out = contaminate_ao(y, OutlierPlan("AO", (5.0, 5.0), (4,)))
    diff = out.values - y.values
    np.testing.assert_array_equal(diff[4], [5.0, 5.0])
    assert np.count_nonzero(diff) == 2


@settings(max_examples=50, deadline=None)
@given(st.integers(2, 30), st.integers(1, 3), st.data())
def test_ao_changes_exactly_masked_entries(t, n, data):
    k = data.draw(st.integers(0, t))
    positions = tuple(sorted(data.draw(st.permutations(range(t)))[:k]))
    mask = tuple(sorted(set(data.draw(st.lists(st.integers(0, n - 1), min_size=1, max_size=n)))))
    y = SeriesMatrix(np.zeros((t, n)))
    out = contaminate_ao(y, OutlierPlan("AO", 2.0, positions, mask))
    assert np.count_nonzero(out.values) == len(positions) * len(mask)


def test_position_out_of_range():
    with pytest.raises(IndexError):
        contaminate_ao(SeriesMatrix(np.zeros(5)), OutlierPlan("AO", 1.0, (5,)))
    with pytest.raises(IndexError):
        contaminate_io(ArModelSpec.univariate(0, [0.5]), np.zeros((5, 1)), OutlierPlan("IO", 1.0, (-1,)))


def test_plan_validation():
    with pytest.raises(ValueError):
        OutlierPlan("LS", 1.0)
    with pytest.raises(ValueError):
        OutlierPlan("AO", 1.0, (0,), component_mask=())
    with pytest.raises(ValueError):
        OutlierPlan("AO", 1.0, target="past")


def test_io_without_dynamics_shifts_single_point():
    model = ArModelSpec.univariate(0, [0.0])
    eps = np.random.default_rng(2).normal(size=(20, 1))
    diff = contaminate_io(model, eps, OutlierPlan("IO", 3.0, (7,))).values - generate_path(model, eps)
    expected = np.zeros((20, 1))
    expected[7] = 3.0
    np.testing.assert_allclose(diff, expected, atol=1e-14)


def test_io_propagates_geometrically():
    model = ArModelSpec.univariate(0, [0.5])
    eps = np.random.default_rng(3).normal(size=(20, 1))
    diff = contaminate_io(model, eps, OutlierPlan("IO", 3.0, (5,))).values[:, 0] - generate_path(model, eps)[:, 0]
    np.testing.assert_allclose(diff[5:8], [3.0, 1.5, 0.75], atol=1e-12)
    assert np.all(diff[:5] == 0)


def test_io_var_first_component_only():
    eps = np.zeros((10, 2))
    out = contaminate_io(VAR2, eps, OutlierPlan("IO", 5.0, (2,), component_mask=(0,))).values
    np.testing.assert_allclose(out[2], [5.0, 0.0])
    np.testing.assert_allclose(out[3], VAR2.phis[0] @ [5.0, 0.0], atol=1e-14)


def test_io_burn_in_offsets_positions():
    model = ArModelSpec.univariate(0, [0.5])
    eps = np.random.default_rng(4).normal(size=(30, 1))
    out = contaminate_io(model, eps, OutlierPlan("IO", 3.0, (0,)), burn_in=10).values
    clean = generate_path(model, eps)[10:]
    assert out[0, 0] - clean[0, 0] == pytest.approx(3.0)


def test_io_difference_is_impulse_response():
    model = VAR2
    eps = np.random.default_rng(5).normal(size=(40, 2))
    plan = OutlierPlan("IO", (5.0, -2.0), (10, 13))
    diff = contaminate_io(model, eps, plan).values - generate_path(model, eps)
    psis = ma_coefficients(model, 6)
    delta = plan.shift(2)
    for t in range(10, 16):
        expect = sum(psis[t - s] @ delta for s in plan.positions if 0 <= t - s <= 5)
        np.testing.assert_allclose(diff[t], expect, atol=1e-10)


def test_zero_io_is_identity():
    eps = np.random.default_rng(6).normal(size=(15, 2))
    out = contaminate_io(VAR2, eps, OutlierPlan("IO", 0.0, (3, 9)))
    np.testing.assert_array_equal(out.values, generate_path(VAR2, eps))


def test_draw_positions_counts():
    rng = np.random.default_rng(0)
    assert len(draw_positions(100, rng, rate=0.05)) == 5
    assert draw_positions(100, rng, rate=0.0) == ()
    (pos,) = draw_positions(10, rng, count=1)
    assert 0 <= pos < 10
    with pytest.raises(ValueError):
        draw_positions(3, rng, count=4)
    with pytest.raises(ValueError):
        draw_positions(3, rng)


def test_round_half_up():
    assert n_outliers(250, 0.01) == 3
    assert n_outliers(150, 0.01) == 2
    assert n_outliers(100, 0.1) == 10


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 200), st.floats(0, 1), st.integers(0, 2**32 - 1))
def test_draw_positions_distinct_in_range(span, rate, seed):
    pos = draw_positions(span, np.random.default_rng(seed), rate=rate)
    assert len(set(pos)) == len(pos) == n_outliers(span, rate)
    assert all(0 <= s < span for s in pos)
    assert list(pos) == sorted(pos)
