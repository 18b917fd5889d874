import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from wlboot.series import SeriesError, SeriesMatrix, TransformSpec, apply_transform, load_csv, save_csv


def _write(tmp_path, text, name="data.csv"):
    path = tmp_path / name
    path.write_text(text)
    return path


def test_load_plain_numeric(tmp_path):
    path = _write(tmp_path, "1,2\n3,4\n5,6\n")
    s = load_csv(path, has_header=False)
    assert (s.length_t, s.dim_n) == (3, 2)
    assert s.labels == ("c1", "c2")
    np.testing.assert_array_equal(s.values, [[1, 2], [3, 4], [5, 6]])


def test_header_labels(tmp_path):
    s = load_csv(_write(tmp_path, "gdp,ir\n1.5,2\n3,4\n"))
    assert s.labels == ("gdp", "ir")


def test_non_numeric_cell_reports_position(tmp_path):
    path = _write(tmp_path, "a,b\n1,2\nabc,4\n")
    with pytest.raises(SeriesError, match=r"row 2, column 1"):
        load_csv(path)


@pytest.mark.parametrize(
    "text, match",
    [("a,b\n1,2\n3\n", "ragged"), ("a,b\n", "empty"), ("a,b\n1,\n", "missing value"), ("a\nnan\n", "non-finite")],
)
def test_malformed_files(tmp_path, text, match):
    with pytest.raises(SeriesError, match=match):
        load_csv(_write(tmp_path, text))


def test_missing_file(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_csv(tmp_path / "absent.csv")


def test_time_column_dropped_after_check(tmp_path):
    s = load_csv(_write(tmp_path, "date,x\n2017-01,1\n2017-02,2\n2017-03,4\n"), time_column=True)
    assert s.labels == ("x",)
    np.testing.assert_array_equal(s.values[:, 0], [1, 2, 4])
    with pytest.raises(SeriesError, match="not increasing"):
        load_csv(_write(tmp_path, "t,x\n2,1\n1,2\n", "bad.csv"), time_column=True)


def test_save_load_round_trip(tmp_path):
    rng = np.random.default_rng(1)
    s = SeriesMatrix(rng.normal(size=(7, 3)), ("a", "b", "c"))
    save_csv(s, tmp_path / "out.csv")
    back = load_csv(tmp_path / "out.csv")
    np.testing.assert_array_equal(back.values, s.values)
    assert back.labels == s.labels


def test_series_invariants():
    with pytest.raises(SeriesError):
        SeriesMatrix(np.array([[1.0, np.inf]]))
    with pytest.raises(SeriesError):
        SeriesMatrix(np.ones((3, 2)), ("only_one",))
    s = SeriesMatrix([1.0, 2.0, 3.0])
    assert (s.length_t, s.dim_n) == (3, 1)
    with pytest.raises(ValueError):
        s.values[0, 0] = 5.0


def test_log_return_pct_of_e():
    out = apply_transform(SeriesMatrix([1.0, math.e]), TransformSpec("log_return_pct"))
    assert out.values[0, 0] == pytest.approx(100.0, rel=1e-15)


def test_log_return_constant_series():
    out = apply_transform(SeriesMatrix([2.0, 2.0, 2.0]), TransformSpec("log_return"))
    np.testing.assert_array_equal(out.values[:, 0], [0.0, 0.0])


def test_transform_errors():
    with pytest.raises(SeriesError, match="non-positive"):
        apply_transform(SeriesMatrix([1.0, 0.0, 2.0]), TransformSpec("log_return"))
    with pytest.raises(SeriesError, match="at least 2"):
        apply_transform(SeriesMatrix([1.0]), TransformSpec("log_return_pct"))
    with pytest.raises(ValueError):
        TransformSpec("sqrt")


def test_235_levels_give_234_returns():
    levels = np.exp(np.cumsum(np.random.default_rng(0).normal(scale=0.01, size=235)))
    assert apply_transform(SeriesMatrix(levels), TransformSpec("log_return_pct")).length_t == 234


_levels = arrays(np.float64, st.tuples(st.integers(2, 40), st.integers(1, 3)), elements=st.floats(0.01, 1e4))


@settings(max_examples=60, deadline=None)
@given(_levels)
def test_transform_properties(y):
    s = SeriesMatrix(y)
    assert apply_transform(s, TransformSpec("none")).values.tobytes() == s.values.tobytes()
    pct = apply_transform(s, TransformSpec("log_return_pct"))
    assert pct.length_t == s.length_t - 1
    r = apply_transform(s, TransformSpec("log_return")).values
    rebuilt = y[0] * np.exp(np.cumsum(r, axis=0))
    np.testing.assert_allclose(rebuilt, y[1:], rtol=1e-12)
