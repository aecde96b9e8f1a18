import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pmaxtest import ColumnSchema, Dataset, load_csv, save_csv, validate
from pmaxtest.dataset import ParseError, SchemaError, ValidationError, schema_from_header


def _write(path, text):
    path.write_text(text, encoding="utf-8")
    return path


def test_three_row_file(tmp_path):
    f = _write(tmp_path / "d.csv", "y,d1,t1,t2\n1,1,0.5,2\n2,1,1.5,-1\n3,1,2.5,4\n")
    ds = load_csv(f, {"response": "y", "nuisance": ["d1"], "test": ["t1", "t2"]})
    assert (ds.n, ds.k_delta, ds.k_theta) == (3, 1, 2)
    np.testing.assert_array_equal(ds.y, [1, 2, 3])
    np.testing.assert_array_equal(ds.x_theta[:, 1], [2, -1, 4])
    assert ds.test_names == ("t1", "t2")
    assert ds.x_theta.flags.f_contiguous
    assert not ds.y.flags.writeable


@pytest.mark.parametrize("cell", ["nan", "NaN", "inf", "-inf", "abc", ""])
def test_bad_cell_reports_position(tmp_path, cell):
    f = _write(tmp_path / "d.csv", f"y,t1,t2\n1,2,3\n4,{cell},6\n")
    with pytest.raises(ParseError) as e:
        load_csv(f, ColumnSchema("y", (), ("t1", "t2")))
    assert e.value.row == 2
    assert e.value.column == "t1"
    assert "t1" in str(e.value)


def test_missing_column_is_schema_error(tmp_path):
    f = _write(tmp_path / "d.csv", "y,t1\n1,2\n3,4\n")
    with pytest.raises(SchemaError, match="t9"):
        load_csv(f, ColumnSchema("y", (), ("t9",)))


def test_duplicate_role_is_schema_error(tmp_path):
    f = _write(tmp_path / "d.csv", "y,t1\n1,2\n3,4\n")
    with pytest.raises(SchemaError):
        load_csv(f, ColumnSchema("y", ("t1",), ("t1",)))


def test_load_rejects_zero_column(tmp_path):
    f = _write(tmp_path / "d.csv", "y,t1,t2\n1,0,3\n4,0,6\n5,0,1\n")
    with pytest.raises(ValidationError) as e:
        load_csv(f, ColumnSchema("y", (), ("t1", "t2")))
    assert [v.invariant for v in e.value.violations] == ["nonzero_column"]


def test_wide_round_trip(tmp_path, rng):
    n, kt = 500, 5000
    names = tuple(f"gene_{j:04d}" for j in range(kt))
    ds = Dataset(rng.standard_normal(n), rng.standard_normal((n, 2)), rng.standard_normal((n, kt)),
                 ("a", "b"), names, "resp")
    schema = save_csv(ds, tmp_path / "wide.csv")
    back = load_csv(tmp_path / "wide.csv", schema)
    assert (back.n, back.k_theta) == (500, 5000)
    assert back.test_names == names
    assert back.nuisance_names == ("a", "b")
    np.testing.assert_array_equal(back.x_theta, ds.x_theta)
    np.testing.assert_array_equal(back.y, ds.y)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(-1e300, 1e300, allow_nan=False).filter(lambda v: v != 0), min_size=9, max_size=9))
def test_round_trip_identity(tmp_path_factory, vals):
    a = np.array(vals).reshape(3, 3)
    ds = Dataset(a[:, 0], a[:, 1:2], a[:, 2:])
    path = tmp_path_factory.mktemp("rt") / "x.csv"
    back = load_csv(path, save_csv(ds, path))
    np.testing.assert_array_equal(back.y, ds.y)
    np.testing.assert_array_equal(back.x_delta, ds.x_delta)
    np.testing.assert_array_equal(back.x_theta, ds.x_theta)


def test_schema_from_header_takes_remaining(tmp_path):
    f = _write(tmp_path / "d.csv", "y,c,t1,t2\n1,1,2,3\n")
    s = schema_from_header(f, "y", ["c"])
    assert s.test == ("t1", "t2")


def test_validate_zero_column_named():
    x = np.ones((5, 3))
    x[:, 1] = 0.0
    out = validate(Dataset(np.arange(5.0), None, x, test_names=("a", "b", "c")))
    assert len(out) == 1
    assert out[0].invariant == "nonzero_column"
    assert "'b'" in out[0].message


def test_validate_conforming(rng):
    assert validate(Dataset(rng.standard_normal(10), rng.standard_normal((10, 2)), rng.standard_normal((10, 4)))) == []


def test_validate_degrees_of_freedom(rng):
    out = validate(Dataset(rng.standard_normal(4), rng.standard_normal((4, 3)), rng.standard_normal((4, 2))))
    assert [v.invariant for v in out] == ["degrees_of_freedom"]
    ok = Dataset(rng.standard_normal(5), rng.standard_normal((5, 3)), rng.standard_normal((5, 2)))
    assert validate(ok) == []


def test_validate_non_finite_in_memory():
    y = np.array([1.0, np.nan, 3.0, 4.0])
    out = validate(Dataset(y, None, np.ones((4, 1))))
    assert out[0].invariant == "finite" and out[0].index == 1


def test_validate_is_pure(rng):
    x = rng.standard_normal((3, 2))
    x[:, 0] = 0
    ds = Dataset(rng.standard_normal(3), rng.standard_normal((3, 2)), x)
    first = validate(ds)
    assert validate(ds) == first
    assert validate(ds) == first


def test_mismatched_rows_rejected():
    from pmaxtest.dataset import DatasetError

    with pytest.raises(DatasetError):
        Dataset(np.zeros(3), None, np.ones((4, 1)))
