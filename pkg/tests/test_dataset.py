import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from meltcause.dataset import (
    FOUNDRY_SCHEMA,
    TimeSeriesDataset,
    VariableMeta,
    aggregate_sensor_mean,
    drop_sparse_variables,
    load_csv,
    standardize,
    write_csv,
)
from meltcause.errors import DataError, EmptyDatasetError, SchemaMismatchError

SCHEMA3 = (VariableMeta(1, "a"), VariableMeta(2, "b"), VariableMeta(3, "c"))


def _write(path, text):
    path.write_text(text)
    return path


def test_load_masks_single_empty_cell(tmp_path):
    p = _write(tmp_path / "d.csv", "a,b,c\n1,2,3\n4,,6\n7,8,9\n")
    ds = load_csv(p, SCHEMA3)
    assert ds.T == 3 and ds.N == 3
    assert (~ds.mask).sum() == 1
    assert not ds.mask[1, 1]
    assert np.isnan(ds.values[1, 1])
    np.testing.assert_array_equal(ds.values[:, 0], [1, 4, 7])


def test_non_numeric_cell_is_masked(tmp_path):
    p = _write(tmp_path / "d.csv", "a,b,c\n1,x,3\n")
    assert (~load_csv(p, SCHEMA3).mask).sum() == 1


def test_header_missing_schema_variable(tmp_path):
    p = _write(tmp_path / "d.csv", "a,b\n1,2\n")
    with pytest.raises(SchemaMismatchError):
        load_csv(p, SCHEMA3)


def test_missing_file(tmp_path):
    with pytest.raises(DataError):
        load_csv(tmp_path / "nope.csv", SCHEMA3)


def test_non_monotonic_timestamps(tmp_path):
    p = _write(tmp_path / "d.csv", "timestamp,a,b,c\n0,1,2,3\n10,1,2,3\n5,1,2,3\n")
    with pytest.raises(DataError):
        load_csv(p, SCHEMA3)


def test_iso_timestamps(tmp_path):
    p = _write(tmp_path / "d.csv", "timestamp,a,b,c\n2024-01-01T00:00:00,1,2,3\n2024-01-01T00:00:10,1,2,3\n")
    ds = load_csv(p, SCHEMA3)
    assert ds.timestamps[1] - ds.timestamps[0] == 10


def test_foundry_schema_indices(tmp_path):
    names = [v.name for v in FOUNDRY_SCHEMA]
    rows = "\n".join(",".join(str(float(r * 12 + c)) for c in range(12)) for r in range(3))
    p = _write(tmp_path / "f.csv", ",".join(names) + "\n" + rows + "\n")
    ds = load_csv(p, FOUNDRY_SCHEMA)
    assert ds.N == 12
    assert [v.index for v in ds.variables] == list(range(1, 13))
    assert ds.variables[2].name == "Temperature" and ds.variables[10].index == 11
    assert ds.sample_interval_s == 10


def test_dataset_invariants():
    with pytest.raises(DataError):
        TimeSeriesDataset(np.zeros((3, 2)), np.ones((3, 3), bool), SCHEMA3[:2])
    with pytest.raises(DataError):
        TimeSeriesDataset(np.zeros((3, 2)), np.ones((3, 2), bool), SCHEMA3[:2], sample_interval_s=0)
    with pytest.raises(DataError):
        TimeSeriesDataset(np.zeros((3, 2)), np.ones((3, 2), bool), SCHEMA3)
    with pytest.raises(ValueError):
        VariableMeta(1, "")


def test_round_trip_bit_identical(tmp_path):
    rng = np.random.default_rng(3)
    vals = rng.standard_normal((50, 3)) * 10.0 ** rng.integers(-8, 8, (50, 3))
    mask = rng.random((50, 3)) > 0.1
    ds = TimeSeriesDataset(np.where(mask, vals, np.nan), mask, SCHEMA3)
    write_csv(ds, tmp_path / "r.csv")
    back = load_csv(tmp_path / "r.csv", SCHEMA3)
    np.testing.assert_array_equal(back.mask, ds.mask)
    assert np.array_equal(back.values[mask], ds.values[mask])


def _ds(values):
    values = np.asarray(values, float)
    return TimeSeriesDataset(values, np.isfinite(values), SCHEMA3[: values.shape[1]])


def test_drop_sparse_removes_state_like_column():
    T = 1000
    vals = np.ones((T, 2))
    vals[:, 1] = np.nan
    vals[:5, 1] = 1.0  # 99.5% missing
    out, rep = drop_sparse_variables(_ds(vals), 0.99)
    assert out.names == ["a"]
    assert rep.variables_dropped[0][0] == "b" and "missing" in rep.variables_dropped[0][1]


def test_drop_sparse_fully_observed_unchanged():
    ds = _ds(np.arange(12.0).reshape(4, 3))
    out, rep = drop_sparse_variables(ds)
    assert out.names == ds.names and rep.variables_dropped == []


def test_drop_sparse_everything_gone():
    vals = np.ones((4, 2))
    vals[0, 0] = vals[1, 1] = np.nan
    with pytest.raises(EmptyDatasetError):
        drop_sparse_variables(_ds(vals), 0.0)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**31 - 1), st.floats(0, 1), st.floats(0, 1))
def test_drop_sparse_monotone(seed, t1, t2):
    lo, hi = sorted((t1, t2))
    rng = np.random.default_rng(seed)
    vals = rng.standard_normal((20, 3))
    vals[rng.random((20, 3)) < rng.random(3)] = np.nan
    vals[0] = 1.0  # no column entirely missing
    ds = _ds(vals)

    def kept(threshold):
        try:
            return set(drop_sparse_variables(ds, threshold)[0].names)
        except EmptyDatasetError:
            return set()

    assert kept(lo) <= kept(hi)


def test_standardize_constant_column_dropped():
    out, rep = standardize(_ds([[1.0, 5.0], [2.0, 5.0], [3.0, 5.0]]))
    assert out.names == ["a"]
    assert rep.variables_dropped == [("b", "zero-variance")]


def test_standardize_two_points():
    out, _ = standardize(_ds([[0.0], [2.0]]))
    np.testing.assert_allclose(out.values[:, 0], [-1.0, 1.0])


def test_standardize_idempotent_and_preserves_mask():
    rng = np.random.default_rng(0)
    vals = rng.standard_normal((100, 3)) * 4 + 2
    vals[rng.random((100, 3)) < 0.2] = np.nan
    once, _ = standardize(_ds(vals))
    twice, _ = standardize(once)
    np.testing.assert_array_equal(once.mask, _ds(vals).mask)
    np.testing.assert_allclose(twice.values[once.mask], once.values[once.mask], atol=1e-12)
    obs = once.values[:, 0][once.mask[:, 0]]
    assert abs(obs.mean()) < 1e-12 and abs(obs.var() - 1) < 1e-12


def test_standardization_report_json():
    _, rep = standardize(_ds([[0.0, 1.0], [2.0, 1.0]]))
    d = json.loads(rep.to_json())
    assert d["means"]["a"] == 1.0 and d["variables_dropped"][0]["reason"] == "zero-variance"


def test_aggregate_sensor_mean():
    ds = _ds([[1.0, 3.0, 0.0], [np.nan, 5.0, 0.0]])
    out = aggregate_sensor_mean(ds, ["a", "b"], VariableMeta(4, "ab_mean"))
    np.testing.assert_allclose(out.values[:, -1], [2.0, 5.0])
