"""Tests for dataset construction, CSV loading, and validation."""

import numpy as np
import pytest

from coat.data import (
    CATEGORICAL,
    CONTINUOUS,
    Column,
    CsvSchema,
    CsvParseError,
    Dataset,
    MethodPair,
    ValidationError,
    derive_differences,
    load_csv,
    validate_dataset,
)


class TestDeriveDifferences:
    def test_identical_measurements(self):
        y, m = derive_differences([(3.0, 3.0)])
        assert y.tolist() == [0.0]
        assert m.tolist() == [3.0]

    def test_direct_arithmetic(self):
        y, m = derive_differences([(5, 3), (2, 4)])
        assert y.tolist() == [2.0, -2.0]
        assert m.tolist() == [4.0, 3.0]

    def test_missing_value_rejected_with_row(self):
        with pytest.raises(ValidationError, match="row 1"):
            derive_differences([(1.0, float("nan"))])

    def test_method_pair_objects(self):
        y, m = derive_differences([MethodPair(10.0, 4.0)])
        assert y.tolist() == [6.0]

    def test_empty_rejected(self):
        with pytest.raises(ValidationError):
            derive_differences([])

    def test_round_trip(self):
        rng = np.random.default_rng(7)
        m1 = rng.normal(100, 20, 50)
        m2 = rng.normal(100, 20, 50)
        y, m = derive_differences(list(zip(m1, m2)))
        assert np.allclose(m + y / 2, m1, atol=1e-12)
        assert np.allclose(m - y / 2, m2, atol=1e-12)


class TestValidateDataset:
    def test_valid(self):
        d = Dataset(
            y=np.arange(10.0),
            covariates=(Column("age", CONTINUOUS, np.arange(10.0)),),
        )
        validate_dataset(d)

    def test_length_mismatch(self):
        with pytest.raises(ValidationError, match="length"):
            Dataset(
                y=np.arange(10.0),
                covariates=(Column("age", CONTINUOUS, np.arange(9.0)),),
            )

    def test_duplicate_names(self):
        cols = (
            Column("age", CONTINUOUS, np.arange(4.0)),
            Column("age", CONTINUOUS, np.arange(4.0)),
        )
        with pytest.raises(ValidationError, match="duplicate"):
            Dataset(y=np.arange(4.0), covariates=cols)

    def test_errors_aggregate(self):
        try:
            Dataset(
                y=np.array([1.0, np.nan]),
                covariates=(Column("a", CONTINUOUS, np.zeros(3)),),
            )
        except ValidationError as exc:
            assert len(exc.messages) == 2
        else:
            pytest.fail("expected ValidationError")

    def test_categorical_bounds(self):
        with pytest.raises(ValidationError):
            Column("g", CATEGORICAL, np.array([0, 1]), levels=("a", "b"))

    def test_mean_covariate_appended(self):
        d = Dataset(
            y=np.arange(4.0),
            mean_values=np.arange(4.0) + 10,
            include_mean_as_covariate=True,
        )
        cols = d.model_covariates()
        assert [c.name for c in cols] == ["mean"]
        assert cols[0].values.tolist() == [10.0, 11.0, 12.0, 13.0]


def write(tmp_path, text):
    path = tmp_path / "data.csv"
    path.write_text(text, encoding="utf-8")
    return path


class TestLoadCsv:
    def test_basic_structure(self, tmp_path):
        path = write(tmp_path, "m1,m2,age\n1,2,30\n2,2,40\n5,1,50\n")
        schema = CsvSchema(m1="m1", m2="m2", covariates=(("age", CONTINUOUS),))
        dataset, report = load_csv(path, schema)
        assert dataset.n == 3
        assert len(dataset.covariates) == 1
        assert report.n_dropped == 0
        assert dataset.y.tolist() == [-1.0, 0.0, 4.0]
        assert dataset.mean_values.tolist() == [1.5, 2.0, 3.0]

    def test_missing_row_dropped_and_reported(self, tmp_path):
        path = write(tmp_path, "m1,m2,age\n1,2,30\n2,2,\n5,1,50\n")
        schema = CsvSchema(m1="m1", m2="m2", covariates=(("age", CONTINUOUS),))
        dataset, report = load_csv(path, schema)
        assert dataset.n == 2
        assert report.n_dropped == 1
        assert report.n_raw == report.n_kept + report.n_dropped
        assert "1 row dropped" in report.summary()

    def test_first_appearance_level_order(self, tmp_path):
        path = write(tmp_path, "d,g\n1,b\n2,a\n3,b\n")
        schema = CsvSchema(diff="d", covariates=(("g", CATEGORICAL),))
        dataset, _ = load_csv(path, schema)
        col = dataset.covariates[0]
        assert col.levels == ("b", "a")
        assert col.values.tolist() == [1, 2, 1]

    def test_unparseable_cell_names_row_and_column(self, tmp_path):
        path = write(tmp_path, "m1,m2\n1,2\nx,3\n")
        with pytest.raises(CsvParseError, match="row 2"):
            load_csv(path, CsvSchema(m1="m1", m2="m2"))

    def test_empty_after_dropping(self, tmp_path):
        path = write(tmp_path, "m1,m2\n,\n,\n")
        with pytest.raises(ValidationError, match="no complete rows"):
            load_csv(path, CsvSchema(m1="m1", m2="m2"))

    def test_deterministic(self, tmp_path):
        path = write(tmp_path, "m1,m2,g\n1,2,u\n4,1,v\n0,0,u\n")
        schema = CsvSchema(m1="m1", m2="m2", covariates=(("g", CATEGORICAL),))
        d1, _ = load_csv(path, schema)
        d2, _ = load_csv(path, schema)
        assert np.array_equal(d1.y, d2.y)
        assert np.array_equal(d1.covariates[0].values, d2.covariates[0].values)
        assert d1.covariates[0].levels == d2.covariates[0].levels

    def test_missing_column_reported(self, tmp_path):
        path = write(tmp_path, "m1,m2\n1,2\n")
        with pytest.raises(ValidationError, match="not found"):
            load_csv(path, CsvSchema(m1="m1", m2="nope"))

    def test_schema_requires_pair_or_diff(self):
        with pytest.raises(ValidationError):
            CsvSchema(m1="a")
        with pytest.raises(ValidationError):
            CsvSchema(m1="a", m2="b", diff="d")
