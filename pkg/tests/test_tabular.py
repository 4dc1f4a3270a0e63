import numpy as np
import pytest

from tabdistill.errors import DataError
from tabdistill.tabular import (
    Column,
    Dataset,
    FeatureEncoder,
    Schema,
    SplitSpec,
    apply_transform,
    ingest_csv,
    load_schema,
    remove_constant_columns,
    sample_rows,
    save_schema,
    split,
    write_csv,
)

from helpers import dataset_from_arrays


def _write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text)
    return p


class TestIngest:
    def test_three_row_float_file(self, tmp_path):
        p = _write(tmp_path, "a.csv", "f1,label\n1.5,0\n2.5,1\n3.0,1\n")
        ds = ingest_csv(p, "label")
        assert ds.n_rows == 3
        assert ds.n_features == 1
        assert ds.schema.column("f1").kind == "float"
        np.testing.assert_array_equal(ds.labels, [0, 1, 1])

    def test_categorical_inference(self, tmp_path):
        p = _write(tmp_path, "a.csv", "c,label\na,0\nb,1\na,1\n")
        ds = ingest_csv(p, "label")
        col = ds.schema.column("c")
        assert col.kind == "categorical"
        assert col.categories == ("a", "b")
        np.testing.assert_array_equal(ds.column_values("c"), [0, 1, 0])

    def test_bool_and_int_inference(self, tmp_path):
        p = _write(tmp_path, "a.csv", "b,i,label\ntrue,3,0\nfalse,-2,1\ntrue,7,0\n")
        ds = ingest_csv(p, "label")
        assert ds.schema.column("b").kind == "bool"
        assert ds.schema.column("i").kind == "int"

    def test_missing_label_column_reports_name(self, tmp_path):
        p = _write(tmp_path, "a.csv", "f1,y\n1,0\n")
        with pytest.raises(DataError, match="label"):
            ingest_csv(p, "label")

    def test_unparseable_cell_reports_row_and_column(self, tmp_path):
        hint = Schema((Column("f1", "int"), Column("label", "int")), "label")
        p = _write(tmp_path, "a.csv", "f1,label\n1,0\nxx,1\n")
        with pytest.raises(DataError, match="row 2.*'f1'"):
            ingest_csv(p, "label", schema_hint=hint)

    def test_empty_file(self, tmp_path):
        p = _write(tmp_path, "a.csv", "")
        with pytest.raises(DataError, match="empty"):
            ingest_csv(p, "label")

    def test_roundtrip_identity(self, tmp_path):
        p = _write(tmp_path, "a.csv",
                   "b,i,f,c,label\ntrue,3,1.25,x,0\nfalse,-2,0.5,y,1\ntrue,7,2.0,x,1\n")
        ds = ingest_csv(p, "label")
        out = tmp_path / "b.csv"
        write_csv(ds, out)
        ds2 = ingest_csv(out, "label")
        assert ds2.schema == ds.schema
        np.testing.assert_array_equal(ds2.labels, ds.labels)
        for a, b in zip(ds.feature_arrays, ds2.feature_arrays):
            np.testing.assert_array_equal(a, b)

    def test_schema_persistence_roundtrip(self, tmp_path):
        p = _write(tmp_path, "a.csv", "c,label\na,0\nb,1\n")
        ds = ingest_csv(p, "label")
        save_schema(ds.schema, tmp_path / "schema.json")
        assert load_schema(tmp_path / "schema.json") == ds.schema


class TestRemoveConstantColumns:
    def test_constant_column_removed(self):
        ds = dataset_from_arrays({"a": [5.0, 5.0, 5.0], "b": [1.0, 2.0, 3.0]},
                                 [0, 1, 0])
        out, removed = remove_constant_columns(ds)
        assert removed == ["a"]
        assert out.schema.feature_names == ("b",)

    def test_no_constants_is_identity(self):
        ds = dataset_from_arrays({"a": [1.0, 2.0, 3.0]}, [0, 1, 0])
        out, removed = remove_constant_columns(ds)
        assert removed == []
        assert out is ds

    def test_five_appended_all_one_columns(self):
        rng = np.random.default_rng(0)
        feats = {"x": rng.standard_normal(50)}
        for j in range(5):
            feats[f"one{j}"] = np.ones(50)
        ds = dataset_from_arrays(feats, rng.integers(0, 2, 50))
        out, removed = remove_constant_columns(ds)
        assert removed == [f"one{j}" for j in range(5)]
        assert out.schema.feature_names == ("x",)

    def test_idempotent(self):
        ds = dataset_from_arrays({"a": [5.0, 5.0], "b": [1.0, 2.0]}, [0, 1])
        once, _ = remove_constant_columns(ds)
        twice, removed = remove_constant_columns(once)
        assert removed == []
        assert twice.schema == once.schema


class TestTransforms:
    def test_standardize_hand_computed(self):
        ds = dataset_from_arrays({"a": [1.0, 2.0, 3.0]}, [0, 1, 0])
        out = apply_transform(ds, "standardize", fit_rows=ds.row_ids)
        # population std of {1,2,3} is sqrt(2/3)
        expected = (np.array([1.0, 2.0, 3.0]) - 2.0) / np.sqrt(2.0 / 3.0)
        np.testing.assert_allclose(out.column_values("a"), expected, atol=1e-6)
        np.testing.assert_allclose(out.column_values("a"),
                                   [-1.2247, 0.0, 1.2247], atol=1e-4)

    def test_standardize_constant_column_guard(self):
        ds = dataset_from_arrays({"a": [4.0, 4.0, 4.0]}, [0, 1, 0])
        out = apply_transform(ds, "standardize", fit_rows=ds.row_ids)
        np.testing.assert_array_equal(out.column_values("a"), [0.0, 0.0, 0.0])

    def test_quantile_midrank(self):
        ds = dataset_from_arrays({"a": [10.0, 20.0, 30.0]}, [0, 1, 0])
        out = apply_transform(ds, "quantile", fit_rows=ds.row_ids)
        np.testing.assert_allclose(out.column_values("a"), [0.25, 0.5, 0.75])

    def test_quantile_ties_share_midrank(self):
        ds = dataset_from_arrays({"a": [1.0, 1.0, 2.0, 3.0]}, [0, 1, 0, 1])
        out = apply_transform(ds, "quantile", fit_rows=ds.row_ids)
        vals = out.column_values("a")
        assert vals[0] == vals[1]
        np.testing.assert_allclose(vals, [1.5 / 5, 1.5 / 5, 3 / 5, 4 / 5])

    def test_fit_rows_only_drive_statistics(self):
        ds = dataset_from_arrays({"a": [0.0, 1.0, 100.0]}, [0, 1, 0])
        out = apply_transform(ds, "standardize", fit_rows=[0, 1])
        # mean 0.5, std 0.5 from the two fit rows
        np.testing.assert_allclose(out.column_values("a"), [-1.0, 1.0, 199.0])

    def test_standardize_preserves_order(self):
        rng = np.random.default_rng(3)
        vals = rng.standard_normal(60)
        ds = dataset_from_arrays({"a": vals}, rng.integers(0, 2, 60))
        out = apply_transform(ds, "standardize", fit_rows=ds.row_ids)
        assert (np.argsort(out.column_values("a")) == np.argsort(vals)).all()

    def test_empty_fit_rows(self):
        ds = dataset_from_arrays({"a": [1.0, 2.0]}, [0, 1])
        with pytest.raises(DataError):
            apply_transform(ds, "standardize", fit_rows=[])

    def test_int_column_becomes_float(self):
        ds = dataset_from_arrays({"i": np.array([1, 2, 3])}, [0, 1, 0])
        assert ds.schema.column("i").kind == "int"
        out = apply_transform(ds, "standardize", fit_rows=ds.row_ids)
        assert out.schema.column("i").kind == "float"

    def test_bool_and_categorical_untouched(self):
        ds = dataset_from_arrays({"b": np.array([True, False, True]),
                                  "x": [1.0, 2.0, 3.0]}, [0, 1, 0])
        out = apply_transform(ds, "quantile", fit_rows=ds.row_ids)
        np.testing.assert_array_equal(out.column_values("b"), [True, False, True])
        assert out.schema.column("b").kind == "bool"


class TestSplit:
    def test_60_20_on_ten_rows(self):
        ds = dataset_from_arrays({"a": np.arange(10.0)}, [0, 1] * 5)
        tr, va, te = split(ds, SplitSpec(0.6, 0.2, seed=1))
        assert (tr.n_rows, va.n_rows, te.n_rows) == (6, 2, 2)

    def test_same_seed_identical(self):
        ds = dataset_from_arrays({"a": np.arange(100.0)},
                                 np.tile([0, 1], 50))
        a = split(ds, SplitSpec(0.6, 0.2, seed=5))
        b = split(ds, SplitSpec(0.6, 0.2, seed=5))
        for x, y in zip(a, b):
            np.testing.assert_array_equal(x.row_ids, y.row_ids)

    def test_partition_exact_and_disjoint(self):
        rng = np.random.default_rng(0)
        ds = dataset_from_arrays({"a": rng.standard_normal(53)},
                                 rng.integers(0, 2, 53))
        tr, va, te = split(ds, SplitSpec(0.5, 0.25, seed=9))
        all_ids = np.concatenate([tr.row_ids, va.row_ids, te.row_ids])
        assert len(all_ids) == 53
        assert set(all_ids) == set(ds.row_ids)

    def test_empty_partition_rejected(self):
        ds = dataset_from_arrays({"a": [1.0, 2.0, 3.0]}, [0, 1, 0])
        with pytest.raises(DataError, match="empty"):
            split(ds, SplitSpec(0.9, 0.05, seed=0))


class TestSampleRows:
    def test_full_sample_is_identity_on_ids(self):
        ds = dataset_from_arrays({"a": np.arange(7.0)}, [0, 1, 0, 1, 0, 1, 0])
        out = sample_rows(ds, 7, seed=3)
        assert set(out.row_ids) == set(ds.row_ids)

    def test_single_row_comes_from_original(self):
        ds = dataset_from_arrays({"a": np.arange(7.0)}, [0, 1, 0, 1, 0, 1, 0])
        out = sample_rows(ds, 1, seed=4)
        assert out.n_rows == 1
        assert out.row_ids[0] in ds.row_ids

    def test_deterministic_per_seed(self):
        ds = dataset_from_arrays({"a": np.arange(50.0)}, np.tile([0, 1], 25))
        a = sample_rows(ds, 20, seed=8)
        b = sample_rows(ds, 20, seed=8)
        np.testing.assert_array_equal(a.row_ids, b.row_ids)

    def test_out_of_range(self):
        ds = dataset_from_arrays({"a": [1.0, 2.0]}, [0, 1])
        with pytest.raises(DataError):
            sample_rows(ds, 3, seed=0)


class TestFeatureEncoder:
    def test_one_hot_layout_with_other_bucket(self, tmp_path):
        p = tmp_path / "a.csv"
        p.write_text("c,label\nred,0\nblue,1\nred,1\n")
        ds = ingest_csv(p, "label")
        enc = FeatureEncoder.fit(ds)
        x = enc.transform(ds)
        assert x.shape == (3, 3)  # red, blue, <other>
        np.testing.assert_array_equal(x[:, 2], [0.0, 0.0, 0.0])
        assert x[0].tolist() == [1.0, 0.0, 0.0]

    def test_cardinality_cap(self):
        rng = np.random.default_rng(0)
        cats = tuple(f"v{i}" for i in range(80))
        codes = rng.integers(0, 80, size=500)
        schema = Schema((Column("c", "categorical", cats), Column("label", "int")),
                        "label")
        ds = Dataset(schema, (codes.astype(np.int64),),
                     rng.integers(0, 2, 500).astype(np.int64), np.arange(500))
        enc = FeatureEncoder.fit(ds)
        x = enc.transform(ds)
        assert x.shape[1] == 65  # 64 kept + other
        assert (x.sum(axis=1) == 1.0).all()
