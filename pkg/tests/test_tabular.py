"""Columnar tables: schema validation, CSV ingestion, statistics."""

import json

import numpy as np
import pytest

from creditaudit.errors import DataError, SchemaError
from creditaudit.tabular import (
    Column,
    ColumnKind,
    ColumnSpec,
    DataTable,
    MissingPolicy,
    Schema,
    group_counts,
    group_mean,
    histogram,
    load_csv,
    load_schema,
    quantiles,
    save_csv,
    save_schema,
)


def make_schema(target="y", protected=()):
    return Schema(
        columns=(
            ColumnSpec("x", ColumnKind.NUMERIC),
            ColumnSpec("g", ColumnKind.CATEGORICAL),
            ColumnSpec("y", ColumnKind.CATEGORICAL),
        ),
        target=target,
        protected=protected,
    )


def make_table():
    return DataTable(
        columns=(
            Column("x", ColumnKind.NUMERIC, np.array([1.0, 2.0, 3.0, 4.0])),
            Column("g", ColumnKind.CATEGORICAL, np.array([0, 0, 1, 1], dtype=np.int32), ("a", "b")),
        ),
        target="g",
    )


# ---------------------------------------------------------------- schema


def test_schema_rejects_duplicate_columns():
    with pytest.raises(SchemaError, match="duplicate"):
        Schema(
            columns=(
                ColumnSpec("x", ColumnKind.NUMERIC),
                ColumnSpec("x", ColumnKind.NUMERIC),
            ),
            target="x",
        )


def test_schema_rejects_unknown_target_and_protected():
    with pytest.raises(SchemaError, match="target"):
        make_schema(target="nope")
    with pytest.raises(SchemaError, match="protected"):
        make_schema(protected=("nope",))


def test_schema_scale_rules():
    with pytest.raises(SchemaError, match="non-numeric"):
        Schema(
            columns=(ColumnSpec("g", ColumnKind.CATEGORICAL, scale=2.0),),
            target="g",
        )
    with pytest.raises(SchemaError, match="positive"):
        Schema(
            columns=(
                ColumnSpec("x", ColumnKind.NUMERIC, scale=-1.0),
                ColumnSpec("y", ColumnKind.CATEGORICAL),
            ),
            target="y",
        )


def test_schema_json_round_trip(tmp_path):
    schema = Schema(
        columns=(
            ColumnSpec("x", ColumnKind.NUMERIC, scale=1000.0),
            ColumnSpec("g", ColumnKind.CATEGORICAL),
        ),
        target="g",
        protected=("g",),
    )
    path = tmp_path / "schema.json"
    save_schema(schema, path)
    assert load_schema(path) == schema


def test_load_schema_rejects_garbage(tmp_path):
    path = tmp_path / "schema.json"
    path.write_text("{not json")
    with pytest.raises(SchemaError):
        load_schema(path)
    path.write_text(json.dumps({"columns": []}))
    with pytest.raises(SchemaError):
        load_schema(path)


# ---------------------------------------------------------------- load_csv


def write_csv(tmp_path, text):
    path = tmp_path / "data.csv"
    path.write_text(text)
    return path


def test_load_csv_basic_and_ignored_columns(tmp_path):
    path = write_csv(tmp_path, "x,extra,g,y\n1.5,zzz,a,u\n2.5,zzz,b,v\n")
    loaded = load_csv(path, make_schema())
    assert loaded.table.n_rows == 2
    assert loaded.n_dropped == 0
    assert loaded.ignored_columns == ("extra",)
    assert loaded.table.column("x").values.tolist() == [1.5, 2.5]
    assert loaded.table.column("g").levels == ("a", "b")


def test_load_csv_applies_scale(tmp_path):
    schema = Schema(
        columns=(
            ColumnSpec("x", ColumnKind.NUMERIC, scale=1000.0),
            ColumnSpec("g", ColumnKind.CATEGORICAL),
        ),
        target="g",
    )
    path = write_csv(tmp_path, "x,g\n1.5,a\n2.25,b\n")
    table = load_csv(path, schema).table
    assert table.column("x").values.tolist() == [1500.0, 2250.0]


def test_load_csv_missing_header_column(tmp_path):
    path = write_csv(tmp_path, "x,g\n1,a\n")
    with pytest.raises(SchemaError, match="'y' missing"):
        load_csv(path, make_schema())


def test_load_csv_drop_row_policy_counts(tmp_path):
    path = write_csv(
        tmp_path,
        "x,g,y\n1,a,u\n,a,u\nbad,b,v\n4,,v\n5,b,v\n",
    )
    loaded = load_csv(path, make_schema(), MissingPolicy.DROP_ROW)
    assert loaded.table.n_rows == 2
    assert loaded.n_dropped == 3
    assert loaded.table.column("x").values.tolist() == [1.0, 5.0]


def test_load_csv_fail_policy_raises_with_location(tmp_path):
    path = write_csv(tmp_path, "x,g,y\n1,a,u\nbad,b,v\n")
    with pytest.raises(DataError, match=r":3: .*'bad'"):
        load_csv(path, make_schema(), MissingPolicy.FAIL)


def test_load_csv_nonfinite_is_missing(tmp_path):
    path = write_csv(tmp_path, "x,g,y\ninf,a,u\nnan,a,u\n1,b,v\n2,b,v\n")
    loaded = load_csv(path, make_schema(), MissingPolicy.DROP_ROW)
    assert loaded.table.n_rows == 2
    assert loaded.n_dropped == 2


def test_load_csv_field_count_mismatch(tmp_path):
    path = write_csv(tmp_path, "x,g,y\n1,a\n")
    with pytest.raises(DataError, match="expected 3 fields"):
        load_csv(path, make_schema())


def test_load_csv_empty_and_all_dropped(tmp_path):
    path = write_csv(tmp_path, "")
    with pytest.raises(DataError, match="empty file"):
        load_csv(path, make_schema())
    path = write_csv(tmp_path, "x,g,y\n,a,u\n")
    with pytest.raises(DataError, match="no usable rows"):
        load_csv(path, make_schema(), MissingPolicy.DROP_ROW)


def test_csv_round_trip_exact(tmp_path):
    path = write_csv(
        tmp_path, "x,g,y\n0.1,a,u\n2.7182818284590452,b,v\n-3.5e-7,a,u\n"
    )
    schema = make_schema()
    table = load_csv(path, schema).table
    out = tmp_path / "out.csv"
    save_csv(table, out)
    again = load_csv(out, schema).table
    assert again.content_hash() == table.content_hash()


# ---------------------------------------------------------------- table ops


def test_table_rejects_unequal_columns():
    with pytest.raises(DataError, match="unequal"):
        DataTable(
            columns=(
                Column("x", ColumnKind.NUMERIC, np.array([1.0])),
                Column("z", ColumnKind.NUMERIC, np.array([1.0, 2.0])),
            ),
            target="x",
        )


def test_tables_are_immutable():
    table = make_table()
    with pytest.raises(ValueError):
        table.column("x").values[0] = 99.0


def test_select_rows_keeps_levels():
    table = make_table()
    sub = table.select_rows(np.array([0, 1]))
    assert sub.n_rows == 2
    assert sub.column("g").levels == ("a", "b")  # "b" no longer appears


def test_replace_column_checks_length():
    table = make_table()
    out = table.replace_column("x", table.column("x").values * 2.0)
    assert out.column("x").values.tolist() == [2.0, 4.0, 6.0, 8.0]
    with pytest.raises(DataError, match="wrong length"):
        table.replace_column("x", np.array([1.0]))


def test_with_columns_rejects_duplicates_and_bad_length():
    table = make_table()
    with pytest.raises(SchemaError, match="already present"):
        table.with_columns([Column("x", ColumnKind.NUMERIC, np.zeros(4))])
    with pytest.raises(DataError, match="wrong length"):
        table.with_columns([Column("z", ColumnKind.NUMERIC, np.zeros(2))])


def test_feature_matrix_excludes_and_encodes():
    table = make_table()
    fm = table.feature_matrix(exclude=("g",))
    assert fm.names == ("x",)
    fm = table.feature_matrix(exclude=())
    assert fm.names == ("x", "g")
    assert fm.kinds.tolist() == [0, 1]
    assert fm.X[:, 1].tolist() == [0.0, 0.0, 1.0, 1.0]
    with pytest.raises(SchemaError, match="no feature columns"):
        table.feature_matrix(exclude=("x", "g"))


def test_content_hash_sensitivity():
    table = make_table()
    same = make_table()
    assert table.content_hash() == same.content_hash()
    changed = table.replace_column("x", np.array([1.0, 2.0, 3.0, 4.5]))
    assert changed.content_hash() != table.content_hash()


# ---------------------------------------------------------------- statistics


def test_group_counts_and_means():
    table = make_table()
    assert group_counts(table, "g") == {"a": 2, "b": 2}
    assert group_mean(table, "x") == {"all": 2.5}
    assert group_mean(table, "x", "g") == {"a": 1.5, "b": 3.5}
    with pytest.raises(DataError, match="not categorical"):
        group_counts(table, "x")
    with pytest.raises(DataError, match="not numeric"):
        group_mean(table, "g")


def test_quantiles_hand_values():
    table = make_table()
    got = quantiles(table, "x", (0.0, 0.25, 0.5, 0.75, 1.0))["all"]
    assert got == (1.0, 1.75, 2.5, 3.25, 4.0)


def test_quantiles_match_numpy_linear_interpolation():
    rng = np.random.default_rng(99)
    values = rng.normal(size=257)
    table = DataTable(
        columns=(Column("x", ColumnKind.NUMERIC, values.copy()),), target="x"
    )
    probs = (0.0, 0.1, 0.25, 0.5, 0.632, 0.75, 0.9, 1.0)
    got = np.array(quantiles(table, "x", probs)["all"])
    want = np.quantile(values, probs)
    assert np.allclose(got, want, atol=1e-12)


def test_quantiles_per_group_and_validation():
    table = make_table()
    got = quantiles(table, "x", (0.5,), by="g")
    assert got == {"a": (1.5,), "b": (3.5,)}
    with pytest.raises(DataError, match="outside"):
        quantiles(table, "x", (1.5,))


def test_histogram_shared_edges_and_last_bin_inclusive():
    table = DataTable(
        columns=(
            Column("x", ColumnKind.NUMERIC, np.array([0.0, 1.0, 2.0, 2.0])),
            Column(
                "g",
                ColumnKind.CATEGORICAL,
                np.array([0, 0, 1, 1], dtype=np.int32),
                ("a", "b"),
            ),
        ),
        target="g",
    )
    hist = histogram(table, "x", bins=2)
    assert hist.edges == (0.0, 1.0, 2.0)
    assert hist.counts["all"] == (1, 3)  # 1.0 and both 2.0 in the last bin
    grouped = histogram(table, "x", bins=2, by="g")
    assert grouped.counts == {"a": (1, 1), "b": (0, 2)}


def test_histogram_degenerate_constant_column():
    table = DataTable(
        columns=(
            Column("x", ColumnKind.NUMERIC, np.full(5, 7.0)),
            Column(
                "g",
                ColumnKind.CATEGORICAL,
                np.zeros(5, dtype=np.int32),
                ("a",),
            ),
        ),
        target="g",
    )
    hist = histogram(table, "x", bins=4)
    assert hist.degenerate
    assert hist.edges == (7.0, 7.0)
    assert hist.counts["all"] == (5,)


def test_histogram_validation():
    table = make_table()
    with pytest.raises(DataError, match="bins"):
        histogram(table, "x", bins=0)
    with pytest.raises(DataError, match="not numeric"):
        histogram(table, "g", bins=2)
