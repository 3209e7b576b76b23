import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as hs

from commonatoms.data_model import (RWD, TREATMENT, CensoredOutcome, CovariateSchema, DataError,
                                    MixedDataset, StudyData, load_csv, merge_historical,
                                    standardize, validate_ratio, write_csv)

SCHEMA = CovariateSchema.from_spec([("age", 0), ("sex", 2), ("stage", 3)])


def _write(path, text):
    path.write_text(text, encoding="utf-8")
    return path


def _ds(n, arm=RWD, levels=3, src="a", seed=0):
    r = np.random.default_rng(seed)
    sch = CovariateSchema.from_spec([("age", 0), ("sex", 2), ("stage", levels)])
    cat = np.column_stack([r.integers(0, 2, n), r.integers(0, levels, n)])
    return MixedDataset(sch, arm, cat, r.normal(size=(n, 1)),
                        source=np.array([src] * n, dtype=object))


class TestLoadCsv:
    def test_one_missing_cell(self, tmp_path):
        p = _write(tmp_path / "a.csv", "age,sex,stage\n61.5,1,2\nNA,0,1\n70,1,0\n")
        ds = load_csv(p, SCHEMA, TREATMENT)
        mask = ds.missing_mask()
        assert mask.sum() == 1 and mask[1, 0]
        assert ds.load_report["missing_total"] == 1

    def test_empty_string_is_missing(self, tmp_path):
        p = _write(tmp_path / "a.csv", "age,sex,stage\n61.5,,2\n")
        ds = load_csv(p, SCHEMA, TREATMENT)
        assert ds.cat[0, 0] == -1

    def test_zero_survival_time_rejected(self, tmp_path):
        p = _write(tmp_path / "a.csv", "age,sex,stage,time,status\n61,1,2,0,1\n")
        with pytest.raises(DataError, match=r"row 1.*'time'"):
            load_csv(p, SCHEMA, TREATMENT, ("time", "status"), survival=True)

    def test_level_out_of_range_names_column(self, tmp_path):
        p = _write(tmp_path / "a.csv", "age,sex,stage\n61,1,5\n")
        with pytest.raises(DataError, match=r"row 1, column 'stage'"):
            load_csv(p, SCHEMA, TREATMENT)

    def test_unknown_column(self, tmp_path):
        p = _write(tmp_path / "a.csv", "age,sex,stage,bogus\n61,1,2,3\n")
        with pytest.raises(DataError, match="bogus"):
            load_csv(p, SCHEMA, TREATMENT)

    def test_unparseable_cell(self, tmp_path):
        p = _write(tmp_path / "a.csv", "age,sex,stage\n61,1,2\nold,1,2\n")
        with pytest.raises(DataError, match=r"row 2, column 'age'"):
            load_csv(p, SCHEMA, TREATMENT)

    def test_bad_status(self, tmp_path):
        p = _write(tmp_path / "a.csv", "age,sex,stage,time,status\n61,1,2,10,2\n")
        with pytest.raises(DataError, match="status"):
            load_csv(p, SCHEMA, TREATMENT, ("time", "status"), survival=True)

    def test_missing_file(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            load_csv(tmp_path / "nope.csv", SCHEMA, TREATMENT)

    def test_survival_log_transform(self, tmp_path):
        p = _write(tmp_path / "a.csv", "age,sex,stage,time,status\n61,1,2,20,1\n50,0,0,35,0\n")
        ds = load_csv(p, SCHEMA, RWD, ("time", "status"), survival=True)
        o = ds.outcome
        assert o.y == pytest.approx(np.log([20, 35]))
        assert list(o.observed) == [True, False]
        assert o.upper[1] == np.inf and o.lower[1] == pytest.approx(np.log(35))


class TestRoundTrip:
    def test_write_then_load_is_exact(self, tmp_path):
        r = np.random.default_rng(1)
        n = 25
        cat = np.column_stack([r.integers(-1, 2, n), r.integers(-1, 3, n)])
        cont = r.normal(size=(n, 1)) * 1e3
        cont[r.random(n) < 0.2] = np.nan
        out = CensoredOutcome.right_censored(r.exponential(40, n) + 0.1, r.integers(0, 2, n))
        ds = MixedDataset(SCHEMA, RWD, cat, cont, out)
        write_csv(ds, tmp_path / "d.csv", ("time", "status"))
        back = load_csv(tmp_path / "d.csv", SCHEMA, RWD, ("time", "status"), survival=True)
        assert np.array_equal(back.cat, ds.cat)
        assert np.array_equal(back.missing_mask(), ds.missing_mask())
        ok = ~np.isnan(cont)
        assert np.array_equal(back.cont[ok], cont[ok])
        assert np.allclose(back.outcome.y, out.y, rtol=0, atol=1e-14)
        assert np.array_equal(back.outcome.observed, out.observed)
        assert back.schema == ds.schema

    @settings(max_examples=15, deadline=None)
    @given(hs.lists(hs.tuples(hs.one_of(hs.none(), hs.floats(-1e6, 1e6)),
                              hs.integers(-1, 1), hs.integers(-1, 2)), min_size=1, max_size=10))
    def test_round_trip_property(self, tmp_path_factory, rows):
        d = tmp_path_factory.mktemp("rt")
        cont = np.array([[np.nan if a is None else a] for a, _, _ in rows])
        cat = np.array([[b, c] for _, b, c in rows])
        ds = MixedDataset(SCHEMA, TREATMENT, cat, cont)
        write_csv(ds, d / "x.csv")
        back = load_csv(d / "x.csv", SCHEMA, TREATMENT)
        assert np.array_equal(back.cat, cat)
        assert np.array_equal(np.isnan(back.cont), np.isnan(cont))
        assert np.array_equal(back.cont[~np.isnan(cont)], cont[~np.isnan(cont)])


class TestMerge:
    def test_sizes_and_provenance(self):
        a, b = _ds(150, src="A"), _ds(150, src="B", seed=1)
        m = merge_historical([a, b])
        assert m.n == 300
        assert list(m.source[:150]) == ["A"] * 150 and list(m.source[150:]) == ["B"] * 150
        assert np.array_equal(m.row_index, np.r_[np.arange(150), np.arange(150)])

    def test_single_input_identity(self):
        a = _ds(10)
        assert merge_historical([a]) is a

    def test_schema_mismatch_names_column(self):
        with pytest.raises(DataError, match="stage"):
            merge_historical([_ds(5), _ds(5, levels=4)])

    def test_rejects_treatment_arm(self):
        with pytest.raises(DataError):
            merge_historical([_ds(5), _ds(5, arm=TREATMENT)])

    def test_associative(self):
        a, b, c = _ds(4, src="a"), _ds(5, src="b", seed=1), _ds(6, src="c", seed=2)
        left = merge_historical([merge_historical([a, b]), c])
        right = merge_historical([a, merge_historical([b, c])])
        assert np.array_equal(left.cat, right.cat)
        assert np.array_equal(left.cont, right.cont)
        assert list(left.source) == list(right.source)


class TestRatio:
    def _study(self, n1, n2):
        return StudyData(_ds(n1, arm=TREATMENT), _ds(n2, seed=3))

    def test_six_to_one(self):
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            d = validate_ratio(self._study(50, 300))
        assert d["ratio"] == 6.0 and d["warnings"] == []

    def test_gbm_sizes(self):
        assert validate_ratio(self._study(49, 339))["ratio"] == pytest.approx(6.918, abs=1e-3)

    def test_warns_below_one(self):
        with pytest.warns(UserWarning):
            d = validate_ratio(self._study(100, 50))
        assert d["ratio"] == 0.5 and d["warnings"]


class TestTypes:
    def test_censoring_interval_order(self):
        with pytest.raises(DataError):
            CensoredOutcome([1.0], [2.0], [1.0], [False])

    def test_schema_mismatch_between_arms(self):
        with pytest.raises(DataError):
            StudyData(_ds(3, arm=TREATMENT), _ds(3, levels=4))

    def test_duplicate_column_names(self):
        with pytest.raises(DataError):
            CovariateSchema.from_spec([("a", 0), ("a", 2)])

    def test_standardize_pooled(self):
        st = StudyData(_ds(30, arm=TREATMENT), _ds(40, seed=5))
        z, mom = standardize(st)
        pooled = np.vstack([z.treatment.cont, z.rwd.cont])
        assert abs(pooled.mean()) < 1e-12
        assert pooled.std(ddof=1) == pytest.approx(1.0, abs=1e-12)
