import numpy as np
import pandas as pd
import pytest

from gradcf.data import (TabularPreprocessor, load_dataset, prepare,
                         split_indices)
from gradcf.schema import Feature, FeatureSchema

SCHEMA = FeatureSchema(
    [Feature("a", "continuous"),
     Feature("c", "categorical", categories=("x", "y"))],
    label="label")


def write_csv(tmp_path, text):
    path = tmp_path / "data.csv"
    path.write_text(text)
    return path


class TestLoadDataset:
    def test_missing_rows_dropped(self, tmp_path):
        path = write_csv(tmp_path, "a,c,label\n1,x,0\n2,?,1\n3,y,0\n,x,1\n5,y,1\n")
        frame, dropped = load_dataset(path, SCHEMA)
        assert dropped == 2
        assert len(frame) == 3

    def test_unparseable_continuous_is_missing(self, tmp_path):
        path = write_csv(tmp_path, "a,c,label\noops,x,0\n2,y,1\n")
        frame, dropped = load_dataset(path, SCHEMA)
        assert dropped == 1 and len(frame) == 1

    def test_unknown_category_is_an_error(self, tmp_path):
        path = write_csv(tmp_path, "a,c,label\n1,x,0\n2,zzz,1\n")
        with pytest.raises(ValueError, match=r"'zzz' in column 'c' at row 1"):
            load_dataset(path, SCHEMA)

    def test_header_mismatch(self, tmp_path):
        path = write_csv(tmp_path, "a,wrong,label\n1,x,0\n")
        with pytest.raises(ValueError, match="header mismatch"):
            load_dataset(path, SCHEMA)

    def test_empty_file(self, tmp_path):
        path = write_csv(tmp_path, "a,c,label\n")
        with pytest.raises(ValueError, match="no data rows"):
            load_dataset(path, SCHEMA)


class TestPreprocessor:
    def test_mad_hand_example(self):
        frame = pd.DataFrame({"a": [1.0, 2.0, 3.0, 4.0, 5.0], "c": ["x"] * 5})
        pre = TabularPreprocessor(SCHEMA).fit(frame)
        assert pre.mad_["a"] == pytest.approx(1.0)

    def test_constant_feature_floored_with_warning(self):
        frame = pd.DataFrame({"a": [7.0, 7.0, 7.0], "c": ["x", "y", "x"]})
        with pytest.warns(UserWarning, match="constant"):
            pre = TabularPreprocessor(SCHEMA).fit(frame)
        assert pre.mad_["a"] == 1e-6
        assert pre.scale_["a"] == 1e-6

    def test_one_hot_width_and_unit_mad(self):
        frame = pd.DataFrame({"a": [1.0, 2.0], "c": ["x", "y"]})
        pre = TabularPreprocessor(SCHEMA).fit(frame)
        enc = pre.transform(frame)
        assert enc.shape == (2, 3)
        assert pre.mad_vector_[1] == 1.0 and pre.mad_vector_[2] == 1.0

    def test_round_trip(self):
        frame = pd.DataFrame({"a": [1.0, 2.5, -3.0, 8.0], "c": ["x", "y", "y", "x"]})
        pre = TabularPreprocessor(SCHEMA).fit(frame)
        back = pre.inverse_transform(pre.transform(frame))
        np.testing.assert_allclose(back["a"].to_numpy(), frame["a"].to_numpy(), atol=1e-9)
        assert list(back["c"]) == list(frame["c"])

    def test_mean_encodes_to_zero(self):
        frame = pd.DataFrame({"a": [1.0, 3.0], "c": ["x", "y"]})
        pre = TabularPreprocessor(SCHEMA).fit(frame)
        assert pre.encode_value("a", 2.0) == pytest.approx(0.0)

    def test_relaxed_one_hot_decodes_by_argmax(self):
        frame = pd.DataFrame({"a": [1.0, 2.0], "c": ["x", "y"]})
        pre = TabularPreprocessor(SCHEMA).fit(frame)
        decoded = pre.inverse_transform(np.array([[0.0, 0.7, 0.3]]))
        assert decoded["c"].iloc[0] == "x"

    def test_width_mismatch(self):
        frame = pd.DataFrame({"a": [1.0, 2.0], "c": ["x", "y"]})
        pre = TabularPreprocessor(SCHEMA).fit(frame)
        with pytest.raises(ValueError, match="width mismatch"):
            pre.inverse_transform(np.zeros((1, 7)))

    def test_one_hot_blocks_sum_to_one(self):
        frame = pd.DataFrame({"a": [0.0, 1.0, 2.0], "c": ["x", "y", "x"]})
        pre = TabularPreprocessor(SCHEMA).fit(frame)
        enc = pre.transform(frame)
        np.testing.assert_array_equal(enc[:, 1] + enc[:, 2], np.ones(3))


class TestSplit:
    @pytest.mark.parametrize("n,expected", [(690, (414, 138, 138)), (10, (6, 2, 2))])
    def test_sixty_twenty_twenty(self, n, expected):
        tr, va, te = split_indices(n, seed=0)
        assert (len(tr), len(va), len(te)) == expected

    def test_deterministic(self):
        a = split_indices(100, seed=5)
        b = split_indices(100, seed=5)
        for x, y in zip(a, b):
            np.testing.assert_array_equal(x, y)

    def test_partitions_disjoint_and_cover(self):
        tr, va, te = split_indices(101, seed=1)
        joined = np.concatenate([tr, va, te])
        assert len(joined) == 101
        assert len(set(joined.tolist())) == 101

    def test_too_few_rows(self):
        with pytest.raises(ValueError, match="at least 5"):
            split_indices(4, seed=0)


def test_statistics_do_not_leak_from_test_rows():
    rng = np.random.default_rng(0)
    frame = pd.DataFrame({"a": rng.normal(size=40), "c": ["x", "y"] * 20,
                          "label": [0, 1] * 20})
    ds = prepare(frame, SCHEMA, seed=3)
    perturbed = frame.copy()
    idx = ds.idx_test[0]
    perturbed.loc[idx, "a"] = 1e6
    ds2 = prepare(perturbed, SCHEMA, seed=3)
    assert ds.preprocessor.mean_ == ds2.preprocessor.mean_
    assert ds.preprocessor.scale_ == ds2.preprocessor.scale_
    assert ds.preprocessor.mad_ == ds2.preprocessor.mad_
