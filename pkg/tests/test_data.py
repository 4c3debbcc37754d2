import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from setpred.data import (
    SparseVector,
    dirichlet_dists,
    gaussian_blobs,
    read_svmlight,
    write_svmlight,
)
from setpred.errors import InvalidParams, NonMonotoneIndices, ParseError


class TestSparseVector:
    def test_valid(self):
        v = SparseVector(np.array([0, 3, 7]), np.array([1.0, -2.0, 0.5]))
        np.testing.assert_array_equal(v.to_dense(8), [1, 0, 0, -2, 0, 0, 0, 0.5])

    def test_indices_must_increase(self):
        with pytest.raises(InvalidParams):
            SparseVector(np.array([3, 3]), np.array([1.0, 2.0]))
        with pytest.raises(InvalidParams):
            SparseVector(np.array([5, 2]), np.array([1.0, 2.0]))
        with pytest.raises(InvalidParams):
            SparseVector(np.array([-1]), np.array([1.0]))


class TestSvmlight:
    def test_one_based_parse(self, tmp_path):
        path = tmp_path / "d.svm"
        path.write_text("2 1:0.5 7:1.0\n")
        data = read_svmlight(path, index_base=1)
        vec, label = data.example(0)
        assert label == 0  # dense remap of the single label 2
        assert data.label_map == {2: 0}
        assert vec.indices.tolist() == [0, 6]
        assert vec.values.tolist() == [0.5, 1.0]

    def test_zero_based_parse(self, tmp_path):
        path = tmp_path / "d.svm"
        path.write_text("1 0:2.0 3:1.0\n")
        data = read_svmlight(path, index_base=0)
        vec, _ = data.example(0)
        assert vec.indices.tolist() == [0, 3]

    def test_empty_feature_line_is_a_zero_vector(self, tmp_path):
        path = tmp_path / "d.svm"
        path.write_text("5\n5 1:1.0\n")
        data = read_svmlight(path, index_base=1)
        vec, _ = data.example(0)
        assert vec.indices.size == 0

    def test_parse_error_reports_line(self, tmp_path):
        path = tmp_path / "d.svm"
        path.write_text("1 1:1.0\n1 3:a\n")
        with pytest.raises(ParseError, match="line 2"):
            read_svmlight(path, index_base=1)

    def test_bad_label(self, tmp_path):
        path = tmp_path / "d.svm"
        path.write_text("x 1:1.0\n")
        with pytest.raises(ParseError, match="line 1"):
            read_svmlight(path, index_base=1)

    def test_non_monotone_indices(self, tmp_path):
        path = tmp_path / "d.svm"
        path.write_text("1 5:1.0 2:1.0\n")
        with pytest.raises(NonMonotoneIndices, match="line 1"):
            read_svmlight(path, index_base=1)

    def test_label_map_and_dimension_reuse(self, tmp_path):
        train = tmp_path / "train.svm"
        train.write_text("10 1:1.0 9:1.0\n20 2:1.0\n")
        test = tmp_path / "test.svm"
        test.write_text("20 3:1.0\n")
        tr = read_svmlight(train, index_base=1)
        te = read_svmlight(test, index_base=1, n_features=tr.n_features,
                           label_map=tr.label_map)
        assert te.n_features == tr.n_features == 9
        assert te.y.tolist() == [1]

    def test_unknown_label_with_fixed_map(self, tmp_path):
        test = tmp_path / "test.svm"
        test.write_text("99 1:1.0\n")
        with pytest.raises(ParseError):
            read_svmlight(test, index_base=1, label_map={1: 0})

    def test_roundtrip(self, tmp_path):
        data, _ = gaussian_blobs(5, 8, 60, seed=0)
        path = tmp_path / "blob.svm"
        write_svmlight(data, path)
        back = read_svmlight(path, index_base=1, n_features=8)
        assert back.y.tolist() == data.y.tolist()
        np.testing.assert_allclose(back.X.toarray(), data.X.toarray())


class TestSynth:
    def test_blobs_are_byte_deterministic(self, tmp_path):
        a, b = tmp_path / "a.svm", tmp_path / "b.svm"
        write_svmlight(gaussian_blobs(7, 5, 120, seed=9)[0], a)
        write_svmlight(gaussian_blobs(7, 5, 120, seed=9)[0], b)
        assert a.read_bytes() == b.read_bytes()
        write_svmlight(gaussian_blobs(7, 5, 120, seed=10)[0], b)
        assert a.read_bytes() != b.read_bytes()

    def test_dirichlet_rows_are_distributions(self):
        draws = dirichlet_dists(9, 50, seed=1)
        assert draws.shape == (50, 9)
        assert (draws >= 0).all()
        np.testing.assert_allclose(draws.sum(axis=1), 1.0, atol=1e-12)

    def test_separated_blobs_are_learnable(self):
        from setpred.linear import train_flat

        data, _ = gaussian_blobs(10, 8, 1500, seed=2, sep=4.0)
        model = train_flat(data, eps_l=1e-6, max_epochs=150)
        acc = (np.argmax(model.predict_scores_batch(data.X), 1) == data.y).mean()
        assert acc >= 0.95


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 10**6), k=st.integers(2, 9), n=st.integers(1, 30))
def test_svmlight_roundtrip_property(tmp_path_factory, seed, k, n):
    data, _ = gaussian_blobs(k, 4, n, seed=seed)
    path = tmp_path_factory.mktemp("svm") / "x.svm"
    write_svmlight(data, path, index_base=0)
    back = read_svmlight(path, index_base=0, n_features=4, label_map=data.label_map)
    assert back.y.tolist() == data.y.tolist()
    np.testing.assert_allclose(back.X.toarray(), data.X.toarray(), rtol=0, atol=0)
