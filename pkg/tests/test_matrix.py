from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as hst
from hypothesis.extra.numpy import arrays

from covtest.errors import (
    ConstantOutcome,
    MalformedMatrix,
    RankDeficientDesign,
    SubsetTooSmall,
    ZeroVarianceRow,
)
from covtest.matrix import (
    FeatureMatrix,
    Outcome,
    center_columns,
    center_rows,
    elementwise_power,
    gram,
    read_matrix,
    residualize,
    sample_covariance,
    scale_rows,
    write_matrix,
    write_square,
    xi,
)

from oracles import residualize_normal_equations

finite = hst.floats(-100, 100, allow_nan=False, allow_infinity=False)


def matrices(max_p=6, max_n=8):
    shape = hst.tuples(hst.integers(1, max_p), hst.integers(3, max_n))
    return shape.flatmap(lambda s: arrays(np.float64, s, elements=finite))


class TestCenterRows:
    @pytest.mark.parametrize("row, expected", [
        ([1.0, 3.0], [-1.0, 1.0]),
        ([1.0, 2.0, 3.0], [-1.0, 0.0, 1.0]),
        ([0.0, 0.0, 0.0], [0.0, 0.0, 0.0]),
    ])
    def test_examples(self, row, expected):
        np.testing.assert_allclose(center_rows(np.array([row])), [expected])

    @given(matrices())
    def test_idempotent_and_zero_mean(self, X):
        once = center_rows(X)
        np.testing.assert_allclose(once.mean(axis=1), 0, atol=1e-9)
        np.testing.assert_allclose(center_rows(once), once, atol=1e-9)

    def test_keeps_ids(self):
        X = FeatureMatrix(np.array([[1.0, 2.0, 6.0]]), ("g",), ("a", "b", "c"))
        out = center_rows(X)
        assert isinstance(out, FeatureMatrix)
        assert out.feature_ids == ("g",) and out.sample_ids == ("a", "b", "c")

    def test_column_centering_flag(self):
        X = np.array([[1.0, 2.0], [3.0, 6.0]])
        np.testing.assert_allclose(center_columns(X).mean(axis=0), 0)


class TestScaleRows:
    def test_two_point_row(self):
        np.testing.assert_allclose(scale_rows(np.array([[-1.0, 1.0]])),
                                   [[-1 / np.sqrt(2), 1 / np.sqrt(2)]])

    def test_unit_row_unchanged(self):
        row = np.array([[-1.0, 0.0, 1.0]])
        np.testing.assert_allclose(scale_rows(row), row)

    def test_constant_row(self):
        with pytest.raises(ZeroVarianceRow) as err:
            scale_rows(np.array([[1.0, 2.0, 3.0], [5.0, 5.0, 5.0]]))
        assert err.value.row == 1

    def test_variance_one(self, rng):
        out = scale_rows(rng.normal(3, 7, (4, 30)))
        np.testing.assert_allclose(out.var(axis=1, ddof=1), 1)
        np.testing.assert_allclose(out.mean(axis=1), 0, atol=1e-12)


class TestGramAndOperators:
    @pytest.mark.parametrize("X, expected", [
        ([[1, 0], [0, 1]], [[1, 0], [0, 1]]),
        ([[1, 2], [3, 4]], [[10, 14], [14, 20]]),
    ])
    def test_gram(self, X, expected):
        np.testing.assert_allclose(gram(np.array(X, float)), expected)

    def test_gram_zero_column(self, rng):
        X = rng.standard_normal((3, 4))
        X[:, 2] = 0
        G = gram(X)
        assert np.all(G[2] == 0) and np.all(G[:, 2] == 0)

    @given(matrices())
    @settings(max_examples=50)
    def test_gram_psd(self, X):
        G = gram(X)
        assert np.array_equal(G, G.T)
        assert np.linalg.eigvalsh(G).min() >= -1e-8 * max(np.trace(G), 1.0)

    def test_elementwise_power(self):
        M = np.array([[10.0, 14.0], [14.0, 20.0]])
        np.testing.assert_allclose(elementwise_power(M, 2), [[100, 196], [196, 400]])
        np.testing.assert_array_equal(elementwise_power(M, 1), M)
        np.testing.assert_array_equal(elementwise_power(np.eye(3), 2), np.eye(3))

    @pytest.mark.parametrize("M, expected", [
        (np.array([[1.0, 2.0], [3.0, 4.0]]), 10.0),
        (np.zeros((3, 3)), 0.0),
        (np.eye(5), 5.0),
    ])
    def test_xi(self, M, expected):
        assert xi(M) == expected

    @given(arrays(np.float64, (4, 4), elements=finite))
    def test_xi_of_square_is_frobenius(self, D):
        assert np.isclose(xi(elementwise_power(D, 2)), np.linalg.norm(D, "fro") ** 2,
                          rtol=1e-10)


class TestSampleCovariance:
    def test_examples(self):
        assert sample_covariance(np.array([[1.0, -1.0]]), [0, 1]).values.tolist() == [[1.0]]
        out = sample_covariance(np.array([[1.0, -1.0], [1.0, -1.0]]), [0, 1])
        np.testing.assert_allclose(out.values, [[1, 1], [1, 1]])
        assert out.divisor == 2
        np.testing.assert_array_equal(sample_covariance(np.zeros((2, 4))).values, 0)

    def test_subset_too_small(self):
        with pytest.raises(SubsetTooSmall):
            sample_covariance(np.ones((2, 4)), [1])

    def test_full_sample_is_gram_over_n(self, rng):
        X = center_rows(rng.standard_normal((5, 9)))
        cov = sample_covariance(X)
        np.testing.assert_allclose(cov.values, X @ X.T / 9, rtol=1e-12)
        assert np.all(np.diag(cov.values) >= 0)


class TestResidualize:
    def test_regression_example(self):
        out = residualize(np.array([[1.0, 2.0, 4.0]]), np.array([1.0, 2.0, 3.0]))
        np.testing.assert_allclose(out, [[1 / 6, -1 / 3, 1 / 6]], atol=1e-12)

    def test_empty_covariates_center(self, rng):
        X = rng.standard_normal((3, 7))
        np.testing.assert_allclose(residualize(X, None), center_rows(X), atol=1e-12)

    def test_exact_fit(self):
        c = np.array([1.0, 4.0, 2.0, 7.0])
        np.testing.assert_allclose(residualize(np.array([3 * c - 1]), c), 0, atol=1e-12)

    def test_normal_equations_oracle(self, rng):
        X = rng.standard_normal((5, 15))
        C = rng.standard_normal((15, 2))
        out = residualize(X, C)
        np.testing.assert_allclose(out, residualize_normal_equations(X, C), atol=1e-10)
        D = np.column_stack([np.ones(15), C])
        assert np.abs(out @ D).max() <= 1e-8 * np.abs(X).max() * 15

    def test_idempotent(self, rng):
        X = rng.standard_normal((4, 10))
        C = rng.standard_normal(10)
        once = residualize(X, C)
        np.testing.assert_allclose(residualize(once, C), once, atol=1e-12)

    def test_rank_deficient(self, rng):
        c = rng.standard_normal(6)
        with pytest.raises(RankDeficientDesign):
            residualize(rng.standard_normal((2, 6)), np.column_stack([c, 2 * c]))
        with pytest.raises(RankDeficientDesign):
            residualize(rng.standard_normal((2, 3)), rng.standard_normal((3, 2)))


class TestContainers:
    def test_rejects_nonfinite(self):
        with pytest.raises(MalformedMatrix):
            FeatureMatrix(np.array([[1.0, np.nan, 2.0]]))

    def test_values_read_only(self):
        X = FeatureMatrix(np.ones((2, 3)))
        with pytest.raises(ValueError):
            X.values[0, 0] = 5

    def test_outcome_checks(self):
        with pytest.raises(ConstantOutcome):
            Outcome(np.ones(4))
        with pytest.raises(ValueError):
            Outcome(np.array([1.0, 2.0, 3.0]), centered=True)
        y = Outcome.from_values([1.0, 2.0, 6.0])
        assert y.centered and abs(y.values.sum()) < 1e-12


class TestIO:
    def test_roundtrip(self, tmp_path, rng):
        X = FeatureMatrix(rng.standard_normal((3, 4)), ("a", "b", "c"), ("s1", "s2", "s3", "s4"))
        path = tmp_path / "m.tsv"
        write_matrix(X, path)
        back = read_matrix(path)
        np.testing.assert_array_equal(back.values, X.values)
        assert back.feature_ids == X.feature_ids and back.sample_ids == X.sample_ids

    @pytest.mark.parametrize("body", [
        "f\ts1\ts2\ng1\t1\n",
        "f\ts1\ts2\ng1\t1\tNA\n",
        "f\ts1\ts2\ng1\t1\tabc\n",
        "f\ts1\ts2\n",
    ])
    def test_malformed(self, tmp_path, body):
        path = tmp_path / "bad.tsv"
        path.write_text(body)
        with pytest.raises(MalformedMatrix):
            read_matrix(path)

    def test_write_square(self, tmp_path):
        path = tmp_path / "sq.tsv"
        write_square(np.array([[1.0, 2.0], [2.0, 3.0]]), path, ["x", "y"])
        back = read_matrix(path)
        assert back.feature_ids == ("x", "y")
