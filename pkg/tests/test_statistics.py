from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as hst
from hypothesis.extra.numpy import arrays

from covtest import statistics as st
from covtest.errors import AllPairsDegenerate, ConstantOutcome, EmptyGroup
from covtest.matrix import center_rows, sample_covariance, xi

from oracles import C_direct, M_pairs, Q_quadruple_sum, Q_slope_sum, S_triple_sum

finite = hst.floats(-10, 10, allow_nan=False, allow_infinity=False)


@hst.composite
def instances(draw, max_p=5, max_n=8):
    p = draw(hst.integers(1, max_p))
    n = draw(hst.integers(3, max_n))
    X = draw(arrays(np.float64, (p, n), elements=finite))
    y = draw(arrays(np.float64, n, elements=finite))
    return X, y - y.mean()


def _close(a, b, rtol):
    return abs(a - b) <= rtol * max(1.0, abs(a), abs(b))


class TestWorkedExample:
    def test_w(self, toy):
        X, _ = toy
        np.testing.assert_array_equal(st.risk_scores_w(X).values, [16, 36])

    def test_S(self, toy):
        assert st.stat_S(*toy) == -10

    def test_A(self, toy):
        np.testing.assert_array_equal(st.connectivity_matrix_A(toy[0]), [[100, 196], [196, 400]])

    def test_Q_both_routes(self, toy):
        X, y = toy
        assert st.stat_Q(X, y) == pytest.approx(27)
        beta = st.slope_matrix(X, y).values
        np.testing.assert_allclose(beta, [[-1.5, -2.5], [-2.5, -3.5]])
        assert np.sum(beta**2) == pytest.approx(27)

    def test_b_and_C(self, toy):
        X, y = toy
        np.testing.assert_array_equal(st.risk_scores_b(X).values, [296, 596])
        assert st.stat_C(X, y) == pytest.approx(-150)
        np.testing.assert_array_equal(st.risk_scores_b(X, include_diagonal=False).values,
                                      [196, 196])


class TestTrivialCases:
    @pytest.mark.parametrize("fn", [st.stat_S, st.stat_Q, st.stat_C])
    def test_zero_outcome(self, fn, rng):
        assert fn(rng.standard_normal((3, 5)), np.zeros(5)) == 0

    def test_zero_matrix_scores(self):
        assert not st.risk_scores_w(np.zeros((3, 4))).values.any()
        assert not st.risk_scores_b(np.zeros((3, 4))).values.any()

    def test_single_feature_w(self):
        a = np.array([1.0, -2.0, 3.0])
        np.testing.assert_array_equal(st.risk_scores_w(a[None]).values, a**2)

    def test_orthonormal_columns(self):
        X = np.eye(4)
        np.testing.assert_array_equal(st.connectivity_matrix_A(X), np.eye(4))
        np.testing.assert_array_equal(st.risk_scores_b(X).values, np.ones(4))

    def test_zero_column(self, rng):
        X = rng.standard_normal((3, 4))
        X[:, 1] = 0
        A = st.connectivity_matrix_A(X)
        assert not A[1].any() and not A[:, 1].any()

    def test_slope_zero_outcome(self, rng):
        assert not st.slope_matrix(rng.standard_normal((3, 4)), np.zeros(4)).values.any()


class TestReductionIdentities:
    @given(instances())
    @settings(max_examples=60, deadline=None)
    def test_S(self, inst):
        X, y = inst
        assert _close(st.stat_S(X, y), S_triple_sum(X, y), 1e-9)

    @given(instances())
    @settings(max_examples=60, deadline=None)
    def test_Q(self, inst):
        X, y = inst
        q = st.stat_Q(X, y)
        assert _close(q, Q_slope_sum(X, y), 1e-9)
        assert _close(q, Q_quadruple_sum(X, y), 1e-9)
        assert q >= -1e-9 * max(1.0, abs(q))

    @given(instances(), hst.booleans())
    @settings(max_examples=40, deadline=None)
    def test_C(self, inst, diag):
        X, y = inst
        assert _close(st.stat_C(X, y, diag), C_direct(X, y, diag), 1e-9)

    @given(instances(), hst.floats(-5, 5).filter(lambda a: abs(a) > 1e-3))
    @settings(max_examples=40, deadline=None)
    def test_scale_equivariance(self, inst, a):
        X, y = inst
        assert _close(st.stat_S(X, a * y), a * st.stat_S(X, y), 1e-9)
        assert _close(st.stat_Q(X, a * y), a * a * st.stat_Q(X, y), 1e-9)


class TestTwoGroup:
    @pytest.mark.parametrize("labels, expected", [
        ([1, 1, 2, 2], [0.5, 0.5, -0.5, -0.5]),
        ([1, 2, 2], [1.0, -0.5, -0.5]),
        (["b", "a", "a"], [-1.0, 0.5, 0.5]),
    ])
    def test_encoding(self, labels, expected):
        y = st.encode_two_group(labels)
        np.testing.assert_allclose(y.values, expected)
        assert y.encoding == "two-group" and abs(y.values.sum()) < 1e-15

    @pytest.mark.parametrize("labels", [[1, 1, 1], [1, 2, 3]])
    def test_empty_group(self, labels):
        with pytest.raises(EmptyGroup):
            st.encode_two_group(labels)

    def test_slopes_are_covariance_difference(self, rng):
        labels = rng.permutation([1] * 7 + [2] * 5)
        X = center_rows(rng.standard_normal((4, 12)))
        y = st.encode_two_group(labels)
        diff = (sample_covariance(X, np.flatnonzero(labels == 1)).values
                - sample_covariance(X, np.flatnonzero(labels == 2)).values)
        np.testing.assert_allclose(st.slope_matrix(X, y).values, diff, atol=1e-12)
        assert st.stat_S(X, y) == pytest.approx(xi(diff), rel=1e-10)
        assert st.stat_Q(X, y) == pytest.approx(xi(diff**2), rel=1e-10)


def test_slope_matches_regression(rng, centered_instance):
    X, y = centered_instance(3, 10)
    sm = st.slope_matrix(X, y)
    for i, j in [(0, 0), (0, 2), (1, 2)]:
        z = X[i] * X[j]
        slope = np.polyfit(y, z, 1)[0]
        assert sm.slopes[i, j] == pytest.approx(slope, rel=1e-9)
    np.testing.assert_allclose(sm.values, sm.values.T)


class TestMaxStatistic:
    def test_bruteforce_p3_n5(self, rng):
        for _ in range(20):
            X = rng.standard_normal((3, 5))
            y = rng.standard_normal(5)
            res = st.stat_M(X, y)
            value, pair = M_pairs(X, y)
            assert res.value == pytest.approx(value, rel=1e-10)
            assert res.pair == pair
            np.testing.assert_array_equal(res.risk_scores.values, X[pair[0]] * X[pair[1]])

    def test_offdiagonal_only(self, rng):
        X, y = rng.standard_normal((4, 9)), rng.standard_normal(9)
        value, pair = M_pairs(X, y, diagonal=False)
        res = st.stat_M(X, y, diagonal=False)
        assert res.value == pytest.approx(value) and res.pair == pair
        assert res.n_pairs == 6

    def test_perfect_correlation(self, rng):
        y = rng.standard_normal(7)
        X = np.vstack([np.ones(7), 2 * y + 3, rng.standard_normal(7)])
        res = st.stat_M(X, y)
        assert res.value == pytest.approx(6)
        assert res.pair == (0, 1)

    def test_orthogonal_case_is_zero(self):
        X = np.array([[1.0, 2.0, 1.0, 2.0], [2.0, 1.0, 2.0, 1.0]])
        y = np.array([1.0, 1.0, -1.0, -1.0])
        res = st.stat_M(X, y)
        assert res.value == pytest.approx(0, abs=1e-12)
        assert res.n_pairs == 2  # the constant (0, 1) product is skipped

    def test_tie_goes_to_smallest_pair(self, rng):
        row = rng.standard_normal(6)
        X = np.vstack([row, row, row])
        res = st.stat_M(X, rng.standard_normal(6))
        assert res.pair == (0, 0)

    def test_row_reordering(self, rng):
        X, y = rng.standard_normal((5, 12)), rng.standard_normal(12)
        perm = rng.permutation(5)
        a, b = st.stat_M(X, y).pair
        a2, b2 = st.stat_M(X[perm], y).pair
        assert sorted((perm[a2], perm[b2])) == sorted((a, b))

    def test_blocks_agree(self, rng, monkeypatch):
        X, y = rng.standard_normal((12, 10)), rng.standard_normal(10)
        full = st.stat_M(X, y, keep_pairs=True)
        monkeypatch.setattr(st, "PAIR_BLOCK", 7)
        blocked = st.stat_M(X, y)
        assert blocked.value == full.value and blocked.pair == full.pair

    def test_errors(self, rng):
        with pytest.raises(ConstantOutcome):
            st.stat_M(rng.standard_normal((2, 5)), np.ones(5))
        with pytest.raises(AllPairsDegenerate):
            st.stat_M(np.ones((3, 5)), rng.standard_normal(5))
        with pytest.raises(ValueError):
            st.stat_M(rng.standard_normal((2, 2)), [1.0, 2.0])

    def test_affine_invariance(self, rng):
        X, y = rng.standard_normal((4, 15)), rng.standard_normal(15)
        assert st.stat_M(X, -2 * y + 5).value == pytest.approx(st.stat_M(X, y).value, rel=1e-12)


def test_compute_dispatch(toy):
    X, y = toy
    assert st.compute("S", X, y) == -10
    with pytest.raises(ValueError):
        st.compute("Z", X, y)
