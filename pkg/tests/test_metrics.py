"""Tests for accuracy, V-measure, and UAS."""

import numpy as np
import pytest
from numpy.testing import assert_allclose

from latentgrad.metrics import accuracy, uas, v_measure


class TestAccuracy:
    def test_identical(self):
        assert accuracy([1, 2, 3], [1, 2, 3]) == 1.0

    def test_complementary(self):
        assert accuracy([0, 1, 0], [1, 0, 1]) == 0.0

    def test_half(self):
        assert accuracy([1, 1, 0, 0], [1, 1, 1, 1]) == 0.5

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            accuracy([1, 2], [1, 2, 3])

    def test_constant_predictor_majority(self):
        rng = np.random.default_rng(0)
        true = rng.integers(0, 2, size=500)
        pred = np.zeros(500, dtype=int)
        assert accuracy(pred, true) == np.mean(true == 0)


class TestVMeasure:
    def test_perfect(self):
        s = v_measure([0, 0, 1, 1], [0, 0, 1, 1])
        assert s.v_measure == 1.0

    def test_permuted_labels_perfect(self):
        s = v_measure([2, 2, 0, 0], [0, 0, 1, 1])
        assert s.v_measure == 1.0

    def test_single_cluster_degenerate(self):
        s = v_measure([0, 0, 0, 0], [0, 0, 1, 1])
        assert s.homogeneity == 0.0
        assert s.v_measure == 0.0

    def test_zero_entropy_truth_convention(self):
        s = v_measure([0, 1, 0, 1], [0, 0, 0, 0])
        assert s.homogeneity == 1.0

    def test_permutation_invariance(self):
        """v(sigma(pred), true) == v(pred, true) for 100 random bijections."""
        rng = np.random.default_rng(1)
        true = rng.integers(0, 4, size=200)
        pred = rng.integers(0, 5, size=200)
        base = v_measure(pred, true).v_measure
        for _ in range(100):
            perm = rng.permutation(5)
            assert v_measure(perm[pred], true).v_measure == base

    def test_symmetric_in_roles(self):
        rng = np.random.default_rng(2)
        for _ in range(20):
            a = rng.integers(0, 4, size=100)
            b = rng.integers(0, 3, size=100)
            assert_allclose(v_measure(a, b).v_measure, v_measure(b, a).v_measure)
            assert_allclose(v_measure(a, b).homogeneity, v_measure(b, a).completeness)

    def test_matches_hand_computation(self):
        # contingency [[2, 1], [0, 3]]: worked by hand with natural logs
        pred = [0, 0, 1, 1, 1, 1]
        true = [0, 0, 0, 1, 1, 1]
        n = 6
        h_true = -(3 / n * np.log(3 / n)) * 2
        h_pred = -(2 / n * np.log(2 / n)) - (4 / n * np.log(4 / n))
        h_t_given_p = 4 / n * (-(1 / 4) * np.log(1 / 4) - (3 / 4) * np.log(3 / 4))
        h_p_given_t = 3 / n * (-(2 / 3) * np.log(2 / 3) - (1 / 3) * np.log(1 / 3))
        h = 1 - h_t_given_p / h_true
        c = 1 - h_p_given_t / h_pred
        expected = 2 * h * c / (h + c)
        s = v_measure(pred, true)
        assert_allclose(s.homogeneity, h, rtol=1e-12)
        assert_allclose(s.completeness, c, rtol=1e-12)
        assert_allclose(s.v_measure, expected, rtol=1e-12)

    def test_bounds(self):
        rng = np.random.default_rng(3)
        for _ in range(50):
            pred = rng.integers(0, rng.integers(1, 6), size=50)
            true = rng.integers(0, rng.integers(2, 6), size=50)
            s = v_measure(pred, true)
            for val in (s.homogeneity, s.completeness, s.v_measure):
                assert 0.0 <= val <= 1.0 + 1e-12


class TestUas:
    def test_identical(self):
        assert uas([[0, 1], [2, 0]], [[0, 1], [2, 0]]) == 1.0

    def test_two_single_root_trees_disagree_everywhere(self):
        # L=2: the two single-root projective trees are {0->1, 1->2} and
        # {0->2, 2->1}; head arrays [0, 1] and [2, 0] differ at both tokens.
        assert uas([[0, 1]], [[2, 0]]) == 0.0

    def test_token_weighted_pooling(self):
        # 1 of 2 correct in the first sentence, 3 of 3 in the second
        assert uas([[0, 0], [0, 1, 2]], [[0, 1], [0, 1, 2]]) == 4 / 5

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            uas([[0, 1]], [[0, 1], [0, 1]])
        with pytest.raises(ValueError):
            uas([[0, 1]], [[0, 1, 2]])
